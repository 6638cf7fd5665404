// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "nn/layers.h"

namespace gsav::diffusion {

// Shared caption vocabulary. Captions are templated from the texture
// generator's sampled attributes, so a small closed vocabulary suffices.
const std::vector<std::string>& vocabulary();
int vocab_id(const std::string& word);                 // throws on unknown word
std::vector<int> tokenize(const std::string& text);    // whitespace split

// Token embedding + one self-attention layer. Empty input returns the
// learned null-text embedding (also used when the condition is dropped).
class TextEncoder {
 public:
  TextEncoder() = default;
  TextEncoder(nn::Init ctx, int dim, int max_len = 16);

  nn::Value encode(const std::vector<int>& tokens) const;
  nn::Value null_embedding() const { return null_; }
  int dim() const { return dim_; }

 private:
  int dim_ = 0, max_len_ = 0;
  nn::Value table_, pos_, null_;
  nn::LayerNormL ln1_, ln2_;
  nn::AttnBlock attn_;
  nn::FeedForward ffn_;
};

// Bias-free conv pyramid over the face crop, projected to a fixed number of
// identity tokens. Dropped condition returns the learned null tokens.
class FaceEncoder {
 public:
  FaceEncoder() = default;
  FaceEncoder(nn::Init ctx, int face_res, int tokens, int dim);

  // face: [3, face_res, face_res]; pass nullptr for a dropped condition.
  nn::Value encode(const Tensor* face) const;
  nn::Value null_tokens() const { return null_; }
  int tokens() const { return tokens_; }
  int dim() const { return dim_; }
  int face_res() const { return face_res_; }

 private:
  int face_res_ = 0, tokens_ = 0, dim_ = 0;
  nn::Conv2d c1_, c2_, c3_;
  nn::GroupNormL n1_, n2_, n3_;
  nn::Linear proj_;
  nn::Value null_;
};

}  // namespace gsav::diffusion
