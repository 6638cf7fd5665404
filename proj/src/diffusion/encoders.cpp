// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "diffusion/encoders.h"

#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace gsav::diffusion {

const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "a",      "person", "wearing", "shirt",  "and",    "pants",  "with",
      "skin",   "red",    "green",   "blue",   "yellow", "purple", "orange",
      "cyan",   "brown",  "pale",    "tan",    "dark",   "light",  "the",
      "back",   "is",     "arms",    "legs",   "head",   "body",   "avatar"};
  return words;
}

int vocab_id(const std::string& word) {
  static const std::unordered_map<std::string, int> index = [] {
    std::unordered_map<std::string, int> m;
    const auto& v = vocabulary();
    for (size_t i = 0; i < v.size(); ++i) m[v[i]] = static_cast<int>(i);
    return m;
  }();
  auto it = index.find(word);
  if (it == index.end()) throw std::runtime_error("vocab: unknown word: " + word);
  return it->second;
}

std::vector<int> tokenize(const std::string& text) {
  std::istringstream ss(text);
  std::vector<int> out;
  std::string w;
  while (ss >> w) out.push_back(vocab_id(w));
  return out;
}

TextEncoder::TextEncoder(nn::Init ctx, int dim, int max_len)
    : dim_(dim), max_len_(max_len) {
  nn::Init c = ctx.sub("text");
  const int vocab = static_cast<int>(vocabulary().size());
  table_ = c.param_randn("table", {vocab, dim}, 0.2f);
  pos_ = c.param_randn("pos", {max_len, dim}, 0.1f);
  null_ = c.param_randn("null", {1, dim}, 0.2f);
  ln1_ = nn::LayerNormL::make(c, "ln1", dim);
  attn_ = nn::AttnBlock::make(c, "attn", dim, dim, 1);
  ln2_ = nn::LayerNormL::make(c, "ln2", dim);
  ffn_ = nn::FeedForward::make(c, "ffn", dim);
}

nn::Value TextEncoder::encode(const std::vector<int>& tokens) const {
  if (tokens.empty()) return null_;
  const int vocab = table_->val.dim(0);
  std::vector<int> idx;
  for (int t : tokens) {
    if (t < 0 || t >= vocab)
      throw std::runtime_error("encode_text: token id out of vocabulary");
    idx.push_back(t);
  }
  if (static_cast<int>(idx.size()) > max_len_) idx.resize(max_len_);
  nn::Value x = nn::gather_rows(table_, idx);
  x = nn::add(x, nn::slice_rows(pos_, 0, static_cast<int>(idx.size())));
  nn::Value hn = ln1_.fwd(x);
  x = nn::add(x, attn_.fwd(hn, hn));
  x = nn::add(x, ffn_.fwd(ln2_.fwd(x)));
  return x;
}

FaceEncoder::FaceEncoder(nn::Init ctx, int face_res, int tokens, int dim)
    : face_res_(face_res), tokens_(tokens), dim_(dim) {
  nn::Init c = ctx.sub("face");
  c1_ = nn::Conv2d::make(c, "c1", 3, 16, 3, 2, 1, /*bias=*/false);
  n1_ = nn::GroupNormL::make(c, "n1", 16, 4);
  c2_ = nn::Conv2d::make(c, "c2", 16, 32, 3, 2, 1, /*bias=*/false);
  n2_ = nn::GroupNormL::make(c, "n2", 32, 8);
  c3_ = nn::Conv2d::make(c, "c3", 32, 64, 3, 2, 1, /*bias=*/false);
  n3_ = nn::GroupNormL::make(c, "n3", 64, 8);
  const int spatial = (face_res / 8) * (face_res / 8);
  proj_ = nn::Linear::make(c, "proj", 64 * spatial, tokens * dim);
  null_ = c.param_randn("null", {tokens, dim}, 0.2f);
}

nn::Value FaceEncoder::encode(const Tensor* face) const {
  if (!face) return null_;
  if (face->rank() != 3 || face->dim(0) != 3 || face->dim(1) != face_res_ ||
      face->dim(2) != face_res_)
    throw std::runtime_error("encode_face: face image must be [3," +
                             std::to_string(face_res_) + "," + std::to_string(face_res_) + "]");
  nn::Value x = nn::make_const(face->reshaped({1, 3, face_res_, face_res_}));
  x = nn::silu(n1_.fwd(c1_.fwd(x)));
  x = nn::silu(n2_.fwd(c2_.fwd(x)));
  x = nn::silu(n3_.fwd(c3_.fwd(x)));
  x = nn::reshape(x, {1, static_cast<int>(x->val.numel())});
  x = proj_.fwd(x);
  return nn::reshape(x, {tokens_, dim_});
}

}  // namespace gsav::diffusion
