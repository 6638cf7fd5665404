// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "nn/layers.h"

namespace gsav::diffusion {

// Multi-scale pose conditioning: the geometry-map and skeleton-map branches
// each run their own conv pyramid with a per-scale self-attention, the two
// features are summed per scale, and zero-initialized projections hand them
// to the denoiser encoder stages. Fresh adapters are an exact no-op.
class PoseAdapter {
 public:
  PoseAdapter() = default;
  // widths: channel count of the four denoiser encoder stages (strides
  // 1,2,4,8 of the latent resolution).
  PoseAdapter(nn::Init ctx, std::array<int, 4> widths);

  struct Pyramid {
    std::array<nn::Value, 4> feats;  // [N,C_i,H_i,W_i], zero at init
  };

  // geometry [N,3,H,W], skeleton [N,1,H,W]. Throws on view-count mismatch.
  Pyramid fwd(const nn::Value& geometry, const nn::Value& skeleton) const;

 private:
  struct Branch {
    std::array<nn::Conv2d, 4> conv;
    std::array<nn::GroupNormL, 4> norm;
    std::array<nn::LayerNormL, 4> attn_ln;
    std::array<nn::AttnBlock, 4> attn;
  };
  Branch make_branch(nn::Init ctx, int in_channels) const;
  std::array<nn::Value, 4> run_branch(const Branch& b, const nn::Value& x) const;

  std::array<int, 4> widths_{};
  Branch geom_, skel_;
  std::array<nn::Conv2d, 4> proj_;  // zero-initialized 1x1 output projections
};

}  // namespace gsav::diffusion
