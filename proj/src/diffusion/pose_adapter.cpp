// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "diffusion/pose_adapter.h"

#include <stdexcept>

namespace gsav::diffusion {

using nn::Value;

PoseAdapter::Branch PoseAdapter::make_branch(nn::Init ctx, int in_channels) const {
  Branch b;
  int cin = in_channels;
  for (int i = 0; i < 4; ++i) {
    const int cout = widths_[i];
    const int stride = i == 0 ? 1 : 2;
    b.conv[i] = nn::Conv2d::make(ctx, "conv" + std::to_string(i), cin, cout, 3, stride, 1);
    b.norm[i] = nn::GroupNormL::make(ctx, "norm" + std::to_string(i), cout,
                                     std::min(8, cout));
    b.attn_ln[i] = nn::LayerNormL::make(ctx, "attn_ln" + std::to_string(i), cout);
    b.attn[i] = nn::AttnBlock::make(ctx, "attn" + std::to_string(i), cout, cout,
                                    std::max(1, cout / 32));
    cin = cout;
  }
  return b;
}

PoseAdapter::PoseAdapter(nn::Init ctx, std::array<int, 4> widths) : widths_(widths) {
  geom_ = make_branch(ctx.sub("geom"), 3);
  skel_ = make_branch(ctx.sub("skel"), 1);
  for (int i = 0; i < 4; ++i)
    proj_[i] = nn::Conv2d::make(ctx, "proj" + std::to_string(i), widths[i], widths[i], 1,
                                1, 0, /*bias=*/true, /*zero_init=*/true);
}

std::array<Value, 4> PoseAdapter::run_branch(const Branch& b, const Value& x) const {
  std::array<Value, 4> out;
  Value h = x;
  for (int i = 0; i < 4; ++i) {
    h = nn::silu(b.norm[i].fwd(b.conv[i].fwd(h)));
    // Per-scale self-attention, one view at a time.
    const int N = h->val.dim(0), C = h->val.dim(1), H = h->val.dim(2), W = h->val.dim(3);
    Value tokens = nn::chw_to_tokens(h);
    std::vector<Value> per_view;
    per_view.reserve(N);
    for (int n = 0; n < N; ++n) {
      Value tv = nn::slice_rows(tokens, n * H * W, H * W);
      Value tn = b.attn_ln[i].fwd(tv);
      per_view.push_back(nn::add(tv, b.attn[i].fwd(tn, tn)));
    }
    h = nn::tokens_to_chw(per_view.size() == 1 ? per_view[0] : nn::concat_rows(per_view),
                          N, C, H, W);
    out[i] = h;
  }
  return out;
}

PoseAdapter::Pyramid PoseAdapter::fwd(const Value& geometry, const Value& skeleton) const {
  if (geometry->val.rank() != 4 || skeleton->val.rank() != 4)
    throw std::runtime_error("pose_adapter: expected [N,C,H,W] maps");
  if (geometry->val.dim(0) != skeleton->val.dim(0))
    throw std::runtime_error("pose_adapter: geometry/skeleton view count mismatch");
  if (geometry->val.dim(2) != skeleton->val.dim(2) ||
      geometry->val.dim(3) != skeleton->val.dim(3))
    throw std::runtime_error("pose_adapter: geometry/skeleton resolution mismatch");

  const std::array<Value, 4> fg = run_branch(geom_, geometry);
  const std::array<Value, 4> fs = run_branch(skel_, skeleton);
  Pyramid p;
  for (int i = 0; i < 4; ++i) p.feats[i] = proj_[i].fwd(nn::add(fg[i], fs[i]));
  return p;
}

}  // namespace gsav::diffusion
