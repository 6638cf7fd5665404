// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "diffusion/denoiser.h"

#include <cmath>
#include <stdexcept>

namespace gsav::diffusion {

using nn::Value;

Tensor time_embedding(double t, int dim) {
  Tensor out({1, dim});
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / std::max(1, half - 1));
    out[i] = static_cast<float>(std::sin(t * freq));
    out[half + i] = static_cast<float>(std::cos(t * freq));
  }
  return out;
}

ResBlock ResBlock::make(nn::Init ctx, const std::string& name, int cin, int cout,
                        int temb_dim) {
  nn::Init c = ctx.sub(name);
  ResBlock r;
  r.n1 = nn::GroupNormL::make(c, "n1", cin, std::min(8, cin));
  r.c1 = nn::Conv2d::make(c, "c1", cin, cout, 3, 1, 1);
  r.emb = nn::Linear::make(c, "emb", temb_dim, cout);
  r.n2 = nn::GroupNormL::make(c, "n2", cout, std::min(8, cout));
  r.c2 = nn::Conv2d::make(c, "c2", cout, cout, 3, 1, 1);
  r.has_skip = cin != cout;
  if (r.has_skip) r.skip = nn::Conv2d::make(c, "skip", cin, cout, 1, 1, 0);
  return r;
}

Value ResBlock::fwd(const Value& x, const Value& temb) const {
  Value h = c1.fwd(nn::silu(n1.fwd(x)));
  Value e = emb.fwd(nn::silu(temb));                       // [1,cout]
  h = nn::add_channel_bias(h, nn::reshape(e, {e->val.dim(1)}));
  h = c2.fwd(nn::silu(n2.fwd(h)));
  return nn::add(has_skip ? skip.fwd(x) : x, h);
}

BackboneSite BackboneSite::make(nn::Init ctx, const std::string& name, int C,
                                int text_dim, int heads) {
  nn::Init c = ctx.sub(name);
  BackboneSite s;
  s.ln = nn::LayerNormL::make(c, "ln", C);
  s.self_attn = nn::AttnBlock::make(c, "self", C, C, heads);
  s.ln_txt = nn::LayerNormL::make(c, "ln_txt", C);
  s.text = nn::AttnBlock::make(c, "txt", C, text_dim, heads);
  return s;
}

AdapterSite AdapterSite::make(nn::Init ctx, const std::string& name, int C,
                              int face_dim, int heads) {
  nn::Init c = ctx.sub(name);
  AdapterSite s;
  s.ln_ref = nn::LayerNormL::make(c, "ln_ref", C);
  s.global = nn::AttnBlock::make(c, "global", C, C, heads, /*zero_out=*/true);
  s.local = nn::AttnBlock::make(c, "local", C, face_dim, heads, /*zero_out=*/true);
  s.row = nn::AttnBlock::make(c, "row", C, C, heads, /*zero_out=*/true);
  return s;
}

namespace {

int heads_for(int c) { return std::max(1, c / 32); }

// Row-wise cross-view attention: tokens sharing a latent row attend jointly
// across all views.
Value rowwise_attention(const nn::AttnBlock& attn, const Value& hn, int N, int H, int W) {
  std::vector<int> perm(static_cast<size_t>(N) * H * W);
  std::vector<int> inv(perm.size());
  int k = 0;
  for (int r = 0; r < H; ++r)
    for (int n = 0; n < N; ++n)
      for (int x = 0; x < W; ++x) {
        const int src = (n * H + r) * W + x;
        perm[k] = src;
        inv[src] = k;
        ++k;
      }
  Value grouped = nn::gather_rows(hn, perm);
  std::vector<Value> outs;
  outs.reserve(H);
  for (int r = 0; r < H; ++r) {
    Value g = nn::slice_rows(grouped, r * N * W, N * W);
    outs.push_back(attn.fwd(g, g));
  }
  Value cat = outs.size() == 1 ? outs[0] : nn::concat_rows(outs);
  return nn::gather_rows(cat, inv);
}

}  // namespace

UNetBackbone::UNetBackbone(nn::Init ctx, const DenoiserConfig& cfg) : cfg_(cfg) {
  const auto& w = cfg.widths;
  stem_ = nn::Conv2d::make(ctx, "stem", cfg.in_channels, w[0], 3, 1, 1);
  temb1_ = nn::Linear::make(ctx, "temb1", 64, cfg.temb_dim);
  temb2_ = nn::Linear::make(ctx, "temb2", cfg.temb_dim, cfg.temb_dim);
  for (int i = 0; i < 4; ++i)
    enc_[i] = ResBlock::make(ctx, "enc" + std::to_string(i), w[i], w[i], cfg.temb_dim);
  for (int i = 0; i < 3; ++i)
    down_[i] = nn::Conv2d::make(ctx, "down" + std::to_string(i), w[i], w[i + 1], 3, 2, 1);
  mid1_ = ResBlock::make(ctx, "mid1", w[3], w[3], cfg.temb_dim);
  mid2_ = ResBlock::make(ctx, "mid2", w[3], w[3], cfg.temb_dim);
  for (int i = 0; i < 3; ++i)
    up_[i] = nn::Conv2d::make(ctx, "up" + std::to_string(i), w[i + 1], w[i], 3, 1, 1);
  for (int i = 0; i < 4; ++i)
    dec_[i] = ResBlock::make(ctx, "dec" + std::to_string(i), 2 * w[i], w[i], cfg.temb_dim);
  const int site_c[kSites] = {w[2], w[3], w[3], w[3], w[2]};
  for (int s = 0; s < kSites; ++s)
    sites_[s] = BackboneSite::make(ctx, "site" + std::to_string(s), site_c[s],
                                   cfg.text_dim, heads_for(site_c[s]));
  out_n_ = nn::GroupNormL::make(ctx, "out_n", w[0], std::min(8, w[0]));
  out_c_ = nn::Conv2d::make(ctx, "out_c", w[0], cfg.in_channels, 3, 1, 1, /*bias=*/true,
                            /*zero_init=*/true);
}

Value UNetBackbone::site_fwd(int site_idx, const Value& x, const Value& text,
                             const AdapterInputs* ad,
                             std::vector<nn::Value>* collect_ref) const {
  const int N = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
  const BackboneSite& bs = sites_[site_idx];

  Value h = nn::chw_to_tokens(x);
  if (collect_ref) collect_ref->push_back(h);
  Value hn = bs.ln.fwd(h);

  // Per-view self-attention.
  std::vector<Value> sv;
  sv.reserve(N);
  for (int n = 0; n < N; ++n) {
    Value q = nn::slice_rows(hn, n * H * W, H * W);
    sv.push_back(bs.self_attn.fwd(q, q));
  }
  Value acc = sv.size() == 1 ? sv[0] : nn::concat_rows(sv);

  if (ad && ad->sites) {
    const AdapterSite& as = (*ad->sites)[site_idx];
    if (ad->h_ref) {
      Value refn = as.ln_ref.fwd((*ad->h_ref)[site_idx]);
      acc = nn::add(acc, as.global.fwd(hn, refn));
    }
    if (ad->face_tokens) acc = nn::add(acc, as.local.fwd(hn, ad->face_tokens));
    acc = nn::add(acc, rowwise_attention(as.row, hn, N, H, W));
  }
  h = nn::add(acc, h);

  // Text enters through standard cross-attention.
  h = nn::add(h, bs.text.fwd(bs.ln_txt.fwd(h), text));
  return nn::tokens_to_chw(h, N, C, H, W);
}

Value UNetBackbone::fwd(const Value& z, double t_value, const Value& text,
                        const AdapterInputs* ad,
                        std::vector<nn::Value>* collect_ref) const {
  if (z->val.rank() != 4) throw std::runtime_error("denoiser: z must be [N,C,H,W]");
  if (z->val.dim(2) % 8 != 0 || z->val.dim(3) % 8 != 0)
    throw std::runtime_error("denoiser: spatial size must be divisible by 8");

  Value temb = temb2_.fwd(nn::silu(temb1_.fwd(nn::make_const(time_embedding(t_value, 64)))));
  auto pose = [&](int i) -> Value {
    return (ad && ad->pose_feats && (*ad->pose_feats)[i]) ? (*ad->pose_feats)[i] : Value{};
  };

  Value x = stem_.fwd(z);
  if (pose(0)) x = nn::add(x, pose(0));
  x = enc_[0].fwd(x, temb);
  Value skip0 = x;

  x = down_[0].fwd(x);
  if (pose(1)) x = nn::add(x, pose(1));
  x = enc_[1].fwd(x, temb);
  Value skip1 = x;

  x = down_[1].fwd(x);
  if (pose(2)) x = nn::add(x, pose(2));
  x = enc_[2].fwd(x, temb);
  x = site_fwd(0, x, text, ad, collect_ref);
  Value skip2 = x;

  x = down_[2].fwd(x);
  if (pose(3)) x = nn::add(x, pose(3));
  x = enc_[3].fwd(x, temb);
  x = site_fwd(1, x, text, ad, collect_ref);
  Value skip3 = x;

  x = mid1_.fwd(x, temb);
  x = site_fwd(2, x, text, ad, collect_ref);
  x = mid2_.fwd(x, temb);

  x = dec_[3].fwd(nn::concat_channels(x, skip3), temb);
  x = site_fwd(3, x, text, ad, collect_ref);

  x = up_[2].fwd(nn::upsample_nearest2(x));
  x = dec_[2].fwd(nn::concat_channels(x, skip2), temb);
  x = site_fwd(4, x, text, ad, collect_ref);

  x = up_[1].fwd(nn::upsample_nearest2(x));
  x = dec_[1].fwd(nn::concat_channels(x, skip1), temb);

  x = up_[0].fwd(nn::upsample_nearest2(x));
  x = dec_[0].fwd(nn::concat_channels(x, skip0), temb);

  return out_c_.fwd(nn::silu(out_n_.fwd(x)));
}

}  // namespace gsav::diffusion
