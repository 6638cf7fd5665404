// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "nn/layers.h"

namespace gsav::diffusion {

struct DenoiserConfig {
  int in_channels = 3;
  std::array<int, 4> widths = {32, 64, 96, 128};  // strides 1,2,4,8
  int temb_dim = 128;
  int text_dim = 64;
  int face_dim = 64;
};

struct ResBlock {
  nn::GroupNormL n1;
  nn::Conv2d c1;
  nn::Linear emb;
  nn::GroupNormL n2;
  nn::Conv2d c2;
  nn::Conv2d skip;
  bool has_skip = false;

  static ResBlock make(nn::Init ctx, const std::string& name, int cin, int cout,
                       int temb_dim);
  nn::Value fwd(const nn::Value& x, const nn::Value& temb) const;
};

// Backbone half of an attention site: per-view self-attention plus standard
// text cross-attention.
struct BackboneSite {
  nn::LayerNormL ln;
  nn::AttnBlock self_attn;
  nn::LayerNormL ln_txt;
  nn::AttnBlock text;

  static BackboneSite make(nn::Init ctx, const std::string& name, int C, int text_dim,
                           int heads);
};

// Adapter half (Eq. 2's extra branches): reference cross-attention, face
// cross-attention, and row-wise cross-view attention, all with
// zero-initialized output projections.
struct AdapterSite {
  nn::LayerNormL ln_ref;
  nn::AttnBlock global;
  nn::AttnBlock local;
  nn::AttnBlock row;

  static AdapterSite make(nn::Init ctx, const std::string& name, int C, int face_dim,
                          int heads);
};

// Four-stage encoder/decoder denoiser. The same structure serves as the
// reference feature extractor (a weight-mirrored copy run at t=0 exposing
// its attention-site input tokens).
class UNetBackbone {
 public:
  static constexpr int kSites = 5;  // enc2, enc3, mid, dec3, dec2

  UNetBackbone() = default;
  UNetBackbone(nn::Init ctx, const DenoiserConfig& cfg);

  struct AdapterInputs {
    const std::array<AdapterSite, kSites>* sites = nullptr;
    const std::array<nn::Value, 4>* pose_feats = nullptr;  // per encoder stage
    const std::vector<nn::Value>* h_ref = nullptr;         // per site, [P,C]
    nn::Value face_tokens;                                 // [K, face_dim]
  };

  // z [N,C,H,W]; text [L,text_dim]; H and W divisible by 8. When
  // collect_ref is set, the per-site input tokens are appended to it.
  nn::Value fwd(const nn::Value& z, double t_value, const nn::Value& text,
                const AdapterInputs* ad, std::vector<nn::Value>* collect_ref) const;

  const DenoiserConfig& config() const { return cfg_; }

 private:
  nn::Value site_fwd(int site_idx, const nn::Value& x, const nn::Value& text,
                     const AdapterInputs* ad, std::vector<nn::Value>* collect_ref) const;

  DenoiserConfig cfg_;
  nn::Conv2d stem_;
  nn::Linear temb1_, temb2_;
  std::array<ResBlock, 4> enc_;
  std::array<nn::Conv2d, 3> down_;
  ResBlock mid1_, mid2_;
  std::array<nn::Conv2d, 3> up_;
  std::array<ResBlock, 4> dec_;
  std::array<BackboneSite, kSites> sites_;
  nn::GroupNormL out_n_;
  nn::Conv2d out_c_;
};

// Sinusoidal position embedding of a (possibly fractional) step index.
Tensor time_embedding(double t, int dim);

}  // namespace gsav::diffusion
