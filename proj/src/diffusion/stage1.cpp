// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "diffusion/stage1.h"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace gsav::diffusion {

using nn::Value;

Stage1Model::Stage1Model(const Stage1Config& cfg, uint64_t seed)
    : cfg_(cfg), init_rng_(seed) {
  if (cfg.resolution % 8 != 0)
    throw std::runtime_error("stage1: resolution must be divisible by 8");
  sched_ = make_schedule(cfg.T, cfg.beta_start, cfg.beta_end);

  DenoiserConfig dc;
  dc.in_channels = 3;
  dc.widths = cfg.widths();
  dc.text_dim = cfg.text_dim;
  dc.face_dim = cfg.face_dim;

  nn::Init root{store_, init_rng_, "backbone", "unet."};
  unet_ = UNetBackbone(root, dc);
  nn::Init ref{store_, init_rng_, "reference_net", "refnet."};
  refnet_ = UNetBackbone(ref, dc);
  nn::Init pose{store_, init_rng_, "pose_adapter", "pose."};
  pose_ = PoseAdapter(pose, dc.widths);
  nn::Init adg{store_, init_rng_, "id_adapter_g", "adg."};
  const int site_c[UNetBackbone::kSites] = {dc.widths[2], dc.widths[3], dc.widths[3],
                                            dc.widths[3], dc.widths[2]};
  for (int s = 0; s < UNetBackbone::kSites; ++s)
    adapter_sites_[s] = AdapterSite::make(adg, "site" + std::to_string(s), site_c[s],
                                          cfg.face_dim, std::max(1, site_c[s] / 32));
  nn::Init te{store_, init_rng_, "text_encoder", "tenc."};
  text_ = TextEncoder(te, cfg.text_dim);
  nn::Init fe{store_, init_rng_, "face_encoder", "fenc."};
  face_ = FaceEncoder(fe, cfg.face_res, cfg.face_tokens, cfg.face_dim);

  // Warmup phase trains the backbone only.
  for (auto& e : store_.entries()) e.trainable = (e.group == "backbone");
}

void Stage1Model::set_frozen_flag(bool f) {
  frozen_ = f;
  for (auto& e : store_.entries())
    e.trainable = f ? (e.group != "backbone") : (e.group == "backbone");
}

void Stage1Model::freeze_backbone() {
  // Mirror backbone weights into the reference net, pairing entries by
  // registration order (both nets register identical structures).
  std::vector<nn::ParamStore::Entry*> bb, rn;
  for (auto& e : store_.entries()) {
    if (e.group == "backbone") bb.push_back(&e);
    if (e.group == "reference_net") rn.push_back(&e);
  }
  if (bb.size() != rn.size())
    throw std::runtime_error("freeze_backbone: group size mismatch");
  for (size_t i = 0; i < bb.size(); ++i) {
    if (!bb[i]->v->val.same_shape(rn[i]->v->val))
      throw std::runtime_error("freeze_backbone: shape mismatch at " + rn[i]->name);
    std::memcpy(rn[i]->v->val.data(), bb[i]->v->val.data(),
                sizeof(float) * bb[i]->v->val.numel());
  }
  set_frozen_flag(true);
}

Value Stage1Model::denoise_val(const Tensor& z_t, double t, const Condition& c,
                               bool use_adapters) const {
  if (z_t.rank() != 4 || z_t.dim(1) != 3)
    throw std::runtime_error("denoise: z must be [N,3,H,W]");
  const int N = z_t.dim(0), H = z_t.dim(2), W = z_t.dim(3);

  Value z = nn::make_const(z_t);
  Value text_seq = text_.encode(c.text);

  if (!use_adapters) return unet_.fwd(z, t, text_seq, nullptr, nullptr);

  // Reference branch: the mirrored net runs on the clean reference at t=0
  // and exposes its attention-site inputs. A dropped reference is a zero
  // image.
  Tensor ref = c.reference.defined() ? c.reference : Tensor::zeros({3, H, W});
  if (ref.dim(1) != H || ref.dim(2) != W)
    throw std::runtime_error("denoise: reference resolution mismatch");
  std::vector<Value> h_ref;
  refnet_.fwd(nn::make_const(ref.reshaped({1, 3, H, W})), 0.0, text_.null_embedding(),
              nullptr, &h_ref);

  Value face_tokens = face_.encode(c.face.defined() ? &c.face : nullptr);

  Tensor geom = c.geometry.defined() ? c.geometry : Tensor::zeros({N, 3, H, W});
  Tensor skel = c.skeleton.defined() ? c.skeleton : Tensor::zeros({N, 1, H, W});
  if (geom.dim(0) != N || skel.dim(0) != N)
    throw std::runtime_error("denoise: pose map view count mismatch");
  PoseAdapter::Pyramid pyr = pose_.fwd(nn::make_const(geom), nn::make_const(skel));

  UNetBackbone::AdapterInputs ad;
  ad.sites = &adapter_sites_;
  ad.pose_feats = &pyr.feats;
  ad.h_ref = &h_ref;
  ad.face_tokens = face_tokens;
  return unet_.fwd(z, t, text_seq, &ad, nullptr);
}

Tensor Stage1Model::denoise(const Tensor& z_t, int t, const Condition& c,
                            bool use_adapters) const {
  nn::NoGradGuard ng;
  return denoise_val(z_t, t, c, use_adapters)->val;
}

DropDecision Stage1Model::sample_drop_decisions(Rng& rng, double drop_prob,
                                                double face_mask_prob) {
  // Exactly five draws per call keeps the stream alignment fixed.
  DropDecision d;
  d.drop_text = rng.uniform() < drop_prob;
  d.drop_reference = rng.uniform() < drop_prob;
  d.drop_face = rng.uniform() < drop_prob;
  d.drop_pose = rng.uniform() < drop_prob;
  d.mask_face = rng.uniform() < face_mask_prob;
  return d;
}

Condition Stage1Model::apply_drops(const Condition& c, const DropDecision& d,
                                   const geom::FaceBox* ref_box) const {
  Condition out = c;
  if (d.drop_text) out.text.clear();
  if (d.drop_reference) {
    out.reference = Tensor();
  } else if (d.mask_face && ref_box && c.reference.defined()) {
    out.reference = c.reference.clone();
    const int H = out.reference.dim(1), W = out.reference.dim(2);
    float* p = out.reference.data();
    for (int ch = 0; ch < 3; ++ch)
      for (int y = ref_box->y0; y < std::min(H, ref_box->y0 + ref_box->side); ++y)
        for (int x = ref_box->x0; x < std::min(W, ref_box->x0 + ref_box->side); ++x)
          p[(static_cast<int64_t>(ch) * H + y) * W + x] = 0.0f;
  }
  if (d.drop_face) out.face = Tensor();
  if (d.drop_pose) {
    out.geometry = Tensor();
    out.skeleton = Tensor();
  }
  return out;
}

namespace {

Tensor to_latent(const Tensor& img01) {
  Tensor z(img01.shape());
  const float* s = img01.data();
  float* d = z.data();
  for (int64_t i = 0; i < z.numel(); ++i) d[i] = 2.0f * s[i] - 1.0f;
  return z;
}

}  // namespace

float Stage1Model::train_step(const Stage1Batch& batch, nn::AdamW& opt, Rng& rng) {
  const DropDecision d =
      sample_drop_decisions(rng, cfg_.drop_prob, cfg_.face_mask_prob);
  const Condition cond =
      apply_drops(batch.cond, d, batch.has_face_box ? &batch.ref_face_box : nullptr);

  const Tensor z0 = to_latent(batch.targets);
  const int t = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg_.T)));
  const Tensor eps = randn_like(z0, rng);
  const Tensor z_t = add_noise(z0, t, eps, sched_);

  Value pred = denoise_val(z_t, t, cond, true);
  Value loss = nn::mse(pred, nn::make_const(eps));
  store_.zero_grads();
  nn::backward(loss);
  opt.step(store_);
  return loss->val.item();
}

float Stage1Model::warmup_step(const Tensor& image, nn::AdamW& opt, Rng& rng) {
  Tensor img = image.rank() == 3
                   ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)})
                   : image;
  const Tensor z0 = to_latent(img);
  const int t = static_cast<int>(rng.uniform_int(static_cast<uint64_t>(cfg_.T)));
  const Tensor eps = randn_like(z0, rng);
  const Tensor z_t = add_noise(z0, t, eps, sched_);
  Condition null_cond;
  Value pred = denoise_val(z_t, t, null_cond, /*use_adapters=*/false);
  Value loss = nn::mse(pred, nn::make_const(eps));
  store_.zero_grads();
  nn::backward(loss);
  opt.step(store_);
  return loss->val.item();
}

std::vector<Tensor> Stage1Model::sample_cfg(const Condition& c, double g, int steps,
                                            Rng& rng, const SampleTrace& trace) const {
  if (g < 0.0) throw std::runtime_error("sample_cfg: guidance scale must be >= 0");
  if (steps < 1) throw std::runtime_error("sample_cfg: steps must be >= 1");
  nn::NoGradGuard ng;

  const int N = cfg_.views, H = cfg_.resolution, W = cfg_.resolution;
  Tensor x({N, 3, H, W});
  {
    float* p = x.data();
    for (int64_t i = 0; i < x.numel(); ++i) p[i] = static_cast<float>(rng.normal());
  }

  // Descending, deduplicated step subsequence of the training schedule.
  std::vector<int> ts;
  for (int i = 0; i < steps; ++i) {
    const int t = static_cast<int>(std::lround(
        static_cast<double>(cfg_.T - 1) * (steps - 1 - i) / std::max(1, steps - 1)));
    if (ts.empty() || t < ts.back()) ts.push_back(t);
  }

  const Condition uncond = apply_drops(
      c, DropDecision{true, true, true, true, false}, nullptr);

  for (size_t k = 0; k < ts.size(); ++k) {
    const int t = ts[k];
    Tensor eps_hat;
    if (g == 0.0) {
      eps_hat = denoise(x, t, uncond, true);
    } else if (g == 1.0) {
      eps_hat = denoise(x, t, c, true);
    } else {
      const Tensor e_u = denoise(x, t, uncond, true);
      const Tensor e_c = denoise(x, t, c, true);
      eps_hat = Tensor(e_u.shape());
      const float* pu = e_u.data();
      const float* pc = e_c.data();
      float* pe = eps_hat.data();
      const float gf = static_cast<float>(g);
      for (int64_t i = 0; i < eps_hat.numel(); ++i)
        pe[i] = pu[i] + gf * (pc[i] - pu[i]);
    }

    const double ab_t = sched_.alpha_bars[t];
    const double sq_ab = std::sqrt(ab_t);
    const double sq_1mab = std::sqrt(1.0 - ab_t);
    Tensor x0(x.shape());
    {
      const float* px = x.data();
      const float* pe = eps_hat.data();
      float* p0 = x0.data();
      for (int64_t i = 0; i < x.numel(); ++i) {
        double v = (px[i] - sq_1mab * pe[i]) / sq_ab;
        p0[i] = static_cast<float>(std::min(1.0, std::max(-1.0, v)));
      }
    }

    if (k + 1 == ts.size()) {
      x = x0;
    } else {
      const double ab_p = sched_.alpha_bars[ts[k + 1]];
      const double var =
          (1.0 - ab_p) / (1.0 - ab_t) * (1.0 - ab_t / ab_p);
      const double sigma = std::sqrt(std::max(0.0, var));
      const double dir = std::sqrt(std::max(0.0, 1.0 - ab_p - sigma * sigma));
      Tensor xn(x.shape());
      const float* p0 = x0.data();
      const float* pe = eps_hat.data();
      float* pn = xn.data();
      const double s_abp = std::sqrt(ab_p);
      for (int64_t i = 0; i < x.numel(); ++i)
        pn[i] = static_cast<float>(s_abp * p0[i] + dir * pe[i] +
                                   sigma * rng.normal());
      x = xn;
    }
    if (trace) trace(t, eps_hat, x);
  }

  std::vector<Tensor> out;
  const int64_t plane = static_cast<int64_t>(3) * H * W;
  for (int n = 0; n < N; ++n) {
    Tensor img({3, H, W});
    const float* px = x.data() + n * plane;
    float* pi = img.data();
    for (int64_t i = 0; i < plane; ++i)
      pi[i] = std::min(1.0f, std::max(0.0f, 0.5f * (px[i] + 1.0f)));
    out.push_back(img);
  }
  return out;
}

}  // namespace gsav::diffusion
