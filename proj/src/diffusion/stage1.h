// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>

#include "diffusion/denoiser.h"
#include "diffusion/encoders.h"
#include "diffusion/pose_adapter.h"
#include "diffusion/schedule.h"
#include "geom/camera.h"
#include "nn/optimizer.h"

namespace gsav::diffusion {

struct Stage1Config {
  int views = 6;
  int resolution = 64;
  int T = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int sample_steps = 50;
  double guidance_scale = 3.0;
  double drop_prob = 0.1;       // per-condition CFG dropout
  double face_mask_prob = 0.3;  // reference face-box masking
  float lr = 5e-5f;
  float warmup_lr = 1e-3f;
  int warmup_steps = 500;
  int base_channels = 32;
  int face_res = 32;
  int face_tokens = 8;
  int face_dim = 64;
  int text_dim = 64;

  std::array<int, 4> widths() const {
    return {base_channels, 2 * base_channels, 3 * base_channels, 4 * base_channels};
  }
};

// The conditioning tuple c = {text, reference, face, pose}. Undefined
// tensors mean "dropped": reference and pose maps fall back to zero images,
// the face falls back to the learned null tokens.
struct Condition {
  std::vector<int> text;  // empty = null text
  Tensor reference;       // [3,H,W]
  Tensor face;            // [3,face_res,face_res]
  Tensor geometry;        // [N,3,H,W]
  Tensor skeleton;        // [N,1,H,W]
};

struct DropDecision {
  bool drop_text = false, drop_reference = false, drop_face = false, drop_pose = false;
  bool mask_face = false;
};

struct Stage1Batch {
  Tensor targets;  // [N,3,H,W], values in [0,1]
  Condition cond;
  geom::FaceBox ref_face_box;
  bool has_face_box = false;
};

class Stage1Model {
 public:
  Stage1Model(const Stage1Config& cfg, uint64_t seed);

  nn::ParamStore& params() { return store_; }
  const NoiseSchedule& schedule() const { return sched_; }
  const Stage1Config& config() const { return cfg_; }

  // eps prediction. use_adapters=false runs the bare backbone (text path
  // included); at initialization both paths agree bit-for-bit.
  nn::Value denoise_val(const Tensor& z_t, double t, const Condition& c,
                        bool use_adapters = true) const;
  Tensor denoise(const Tensor& z_t, int t, const Condition& c,
                 bool use_adapters = true) const;

  // The per-step stochastic decisions, factored out so their statistics can
  // be measured directly. Always consumes exactly five uniform draws.
  static DropDecision sample_drop_decisions(Rng& rng, double drop_prob,
                                            double face_mask_prob);
  Condition apply_drops(const Condition& c, const DropDecision& d,
                        const geom::FaceBox* ref_box) const;

  // One adapter-phase optimization step (Eq. 3 objective); returns the loss.
  float train_step(const Stage1Batch& batch, nn::AdamW& opt, Rng& rng);
  // Unconditional single-view backbone pretraining step.
  float warmup_step(const Tensor& image, nn::AdamW& opt, Rng& rng);

  // Copies backbone weights into the reference net and flips the trainable
  // flags: backbone frozen, adapters and encoders trainable.
  void freeze_backbone();
  bool backbone_frozen() const { return frozen_; }
  void set_frozen_flag(bool f);  // for checkpoint restore

  using SampleTrace =
      std::function<void(int t, const Tensor& eps_hat, const Tensor& x_next)>;
  // Ancestral DDPM sampling with classifier-free guidance; returns N images
  // [3,H,W] in [0,1]. g==0 and g==1 evaluate only the matching branch.
  std::vector<Tensor> sample_cfg(const Condition& c, double g, int steps, Rng& rng,
                                 const SampleTrace& trace = nullptr) const;

 private:
  Stage1Config cfg_;
  nn::ParamStore store_;
  Rng init_rng_;
  NoiseSchedule sched_;
  UNetBackbone unet_, refnet_;
  PoseAdapter pose_;
  std::array<AdapterSite, UNetBackbone::kSites> adapter_sites_;
  TextEncoder text_;
  FaceEncoder face_;
  bool frozen_ = false;
};

}  // namespace gsav::diffusion
