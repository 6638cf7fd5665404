// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "diffusion/encoders.h"
#include "gauss/gaussians.h"
#include "geom/camera.h"
#include "metrics/perceptual.h"
#include "nn/optimizer.h"
#include "render/renderer.h"

namespace gsav::recon {

struct Stage2Config {
  int resolution = 64;
  int patch = 8;
  int dim = 256;
  int heads = 4;
  int mvbf_blocks = 2;    // K
  int decoder_layers = 8; // L
  int ffn_mult = 2;
  int uv_res = 64;
  int face_res = 32;
  int face_tokens = 8;
  int face_dim = 64;
  float lr = 1e-5f;
  float lambda_rgb = 1.0f;
  float lambda_lpips = 1.0f;
  float lambda_face = 0.5f;
  gauss::DecodeConfig decode;
  render::RenderConfig render;
};

struct ReconBatch {
  std::vector<Tensor> views;  // N x [3,H,W] in [0,1]
  std::vector<geom::CameraParams> cameras;
  int frontal = 0;  // index of the frontal view
  Tensor face;      // [3,face_res,face_res]
  geom::FaceBox face_box;  // on the frontal view's image
  bool has_face_box = false;
  geom::PoseParams pose;
};

// Feedforward multi-view to UV-Gaussian reconstruction: patch/camera token
// encoder, MVBF fusion blocks, UV-query cross-attention decoder with gated
// facial injection in the latter half, and a zero-initialized channel head
// (a fresh model therefore emits the template-prior cloud for any input).
class Stage2Model {
 public:
  // base_points provides the UV mask; the chart layout is shared by every
  // generated avatar, so the query set is fixed at construction.
  Stage2Model(const Stage2Config& cfg, const gauss::UvBasePoints& base_points,
              uint64_t seed);

  nn::ParamStore& params() { return store_; }
  const Stage2Config& config() const { return cfg_; }

  // Fused multi-view tokens [N*P, D].
  nn::Value encode_views(const std::vector<Tensor>& views,
                         const std::vector<geom::CameraParams>& cams) const;
  nn::Value mvbf_apply(const nn::Value& tokens, int views) const;
  // UV channel map [14, uv_res*uv_res].
  nn::Value uv_decode(const nn::Value& view_tokens, const Tensor* face) const;

  gauss::CloudValues reconstruct_val(const ReconBatch& batch,
                                     const gauss::UvBasePoints& bases) const;
  gauss::GaussianCloud reconstruct(const ReconBatch& batch,
                                   const gauss::UvBasePoints& bases) const;

  struct StepResult {
    float total = 0, rgb = 0, perceptual = 0, face = 0;
  };
  StepResult train_step(const ReconBatch& batch, const gauss::UvBasePoints& bases,
                        const geom::BodyTemplate& tpl, nn::AdamW& opt,
                        const metrics::PerceptualNet& net);

  // tanh(gamma) of each facial injection site.
  std::vector<float> face_gate_activations() const;

 private:
  struct MvbfBlock {
    nn::LayerNormL ln;
    nn::AttnBlock spat, view;
    nn::Linear gate, proj;
  };
  struct DecoderLayer {
    nn::LayerNormL ln_q, ln_f;
    nn::AttnBlock cross;
    nn::FeedForward ffn;
  };
  struct FaceSite {
    nn::LayerNormL ln;
    nn::AttnBlock cross;
    nn::Value gamma;
  };

  Stage2Config cfg_;
  nn::ParamStore store_;
  Rng init_rng_;
  std::vector<int> uv_texels_;  // masked texel ids, row-major
  nn::Conv2d patch_;
  nn::Value pos_emb_;
  nn::Linear cam_proj_;
  std::vector<MvbfBlock> mvbf_;
  nn::Value queries_;
  std::vector<DecoderLayer> layers_;
  std::vector<FaceSite> face_sites_;  // for layers ceil(L/2)+1 .. L
  nn::LayerNormL ln_out_;
  diffusion::FaceEncoder face_enc_;
  nn::Linear expand1_, expand2_;
  nn::Linear head_;
};

// Pose sequence playback: deform then render per frame; only positions and
// rotations vary across frames.
std::vector<Image> animate(const gauss::GaussianCloud& cloud,
                           const gauss::UvBasePoints& bases,
                           const geom::BodyTemplate& tpl,
                           const std::vector<geom::PoseParams>& poses,
                           const geom::CameraParams& cam,
                           const render::RenderConfig& cfg = {});

}  // namespace gsav::recon
