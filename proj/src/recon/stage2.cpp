// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "recon/stage2.h"

#include <cmath>
#include <iostream>
#include <stdexcept>

#include "metrics/metrics.h"
#include "render/render_op.h"

namespace gsav::recon {

using nn::Value;

Stage2Model::Stage2Model(const Stage2Config& cfg, const gauss::UvBasePoints& base_points,
                         uint64_t seed)
    : cfg_(cfg), init_rng_(seed), uv_texels_(base_points.texel) {
  if (cfg.resolution % cfg.patch != 0)
    throw std::runtime_error("stage2: resolution not divisible by patch size");
  if (base_points.res_u != cfg.uv_res || base_points.res_v != cfg.uv_res)
    throw std::runtime_error("stage2: UV base points do not match uv_res");
  const int P = (cfg.resolution / cfg.patch) * (cfg.resolution / cfg.patch);
  const int D = cfg.dim;
  const int M = static_cast<int>(uv_texels_.size());

  nn::Init enc{store_, init_rng_, "encoder", "enc."};
  patch_ = nn::Conv2d::make(enc, "patch", 3, D, cfg.patch, cfg.patch, 0);
  pos_emb_ = enc.param_randn("pos", {P, D}, 0.02f);
  cam_proj_ = nn::Linear::make(enc, "cam", 12, D);

  nn::Init mv{store_, init_rng_, "mvbf", "mvbf."};
  mvbf_.resize(cfg.mvbf_blocks);
  for (int k = 0; k < cfg.mvbf_blocks; ++k) {
    nn::Init c = mv.sub("b" + std::to_string(k));
    mvbf_[k].ln = nn::LayerNormL::make(c, "ln", D);
    mvbf_[k].spat = nn::AttnBlock::make(c, "spat", D, D, cfg.heads);
    mvbf_[k].view = nn::AttnBlock::make(c, "view", D, D, cfg.heads);
    mvbf_[k].gate = nn::Linear::make(c, "gate", 2 * D, D);
    mvbf_[k].proj = nn::Linear::make(c, "proj", D, D, true, /*zero_init=*/true);
  }

  nn::Init dec{store_, init_rng_, "uv_decoder", "dec."};
  queries_ = dec.param_randn("queries", {M, D}, 0.02f);
  layers_.resize(cfg.decoder_layers);
  for (int l = 0; l < cfg.decoder_layers; ++l) {
    nn::Init c = dec.sub("l" + std::to_string(l));
    layers_[l].ln_q = nn::LayerNormL::make(c, "ln_q", D);
    layers_[l].cross = nn::AttnBlock::make(c, "cross", D, D, cfg.heads);
    layers_[l].ln_f = nn::LayerNormL::make(c, "ln_f", D);
    layers_[l].ffn = nn::FeedForward::make(c, "ffn", D, cfg.ffn_mult);
  }
  ln_out_ = nn::LayerNormL::make(dec, "ln_out", D);

  nn::Init adr{store_, init_rng_, "id_adapter_r", "adr."};
  face_enc_ = diffusion::FaceEncoder(adr, cfg.face_res, cfg.face_tokens, cfg.face_dim);
  expand1_ = nn::Linear::make(adr, "expand1", cfg.face_dim, D);
  expand2_ = nn::Linear::make(adr, "expand2", D, D);
  const int half = (cfg.decoder_layers + 1) / 2;  // ceil(L/2)
  for (int l = half; l < cfg.decoder_layers; ++l) {
    nn::Init c = adr.sub("site" + std::to_string(l));
    FaceSite s;
    s.ln = nn::LayerNormL::make(c, "ln", D);
    s.cross = nn::AttnBlock::make(c, "cross", D, D, cfg.heads);
    s.gamma = c.param_full("gamma", {1}, 0.0f);
    face_sites_.push_back(std::move(s));
  }

  nn::Init hd{store_, init_rng_, "head", "head."};
  head_ = nn::Linear::make(hd, "out", D, gauss::UVGaussianMap::kChannels, true,
                           /*zero_init=*/true);
}

Value Stage2Model::encode_views(const std::vector<Tensor>& views,
                                const std::vector<geom::CameraParams>& cams) const {
  if (views.empty() || views.size() != cams.size())
    throw std::runtime_error("encode_views: need matching views and cameras");
  const int N = static_cast<int>(views.size());
  const int H = cfg_.resolution;
  std::vector<Value> imgs;
  imgs.reserve(N);
  for (const Tensor& v : views) {
    if (v.rank() != 3 || v.dim(0) != 3 || v.dim(1) != H || v.dim(2) != H)
      throw std::runtime_error("encode_views: views must share the configured resolution");
    imgs.push_back(nn::make_const(v));
  }
  Value x = nn::stack_batch(imgs);
  x = patch_.fwd(x);  // [N,D,hp,wp]
  const int P = x->val.dim(2) * x->val.dim(3);
  Value tokens = nn::chw_to_tokens(x);  // [N*P, D]

  std::vector<int> pos_idx(static_cast<size_t>(N) * P);
  std::vector<int> view_idx(static_cast<size_t>(N) * P);
  for (int n = 0; n < N; ++n)
    for (int p = 0; p < P; ++p) {
      pos_idx[static_cast<size_t>(n) * P + p] = p;
      view_idx[static_cast<size_t>(n) * P + p] = n;
    }
  tokens = nn::add(tokens, nn::gather_rows(pos_emb_, pos_idx));

  Tensor cam_feats({N, 12});
  for (int n = 0; n < N; ++n) {
    float* row = cam_feats.data() + static_cast<int64_t>(n) * 12;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) row[r * 3 + c] = static_cast<float>(cams[n].R(r, c));
    for (int k = 0; k < 3; ++k) row[9 + k] = static_cast<float>(cams[n].t[k]);
  }
  Value cam_emb = cam_proj_.fwd(nn::make_const(cam_feats));  // [N,D]
  tokens = nn::add(tokens, nn::gather_rows(cam_emb, view_idx));
  return tokens;
}

namespace {

// Attention within groups of a fixed size after an index permutation.
Value grouped_attention(const nn::AttnBlock& attn, const Value& tokens,
                        const std::vector<int>& perm, const std::vector<int>& inv,
                        int groups, int group_size) {
  Value g = nn::gather_rows(tokens, perm);
  std::vector<Value> outs;
  outs.reserve(groups);
  for (int i = 0; i < groups; ++i) {
    Value t = nn::slice_rows(g, i * group_size, group_size);
    outs.push_back(attn.fwd(t, t));
  }
  Value cat = outs.size() == 1 ? outs[0] : nn::concat_rows(outs);
  return nn::gather_rows(cat, inv);
}

}  // namespace

Value Stage2Model::mvbf_apply(const nn::Value& tokens, int views) const {
  const int T = tokens->val.dim(0);
  const int P = T / views;
  // Regrouping by spatial index for the view-attention branch.
  std::vector<int> perm(static_cast<size_t>(T)), inv(static_cast<size_t>(T));
  int k = 0;
  for (int p = 0; p < P; ++p)
    for (int n = 0; n < views; ++n) {
      const int src = n * P + p;
      perm[k] = src;
      inv[src] = k;
      ++k;
    }

  Value h = tokens;
  for (const MvbfBlock& b : mvbf_) {
    Value hn = b.ln.fwd(h);
    std::vector<Value> sv;
    sv.reserve(views);
    for (int n = 0; n < views; ++n) {
      Value q = nn::slice_rows(hn, n * P, P);
      sv.push_back(b.spat.fwd(q, q));
    }
    Value f_spat = sv.size() == 1 ? sv[0] : nn::concat_rows(sv);
    Value f_view = grouped_attention(b.view, hn, perm, inv, P, views);
    Value g = nn::sigmoid_v(b.gate.fwd(nn::concat_cols(f_spat, f_view)));
    Value fused = nn::add(nn::mul(g, f_spat), nn::mul(nn::affine(g, -1.0f, 1.0f), f_view));
    h = nn::add(h, b.proj.fwd(fused));
  }
  return h;
}

Value Stage2Model::uv_decode(const nn::Value& view_tokens, const Tensor* face) const {
  const int L = cfg_.decoder_layers;
  const int half = (L + 1) / 2;
  Value face_tokens;
  if (!face_sites_.empty()) {
    Value raw = face_enc_.encode(face);
    face_tokens = expand2_.fwd(nn::silu(expand1_.fwd(raw)));
  }

  Value x = queries_;
  for (int l = 0; l < L; ++l) {
    x = nn::add(x, layers_[l].cross.fwd(layers_[l].ln_q.fwd(x), view_tokens));
    if (l >= half) {
      const FaceSite& s = face_sites_[l - half];
      Value inj = s.cross.fwd(s.ln.fwd(x), face_tokens);
      x = nn::add(x, nn::scale_by(inj, nn::tanh_v(s.gamma)));
    }
    x = nn::add(x, layers_[l].ffn.fwd(layers_[l].ln_f.fwd(x)));
  }
  x = head_.fwd(ln_out_.fwd(x));  // [M,14]
  return nn::rows_to_channel_map(x, uv_texels_, cfg_.uv_res * cfg_.uv_res);
}

gauss::CloudValues Stage2Model::reconstruct_val(const ReconBatch& batch,
                                                const gauss::UvBasePoints& bases) const {
  if (batch.views.empty()) throw std::runtime_error("reconstruct: batch has no views");
  if (bases.texel != uv_texels_)
    throw std::runtime_error("reconstruct: UV layout does not match the model");
  Value tokens = encode_views(batch.views, batch.cameras);
  tokens = mvbf_apply(tokens, static_cast<int>(batch.views.size()));
  Value channels = uv_decode(tokens, batch.face.defined() ? &batch.face : nullptr);
  return gauss::decode_uv_map_val(channels, bases, cfg_.decode);
}

gauss::GaussianCloud Stage2Model::reconstruct(const ReconBatch& batch,
                                              const gauss::UvBasePoints& bases) const {
  nn::NoGradGuard ng;
  return reconstruct_val(batch, bases).detach();
}

Stage2Model::StepResult Stage2Model::train_step(const ReconBatch& batch,
                                                const gauss::UvBasePoints& bases,
                                                const geom::BodyTemplate& tpl,
                                                nn::AdamW& opt,
                                                const metrics::PerceptualNet& net) {
  gauss::CloudValues cloud = reconstruct_val(batch, bases);
  gauss::CloudValues posed = gauss::deform_val(cloud, bases, tpl, batch.pose);

  std::vector<Value> renders;
  std::vector<Value> targets;
  renders.reserve(batch.views.size());
  for (size_t i = 0; i < batch.views.size(); ++i) {
    renders.push_back(render::render_val(posed, batch.cameras[i], cfg_.render));
    targets.push_back(nn::make_const(batch.views[i]));
  }
  Value pred = nn::stack_batch(renders);
  Value gt = nn::stack_batch(targets);

  StepResult res;
  Value pred_face, gt_face;
  if (batch.has_face_box && batch.face.defined() && cfg_.lambda_face > 0.0f) {
    const geom::CameraParams face_cam =
        geom::crop_camera(batch.cameras[batch.frontal], batch.face_box, cfg_.face_res);
    pred_face = nn::stack_batch({render::render_val(posed, face_cam, cfg_.render)});
    gt_face = nn::stack_batch({nn::make_const(batch.face)});
  } else if (cfg_.lambda_face > 0.0f) {
    std::cerr << "[stage2] warning: no frontal face box, skipping face loss\n";
  }

  metrics::LossWeights w{cfg_.lambda_rgb, cfg_.lambda_lpips, cfg_.lambda_face};
  Value total = metrics::total_loss_stage2(pred, gt, pred_face, gt_face, w, net);
  store_.zero_grads();
  nn::backward(total);
  opt.step(store_);

  {
    nn::NoGradGuard ng;
    res.rgb = nn::mse(pred, gt)->val.item();
    res.perceptual = net.distance_val(pred, gt)->val.item();
    if (pred_face) res.face = net.distance_val(pred_face, gt_face)->val.item();
  }
  res.total = total->val.item();
  return res;
}

std::vector<float> Stage2Model::face_gate_activations() const {
  std::vector<float> out;
  for (const FaceSite& s : face_sites_)
    out.push_back(std::tanh(s.gamma->val[0]));
  return out;
}

std::vector<Image> animate(const gauss::GaussianCloud& cloud,
                           const gauss::UvBasePoints& bases,
                           const geom::BodyTemplate& tpl,
                           const std::vector<geom::PoseParams>& poses,
                           const geom::CameraParams& cam,
                           const render::RenderConfig& cfg) {
  std::vector<Image> frames;
  frames.reserve(poses.size());
  for (const auto& pose : poses) {
    const gauss::GaussianCloud posed = gauss::deform(cloud, bases, tpl, pose);
    frames.push_back(render::render(posed, cam, cfg).rgb);
  }
  return frames;
}

}  // namespace gsav::recon
