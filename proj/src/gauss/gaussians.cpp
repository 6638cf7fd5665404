// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "gauss/gaussians.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "geom/kinematics.h"
#include "kernels/kernels.h"

namespace gsav::gauss {

using geom::Mat3;
using geom::Mat4;
using geom::Quat;
using geom::Vec3;

void GaussianCloud::validate() const {
  const int M = count();
  for (int i = 0; i < M; ++i) {
    const float a = opacity[i];
    if (a < 0.0f || a > 1.0f)
      throw std::runtime_error("cloud: opacity outside [0,1] at " + std::to_string(i));
    double n2 = 0.0;
    for (int k = 0; k < 4; ++k) {
      const double q = rot[static_cast<int64_t>(i) * 4 + k];
      n2 += q * q;
    }
    if (std::abs(std::sqrt(n2) - 1.0) > 1e-6)
      throw std::runtime_error("cloud: rotation not unit at " + std::to_string(i));
    for (int k = 0; k < 3; ++k)
      if (scale[static_cast<int64_t>(i) * 3 + k] <= 0.0f)
        throw std::runtime_error("cloud: non-positive scale at " + std::to_string(i));
  }
  std::vector<int> seen(texel);
  std::sort(seen.begin(), seen.end());
  if (std::adjacent_find(seen.begin(), seen.end()) != seen.end())
    throw std::runtime_error("cloud: duplicate source texel");
}

GaussianCloud CloudValues::detach() const {
  GaussianCloud c;
  c.pos = pos->val;
  c.opacity = opacity->val;
  c.rot = rot->val;
  c.scale = scale->val;
  c.color = color->val;
  c.texel = texel;
  return c;
}

namespace {

// Left-multiplication matrix: q1 (x) q2 = L(q1) q2, components (w,x,y,z).
void quat_left_matrix(const Quat& q, double L[4][4]) {
  const double w = q.w(), x = q.x(), y = q.y(), z = q.z();
  L[0][0] = w; L[0][1] = -x; L[0][2] = -y; L[0][3] = -z;
  L[1][0] = x; L[1][1] = w;  L[1][2] = -z; L[1][3] = y;
  L[2][0] = y; L[2][1] = z;  L[2][2] = w;  L[2][3] = -x;
  L[3][0] = z; L[3][1] = -y; L[3][2] = x;  L[3][3] = w;
}

struct DecodedTexel {
  double pos[3], opa, rot[4], scale[3], color[3];
  // saved intermediates for backward
  double th[3];        // tanh of offset channels
  double qlocal[4];    // normalized local quaternion
  double qnorm;        // norm of raw local quaternion
  double sig_o;        // sigmoid of opacity logit
  double sig_c[3];
  double sexp[3];      // s_unit * exp(log-scale), pre-clamp
};

void decode_texel(const double raw[UVGaussianMap::kChannels], const Vec3& base,
                  const Quat& frame, const DecodeConfig& cfg, DecodedTexel& out) {
  const Mat3 F = frame.toRotationMatrix();
  for (int k = 0; k < 3; ++k) out.th[k] = std::tanh(raw[k]);
  const Vec3 off = cfg.max_offset * (F * Vec3(out.th[0], out.th[1], out.th[2]));
  for (int k = 0; k < 3; ++k) out.pos[k] = base[k] + off[k];

  out.sig_o = 1.0 / (1.0 + std::exp(-raw[3]));
  out.opa = out.sig_o;

  double qr[4] = {1.0 + raw[4], raw[5], raw[6], raw[7]};
  out.qnorm = std::sqrt(qr[0] * qr[0] + qr[1] * qr[1] + qr[2] * qr[2] + qr[3] * qr[3]);
  for (int k = 0; k < 4; ++k) out.qlocal[k] = qr[k] / out.qnorm;
  double L[4][4];
  quat_left_matrix(frame, L);
  for (int r = 0; r < 4; ++r) {
    out.rot[r] = 0.0;
    for (int c = 0; c < 4; ++c) out.rot[r] += L[r][c] * out.qlocal[c];
  }

  for (int k = 0; k < 3; ++k) {
    out.sexp[k] = cfg.s_unit * std::exp(raw[8 + k]);
    out.scale[k] = std::min(cfg.s_min + out.sexp[k], cfg.s_max);
  }
  for (int k = 0; k < 3; ++k) {
    out.sig_c[k] = 1.0 / (1.0 + std::exp(-raw[11 + k]));
    out.color[k] = out.sig_c[k];
  }
}

// Pull gradients of the five attributes back onto the 14 raw channels.
void decode_texel_backward(const DecodedTexel& d, const Vec3&, const Quat& frame,
                           const DecodeConfig& cfg, const double dpos[3],
                           double dopa, const double drot[4], const double dscale[3],
                           const double dcolor[3],
                           double draw[UVGaussianMap::kChannels]) {
  const Mat3 F = frame.toRotationMatrix();
  const Vec3 dth = cfg.max_offset * (F.transpose() * Vec3(dpos[0], dpos[1], dpos[2]));
  for (int k = 0; k < 3; ++k) draw[k] += (1.0 - d.th[k] * d.th[k]) * dth[k];

  draw[3] += d.sig_o * (1.0 - d.sig_o) * dopa;

  double L[4][4];
  quat_left_matrix(frame, L);
  double dql[4] = {0, 0, 0, 0};  // dL/d(qlocal) = L^T drot
  for (int c = 0; c < 4; ++c)
    for (int r = 0; r < 4; ++r) dql[c] += L[r][c] * drot[r];
  // through normalization: (I - q q^T)/n
  double dot = 0.0;
  for (int k = 0; k < 4; ++k) dot += dql[k] * d.qlocal[k];
  for (int k = 0; k < 4; ++k) draw[4 + k] += (dql[k] - d.qlocal[k] * dot) / d.qnorm;

  for (int k = 0; k < 3; ++k)
    if (cfg.s_min + d.sexp[k] < cfg.s_max) draw[8 + k] += d.sexp[k] * dscale[k];

  for (int k = 0; k < 3; ++k)
    draw[11 + k] += d.sig_c[k] * (1.0 - d.sig_c[k]) * dcolor[k];
}

void decode_all(const float* channels, int texels, const UvBasePoints& bases,
                const DecodeConfig& cfg, std::vector<DecodedTexel>& out) {
  const int M = bases.count();
  out.resize(M);
  for (int i = 0; i < M; ++i) {
    const int tx = bases.texel[i];
    double raw[UVGaussianMap::kChannels];
    for (int ch = 0; ch < UVGaussianMap::kChannels; ++ch) {
      raw[ch] = channels[static_cast<int64_t>(ch) * texels + tx];
      if (!std::isfinite(raw[ch]))
        throw std::runtime_error("decode_uv_map: non-finite channel " +
                                 std::to_string(ch) + " at texel " + std::to_string(tx));
    }
    decode_texel(raw, bases.point[i], bases.frame[i], cfg, out[i]);
  }
}

GaussianCloud pack_cloud(const std::vector<DecodedTexel>& dec, const UvBasePoints& bases) {
  const int M = static_cast<int>(dec.size());
  GaussianCloud c;
  c.pos = Tensor::zeros({M, 3});
  c.opacity = Tensor::zeros({M});
  c.rot = Tensor::zeros({M, 4});
  c.scale = Tensor::zeros({M, 3});
  c.color = Tensor::zeros({M, 3});
  c.texel = bases.texel;
  for (int i = 0; i < M; ++i) {
    for (int k = 0; k < 3; ++k) {
      c.pos[static_cast<int64_t>(i) * 3 + k] = static_cast<float>(dec[i].pos[k]);
      c.scale[static_cast<int64_t>(i) * 3 + k] = static_cast<float>(dec[i].scale[k]);
      c.color[static_cast<int64_t>(i) * 3 + k] = static_cast<float>(dec[i].color[k]);
    }
    c.opacity[i] = static_cast<float>(dec[i].opa);
    for (int k = 0; k < 4; ++k)
      c.rot[static_cast<int64_t>(i) * 4 + k] = static_cast<float>(dec[i].rot[k]);
  }
  return c;
}

}  // namespace

GaussianCloud decode_uv_map(const UVGaussianMap& map, const UvBasePoints& bases,
                            const DecodeConfig& cfg) {
  if (map.res_u != bases.res_u || map.res_v != bases.res_v)
    throw std::runtime_error("decode_uv_map: resolution mismatch");
  std::vector<DecodedTexel> dec;
  decode_all(map.channels.data(), map.texel_count(), bases, cfg, dec);
  return pack_cloud(dec, bases);
}

CloudValues decode_uv_map_val(const nn::Value& channels, const UvBasePoints& bases,
                              const DecodeConfig& cfg) {
  const int texels = bases.res_u * bases.res_v;
  if (channels->val.rank() != 2 || channels->val.dim(0) != UVGaussianMap::kChannels ||
      channels->val.dim(1) != texels)
    throw std::runtime_error("decode_uv_map_val: channel tensor shape mismatch");

  auto dec = std::make_shared<std::vector<DecodedTexel>>();
  decode_all(channels->val.data(), texels, bases, cfg, *dec);
  GaussianCloud packed = pack_cloud(*dec, bases);
  const int M = packed.count();

  // One backward closure distributes all five attribute gradients; each
  // attribute node shares it and pulls only its own slot.
  auto bases_ptr = &bases;
  auto make_attr = [&](Tensor t, int slot) -> nn::Value {
    return nn::make_op(std::move(t), {channels},
                       [channels, dec, bases_ptr, cfg, slot, M](nn::Node& self) {
      if (!channels->requires_grad) return;
      channels->ensure_grad();
      float* gch = channels->grad.data();
      const int texels = bases_ptr->res_u * bases_ptr->res_v;
      const float* g = self.grad.data();
      for (int i = 0; i < M; ++i) {
        double dpos[3] = {0, 0, 0}, drot[4] = {0, 0, 0, 0};
        double dscale[3] = {0, 0, 0}, dcolor[3] = {0, 0, 0}, dopa = 0.0;
        switch (slot) {
          case 0: for (int k = 0; k < 3; ++k) dpos[k] = g[static_cast<int64_t>(i) * 3 + k]; break;
          case 1: dopa = g[i]; break;
          case 2: for (int k = 0; k < 4; ++k) drot[k] = g[static_cast<int64_t>(i) * 4 + k]; break;
          case 3: for (int k = 0; k < 3; ++k) dscale[k] = g[static_cast<int64_t>(i) * 3 + k]; break;
          case 4: for (int k = 0; k < 3; ++k) dcolor[k] = g[static_cast<int64_t>(i) * 3 + k]; break;
        }
        double draw[UVGaussianMap::kChannels] = {0};
        decode_texel_backward((*dec)[i], bases_ptr->point[i], bases_ptr->frame[i], cfg,
                              dpos, dopa, drot, dscale, dcolor, draw);
        const int tx = bases_ptr->texel[i];
        for (int ch = 0; ch < UVGaussianMap::kChannels; ++ch)
          gch[static_cast<int64_t>(ch) * texels + tx] += static_cast<float>(draw[ch]);
      }
    });
  };

  CloudValues cv;
  cv.pos = make_attr(packed.pos, 0);
  cv.opacity = make_attr(packed.opacity, 1);
  cv.rot = make_attr(packed.rot, 2);
  cv.scale = make_attr(packed.scale, 3);
  cv.color = make_attr(packed.color, 4);
  cv.texel = packed.texel;
  return cv;
}

void decode_texel_f64(const double raw[UVGaussianMap::kChannels], const Vec3& base,
                      const Quat& frame, const DecodeConfig& cfg,
                      double out[UVGaussianMap::kChannels]) {
  DecodedTexel d;
  decode_texel(raw, base, frame, cfg, d);
  out[0] = d.pos[0];
  out[1] = d.pos[1];
  out[2] = d.pos[2];
  out[3] = d.opa;
  for (int k = 0; k < 4; ++k) out[4 + k] = d.rot[k];
  for (int k = 0; k < 3; ++k) out[8 + k] = d.scale[k];
  for (int k = 0; k < 3; ++k) out[11 + k] = d.color[k];
}

void decode_texel_jacobian(const double raw[UVGaussianMap::kChannels], const Vec3& base,
                           const Quat& frame, const DecodeConfig& cfg,
                           double jac[UVGaussianMap::kChannels][UVGaussianMap::kChannels]) {
  DecodedTexel d;
  decode_texel(raw, base, frame, cfg, d);
  for (int o = 0; o < UVGaussianMap::kChannels; ++o) {
    double dpos[3] = {0, 0, 0}, drot[4] = {0, 0, 0, 0};
    double dscale[3] = {0, 0, 0}, dcolor[3] = {0, 0, 0}, dopa = 0.0;
    if (o < 3) dpos[o] = 1.0;
    else if (o == 3) dopa = 1.0;
    else if (o < 8) drot[o - 4] = 1.0;
    else if (o < 11) dscale[o - 8] = 1.0;
    else dcolor[o - 11] = 1.0;
    double draw[UVGaussianMap::kChannels] = {0};
    decode_texel_backward(d, base, frame, cfg, dpos, dopa, drot, dscale, dcolor, draw);
    for (int c = 0; c < UVGaussianMap::kChannels; ++c) jac[o][c] = draw[c];
  }
}

Mat3 covariance(const Quat& r, const Vec3& s) {
  const Mat3 R = r.normalized().toRotationMatrix();
  return R * Vec3(s.x() * s.x(), s.y() * s.y(), s.z() * s.z()).asDiagonal() * R.transpose();
}

namespace {

struct DeformData {
  std::vector<Mat3> lin;    // blended linear part per primitive
  std::vector<Vec3> trans;
  std::vector<Quat> qa;     // polar rotation factor
};

DeformData deform_transforms(const std::vector<int>& texels, const UvBasePoints& bases,
                             const geom::BodyTemplate& t, const geom::PoseParams& pose) {
  const std::vector<Mat4> skin = geom::skinning_transforms(t, pose);
  DeformData d;
  const int M = static_cast<int>(texels.size());
  d.lin.resize(M);
  d.trans.resize(M);
  d.qa.resize(M);
  for (int i = 0; i < M; ++i) {
    const Mat4 a = geom::blend_transform(skin, bases.weights[i].data());
    d.lin[i] = a.block<3, 3>(0, 0);
    d.trans[i] = a.block<3, 1>(0, 3);
    if (d.lin[i].determinant() <= 0.0)
      throw std::runtime_error("deform: degenerate blend at texel " +
                               std::to_string(texels[i]));
    d.qa[i] = Quat(geom::polar_rotation(d.lin[i])).normalized();
  }
  return d;
}

}  // namespace

GaussianCloud deform(const GaussianCloud& cloud, const UvBasePoints& bases,
                     const geom::BodyTemplate& t, const geom::PoseParams& pose) {
  if (cloud.count() != bases.count())
    throw std::runtime_error("deform: cloud does not match base points");
  const DeformData d = deform_transforms(cloud.texel, bases, t, pose);
  GaussianCloud out = cloud;  // opacity/scale/color share storage: bit-identical
  out.pos = Tensor::zeros({cloud.count(), 3});
  out.rot = Tensor::zeros({cloud.count(), 4});
  for (int i = 0; i < cloud.count(); ++i) {
    const Vec3 p(cloud.pos[static_cast<int64_t>(i) * 3],
                 cloud.pos[static_cast<int64_t>(i) * 3 + 1],
                 cloud.pos[static_cast<int64_t>(i) * 3 + 2]);
    const Vec3 pp = d.lin[i] * p + d.trans[i];
    for (int k = 0; k < 3; ++k) out.pos[static_cast<int64_t>(i) * 3 + k] = static_cast<float>(pp[k]);
    const Quat r(cloud.rot[static_cast<int64_t>(i) * 4], cloud.rot[static_cast<int64_t>(i) * 4 + 1],
                 cloud.rot[static_cast<int64_t>(i) * 4 + 2], cloud.rot[static_cast<int64_t>(i) * 4 + 3]);
    const Quat rr = d.qa[i] * r;
    out.rot[static_cast<int64_t>(i) * 4] = static_cast<float>(rr.w());
    out.rot[static_cast<int64_t>(i) * 4 + 1] = static_cast<float>(rr.x());
    out.rot[static_cast<int64_t>(i) * 4 + 2] = static_cast<float>(rr.y());
    out.rot[static_cast<int64_t>(i) * 4 + 3] = static_cast<float>(rr.z());
  }
  return out;
}

CloudValues deform_val(const CloudValues& cloud, const UvBasePoints& bases,
                       const geom::BodyTemplate& t, const geom::PoseParams& pose) {
  const int M = static_cast<int>(cloud.texel.size());
  if (M != bases.count()) throw std::runtime_error("deform_val: cloud/base mismatch");
  auto d = std::make_shared<DeformData>(deform_transforms(cloud.texel, bases, t, pose));

  Tensor pos({M, 3});
  const float* src = cloud.pos->val.data();
  for (int i = 0; i < M; ++i) {
    const Vec3 p(src[i * 3], src[i * 3 + 1], src[i * 3 + 2]);
    const Vec3 pp = d->lin[i] * p + d->trans[i];
    for (int k = 0; k < 3; ++k) pos[static_cast<int64_t>(i) * 3 + k] = static_cast<float>(pp[k]);
  }
  nn::Value pos_v = nn::make_op(std::move(pos), {cloud.pos}, [p = cloud.pos, d, M](nn::Node& self) {
    if (!p->requires_grad) return;
    p->ensure_grad();
    const float* g = self.grad.data();
    float* gp = p->grad.data();
    for (int i = 0; i < M; ++i) {
      const Vec3 gi(g[i * 3], g[i * 3 + 1], g[i * 3 + 2]);
      const Vec3 back = d->lin[i].transpose() * gi;
      for (int k = 0; k < 3; ++k) gp[static_cast<int64_t>(i) * 3 + k] += static_cast<float>(back[k]);
    }
  });

  Tensor rot({M, 4});
  const float* rsrc = cloud.rot->val.data();
  for (int i = 0; i < M; ++i) {
    const Quat r(rsrc[i * 4], rsrc[i * 4 + 1], rsrc[i * 4 + 2], rsrc[i * 4 + 3]);
    const Quat rr = d->qa[i] * r;
    rot[static_cast<int64_t>(i) * 4] = static_cast<float>(rr.w());
    rot[static_cast<int64_t>(i) * 4 + 1] = static_cast<float>(rr.x());
    rot[static_cast<int64_t>(i) * 4 + 2] = static_cast<float>(rr.y());
    rot[static_cast<int64_t>(i) * 4 + 3] = static_cast<float>(rr.z());
  }
  nn::Value rot_v = nn::make_op(std::move(rot), {cloud.rot}, [r = cloud.rot, d, M](nn::Node& self) {
    if (!r->requires_grad) return;
    r->ensure_grad();
    const float* g = self.grad.data();
    float* gr = r->grad.data();
    for (int i = 0; i < M; ++i) {
      double L[4][4];
      quat_left_matrix(d->qa[i], L);
      for (int c = 0; c < 4; ++c) {
        double acc = 0.0;
        for (int row = 0; row < 4; ++row) acc += L[row][c] * g[i * 4 + row];
        gr[static_cast<int64_t>(i) * 4 + c] += static_cast<float>(acc);
      }
    }
  });

  CloudValues out;
  out.pos = pos_v;
  out.rot = rot_v;
  out.opacity = cloud.opacity;  // unchanged attributes share nodes
  out.scale = cloud.scale;
  out.color = cloud.color;
  out.texel = cloud.texel;
  return out;
}

}  // namespace gsav::gauss
