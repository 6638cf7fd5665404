// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0
//
// EWA splatting with analytic gradients. All internal math is double so the
// finite-difference gradient checks hold at tight tolerances; inputs and
// outputs are float tensors.

#include "render/renderer.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "kernels/kernels.h"

namespace gsav::render {

using geom::Mat3;
using geom::Vec3;

namespace {

constexpr double kMaxW = 1.0 - 1e-6;  // keeps 1-w away from zero in backward

// Full projection state for one primitive; shared by forward and backward.
struct ProjState {
  bool visible = false;
  double X = 0, Y = 0, Z = 0;    // camera-space mean
  double u = 0, v = 0;           // pixel mean
  double cov[3] = {0, 0, 0};     // (a,b,c) with blur
  double Q[4] = {0, 0, 0, 0};    // conic, row-major 2x2
  double radius = 0;
  double sig3[9] = {0};          // world covariance, row-major
  double Mjw[6] = {0};           // J*W, row-major 2x3
  double qn[4] = {0, 0, 0, 0};   // normalized quaternion (w,x,y,z)
  double qnorm = 1.0;
  double R3[9] = {0};            // rotation of qn
};

void quat_to_mat(const double q[4], double R[9]) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  R[0] = 1 - 2 * (y * y + z * z);
  R[1] = 2 * (x * y - w * z);
  R[2] = 2 * (x * z + w * y);
  R[3] = 2 * (x * y + w * z);
  R[4] = 1 - 2 * (x * x + z * z);
  R[5] = 2 * (y * z - w * x);
  R[6] = 2 * (x * z - w * y);
  R[7] = 2 * (y * z + w * x);
  R[8] = 1 - 2 * (x * x + y * y);
}

ProjState project_one(const gauss::GaussianCloud& cloud, int i,
                      const geom::CameraParams& cam, const RenderConfig& cfg) {
  ProjState s;
  const Vec3 p(cloud.pos[static_cast<int64_t>(i) * 3],
               cloud.pos[static_cast<int64_t>(i) * 3 + 1],
               cloud.pos[static_cast<int64_t>(i) * 3 + 2]);
  const Vec3 pc = cam.R * p + cam.t;
  s.X = pc.x();
  s.Y = pc.y();
  s.Z = pc.z();
  if (!(s.Z > cfg.near_plane)) return s;  // also rejects NaN

  s.u = cam.fx * s.X / s.Z + cam.cx;
  s.v = cam.fy * s.Y / s.Z + cam.cy;

  double q[4];
  double n2 = 0.0;
  for (int k = 0; k < 4; ++k) {
    q[k] = cloud.rot[static_cast<int64_t>(i) * 4 + k];
    n2 += q[k] * q[k];
  }
  s.qnorm = std::sqrt(n2);
  if (!(s.qnorm > 1e-12)) return s;
  for (int k = 0; k < 4; ++k) s.qn[k] = q[k] / s.qnorm;
  quat_to_mat(s.qn, s.R3);

  const double sx = cloud.scale[static_cast<int64_t>(i) * 3];
  const double sy = cloud.scale[static_cast<int64_t>(i) * 3 + 1];
  const double sz = cloud.scale[static_cast<int64_t>(i) * 3 + 2];
  const double d2[3] = {sx * sx, sy * sy, sz * sz};
  // sig3 = R diag(d2) R^T
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += s.R3[r * 3 + k] * d2[k] * s.R3[c * 3 + k];
      s.sig3[r * 3 + c] = acc;
    }

  // M = J * W with J the projection Jacobian at the mean.
  const double j00 = cam.fx / s.Z, j02 = -cam.fx * s.X / (s.Z * s.Z);
  const double j11 = cam.fy / s.Z, j12 = -cam.fy * s.Y / (s.Z * s.Z);
  for (int c = 0; c < 3; ++c) {
    s.Mjw[c] = j00 * cam.R(0, c) + j02 * cam.R(2, c);
    s.Mjw[3 + c] = j11 * cam.R(1, c) + j12 * cam.R(2, c);
  }
  // cov2d = M sig3 M^T + blur I
  double tmp[6];  // M * sig3, 2x3
  for (int r = 0; r < 2; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += s.Mjw[r * 3 + k] * s.sig3[k * 3 + c];
      tmp[r * 3 + c] = acc;
    }
  auto dot3 = [&](const double* a, const double* b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
  };
  s.cov[0] = dot3(tmp, s.Mjw) + cfg.blur;
  s.cov[1] = dot3(tmp, s.Mjw + 3);
  s.cov[2] = dot3(tmp + 3, s.Mjw + 3) + cfg.blur;

  const double det = s.cov[0] * s.cov[2] - s.cov[1] * s.cov[1];
  if (!(det > 0.0) || !(s.cov[0] > 0.0)) return s;
  s.Q[0] = s.cov[2] / det;
  s.Q[1] = -s.cov[1] / det;
  s.Q[2] = -s.cov[1] / det;
  s.Q[3] = s.cov[0] / det;

  const double mid = 0.5 * (s.cov[0] + s.cov[2]);
  const double lam = mid + std::sqrt(std::max(1e-12, mid * mid - det));
  s.radius = cfg.sigma_cut * std::sqrt(lam);
  s.visible = true;
  return s;
}

std::vector<ProjState> project_all(const gauss::GaussianCloud& cloud,
                                   const geom::CameraParams& cam,
                                   const RenderConfig& cfg) {
  std::vector<ProjState> out(cloud.count());
  kernels::par_for(cloud.count(),
                   [&](int64_t i) { out[i] = project_one(cloud, static_cast<int>(i), cam, cfg); });
  return out;
}

// Depth-sorted visible order with stable texel tie-break.
std::vector<int> sorted_order(const std::vector<ProjState>& ps,
                              const std::vector<int>& texel) {
  std::vector<int> order;
  order.reserve(ps.size());
  for (size_t i = 0; i < ps.size(); ++i)
    if (ps[i].visible) order.push_back(static_cast<int>(i));
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (ps[a].Z != ps[b].Z) return ps[a].Z < ps[b].Z;
    return texel[a] < texel[b];
  });
  return order;
}

struct Tiling {
  int tiles_x = 0, tiles_y = 0, tile = 16;
  std::vector<std::vector<int>> lists;  // depth-ordered per tile
};

Tiling build_tiles(const std::vector<ProjState>& ps, const std::vector<int>& order,
                   int W, int H, int tile) {
  Tiling t;
  t.tile = tile;
  t.tiles_x = (W + tile - 1) / tile;
  t.tiles_y = (H + tile - 1) / tile;
  t.lists.resize(static_cast<size_t>(t.tiles_x) * t.tiles_y);
  for (int idx : order) {
    const ProjState& s = ps[idx];
    const int x0 = std::max(0, static_cast<int>(std::floor((s.u - s.radius) / tile)));
    const int x1 = std::min(t.tiles_x - 1, static_cast<int>(std::floor((s.u + s.radius) / tile)));
    const int y0 = std::max(0, static_cast<int>(std::floor((s.v - s.radius) / tile)));
    const int y1 = std::min(t.tiles_y - 1, static_cast<int>(std::floor((s.v + s.radius) / tile)));
    for (int ty = y0; ty <= y1; ++ty)
      for (int tx = x0; tx <= x1; ++tx)
        t.lists[static_cast<size_t>(ty) * t.tiles_x + tx].push_back(idx);
  }
  return t;
}

struct Contributor {
  int idx;
  double w;
  double T;  // transmittance before this contribution
};

// Walks one pixel's tile list, honoring the cutoff rules. Returns final T.
template <class F>
double composite_pixel(const std::vector<ProjState>& ps, const float* opacity,
                       const std::vector<int>& list, double px, double py,
                       const RenderConfig& cfg, F&& emit) {
  double T = 1.0;
  const double maha_max = cfg.sigma_cut * cfg.sigma_cut;
  for (int idx : list) {
    const ProjState& s = ps[idx];
    const double dx = px - s.u, dy = py - s.v;
    const double maha = s.Q[0] * dx * dx + (s.Q[1] + s.Q[2]) * dx * dy + s.Q[3] * dy * dy;
    if (maha > maha_max || maha < 0.0) continue;
    double w = static_cast<double>(opacity[idx]) * std::exp(-0.5 * maha);
    if (w < cfg.w_min) continue;
    if (w > kMaxW) w = kMaxW;
    emit(idx, w, T);
    T *= 1.0 - w;
    if (T < cfg.stop_T) break;
  }
  return T;
}

}  // namespace

std::vector<ProjectedGaussian> project_gaussians(const gauss::GaussianCloud& cloud,
                                                 const geom::CameraParams& cam,
                                                 const RenderConfig& cfg) {
  const std::vector<ProjState> ps = project_all(cloud, cam, cfg);
  std::vector<ProjectedGaussian> out(ps.size());
  for (size_t i = 0; i < ps.size(); ++i) {
    ProjectedGaussian& g = out[i];
    g.visible = ps[i].visible;
    g.mean_u = ps[i].u;
    g.mean_v = ps[i].v;
    g.cov[0] = ps[i].cov[0];
    g.cov[1] = ps[i].cov[1];
    g.cov[2] = ps[i].cov[2];
    g.depth = ps[i].Z;
    for (int k = 0; k < 3; ++k) g.color[k] = cloud.color[i * 3 + k];
    g.opacity = cloud.opacity[static_cast<int64_t>(i)];
    g.src = cloud.texel.empty() ? static_cast<int>(i) : cloud.texel[i];
  }
  return out;
}

RenderOutput rasterize(const std::vector<ProjectedGaussian>& projected, int width,
                       int height, const RenderConfig& cfg) {
  // Rebuild the internal state (conic, radius) from the public projection.
  std::vector<ProjState> ps(projected.size());
  std::vector<int> texel(projected.size());
  Tensor opacity({static_cast<int>(projected.size())});
  Tensor color({std::max(1, static_cast<int>(projected.size())), 3});
  for (size_t i = 0; i < projected.size(); ++i) {
    const ProjectedGaussian& g = projected[i];
    texel[i] = g.src;
    opacity[static_cast<int64_t>(i)] = g.opacity;
    for (int k = 0; k < 3; ++k) color[i * 3 + k] = g.color[k];
    ProjState& s = ps[i];
    s.u = g.mean_u;
    s.v = g.mean_v;
    s.Z = g.depth;
    s.cov[0] = g.cov[0];
    s.cov[1] = g.cov[1];
    s.cov[2] = g.cov[2];
    const double det = s.cov[0] * s.cov[2] - s.cov[1] * s.cov[1];
    if (!g.visible || !(det > 0.0) || !(s.cov[0] > 0.0)) continue;
    s.Q[0] = s.cov[2] / det;
    s.Q[1] = s.Q[2] = -s.cov[1] / det;
    s.Q[3] = s.cov[0] / det;
    const double mid = 0.5 * (s.cov[0] + s.cov[2]);
    s.radius = cfg.sigma_cut * std::sqrt(mid + std::sqrt(std::max(1e-12, mid * mid - det)));
    s.visible = true;
  }

  const std::vector<int> order = sorted_order(ps, texel);
  const Tiling tiling = build_tiles(ps, order, width, height, cfg.tile);

  RenderOutput out;
  out.rgb = Image(3, height, width);
  out.alpha = Image(1, height, width);
  out.transmittance = Image(1, height, width);
  float* rgb = out.rgb.t.data();
  float* alpha = out.alpha.t.data();
  float* trans = out.transmittance.t.data();
  const int64_t plane = static_cast<int64_t>(height) * width;
  const float* opa = opacity.data();
  const float* col = color.data();

  kernels::par_for(static_cast<int64_t>(tiling.tiles_x) * tiling.tiles_y, [&](int64_t ti) {
    const int tx = static_cast<int>(ti % tiling.tiles_x);
    const int ty = static_cast<int>(ti / tiling.tiles_x);
    const auto& list = tiling.lists[ti];
    const int x0 = tx * tiling.tile, x1 = std::min(width, x0 + tiling.tile);
    const int y0 = ty * tiling.tile, y1 = std::min(height, y0 + tiling.tile);
    for (int y = y0; y < y1; ++y) {
      for (int x = x0; x < x1; ++x) {
        double C[3] = {0, 0, 0};
        double acc = 0.0;
        const double T = composite_pixel(ps, opa, list, x + 0.5, y + 0.5, cfg,
                                         [&](int idx, double w, double Tin) {
                                           const double wt = w * Tin;
                                           for (int k = 0; k < 3; ++k)
                                             C[k] += wt * col[idx * 3 + k];
                                           acc += wt;
                                         });
        const int64_t pix = static_cast<int64_t>(y) * width + x;
        for (int k = 0; k < 3; ++k)
          rgb[k * plane + pix] = static_cast<float>(C[k] + T * cfg.background[k]);
        alpha[pix] = static_cast<float>(acc);
        trans[pix] = static_cast<float>(T);
      }
    }
  });
  return out;
}

RenderOutput render(const gauss::GaussianCloud& cloud, const geom::CameraParams& cam,
                    const RenderConfig& cfg) {
  return rasterize(project_gaussians(cloud, cam, cfg), cam.width, cam.height, cfg);
}

double render_scalar_mean(const gauss::GaussianCloud& cloud,
                          const geom::CameraParams& cam, const RenderConfig& cfg) {
  const int W = cam.width, H = cam.height;
  const std::vector<ProjState> ps = project_all(cloud, cam, cfg);
  const std::vector<int> order = sorted_order(ps, cloud.texel);
  const Tiling tiling = build_tiles(ps, order, W, H, cfg.tile);
  const float* opa = cloud.opacity.data();
  const float* col = cloud.color.data();

  double total = 0.0;
  for (int64_t ti = 0; ti < static_cast<int64_t>(tiling.tiles_x) * tiling.tiles_y; ++ti) {
    const int tx = static_cast<int>(ti % tiling.tiles_x);
    const int ty = static_cast<int>(ti / tiling.tiles_x);
    const auto& list = tiling.lists[ti];
    const int x0 = tx * tiling.tile, x1 = std::min(W, x0 + tiling.tile);
    const int y0 = ty * tiling.tile, y1 = std::min(H, y0 + tiling.tile);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x) {
        double C[3] = {0, 0, 0};
        const double T = composite_pixel(ps, opa, list, x + 0.5, y + 0.5, cfg,
                                         [&](int idx, double w, double Tin) {
                                           const double wt = w * Tin;
                                           for (int k = 0; k < 3; ++k)
                                             C[k] += wt * col[idx * 3 + k];
                                         });
        for (int k = 0; k < 3; ++k) total += C[k] + T * cfg.background[k];
      }
  }
  return total / (3.0 * H * W);
}

RenderGrads render_backward(const gauss::GaussianCloud& cloud,
                            const geom::CameraParams& cam, const RenderConfig& cfg,
                            const Tensor& grad_rgb, const Tensor* grad_alpha) {
  const int M = cloud.count();
  const int W = cam.width, H = cam.height;
  const std::vector<ProjState> ps = project_all(cloud, cam, cfg);
  const std::vector<int> order = sorted_order(ps, cloud.texel);
  const Tiling tiling = build_tiles(ps, order, W, H, cfg.tile);

  // Per-thread accumulators: (du,dv, dQ[4], dalpha, dcolor[3]) = 10 doubles.
  const int nthreads = std::max(1, kernels::thread_count());
  std::vector<double> scratch(static_cast<size_t>(nthreads) * M * 10, 0.0);

  const float* gr = grad_rgb.data();
  const float* ga = grad_alpha ? grad_alpha->data() : nullptr;
  const float* opa = cloud.opacity.data();
  const float* col = cloud.color.data();
  const int64_t plane = static_cast<int64_t>(H) * W;

#ifdef _OPENMP
#pragma omp parallel num_threads(nthreads) if (kernels::mode() == kernels::Mode::Parallel)
#endif
  {
#ifdef _OPENMP
    const int tid = omp_get_thread_num();
#else
    const int tid = 0;
#endif
    double* acc = scratch.data() + static_cast<size_t>(tid) * M * 10;
    std::vector<Contributor> contribs;
#ifdef _OPENMP
#pragma omp for schedule(static)
#endif
    for (int64_t ti = 0; ti < static_cast<int64_t>(tiling.tiles_x) * tiling.tiles_y; ++ti) {
      const int tx = static_cast<int>(ti % tiling.tiles_x);
      const int ty = static_cast<int>(ti / tiling.tiles_x);
      const auto& list = tiling.lists[ti];
      if (list.empty()) continue;
      const int x0 = tx * tiling.tile, x1 = std::min(W, x0 + tiling.tile);
      const int y0 = ty * tiling.tile, y1 = std::min(H, y0 + tiling.tile);
      for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
          const int64_t pix = static_cast<int64_t>(y) * W + x;
          const double G[3] = {gr[0 * plane + pix], gr[1 * plane + pix],
                               gr[2 * plane + pix]};
          const double gAlpha = ga ? ga[pix] : 0.0;
          if (G[0] == 0.0 && G[1] == 0.0 && G[2] == 0.0 && gAlpha == 0.0) continue;

          contribs.clear();
          const double px = x + 0.5, py = y + 0.5;
          const double Tfin = composite_pixel(ps, opa, list, px, py, cfg,
                                              [&](int idx, double w, double Tin) {
                                                contribs.push_back({idx, w, Tin});
                                              });
          const double dT = G[0] * cfg.background[0] + G[1] * cfg.background[1] +
                            G[2] * cfg.background[2];

          double S[3] = {0, 0, 0};
          double SA = 0.0;
          for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
            const int idx = it->idx;
            const ProjState& s = ps[idx];
            const double w = it->w, Ti = it->T;
            const double inv1w = 1.0 / (1.0 - w);
            double dw = dT * (-Tfin * inv1w);
            for (int k = 0; k < 3; ++k)
              dw += G[k] * (Ti * col[idx * 3 + k] - S[k] * inv1w);
            dw += gAlpha * (Ti - SA * inv1w);

            double* a = acc + static_cast<size_t>(idx) * 10;
            const double wt = w * Ti;
            for (int k = 0; k < 3; ++k) a[7 + k] += G[k] * wt;  // dcolor

            // w = alpha * exp(-0.5 maha); clamped w has zero local slope.
            if (w < kMaxW) {
              const double dpower = dw * w;
              const double dx = px - s.u, dy = py - s.v;
              const double qx = s.Q[0] * dx + s.Q[1] * dy;
              const double qy = s.Q[2] * dx + s.Q[3] * dy;
              a[0] += dpower * qx;  // d mean_u
              a[1] += dpower * qy;  // d mean_v
              a[2] += dpower * (-0.5 * dx * dx);
              a[3] += dpower * (-0.5 * dx * dy);
              a[4] += dpower * (-0.5 * dy * dx);
              a[5] += dpower * (-0.5 * dy * dy);
              a[6] += dw * (w / static_cast<double>(opa[idx]));  // dalpha
            }

            for (int k = 0; k < 3; ++k) S[k] += wt * col[idx * 3 + k];
            SA += wt;
          }
        }
      }
    }
  }

  // Reduce threads in fixed order.
  for (int t = 1; t < nthreads; ++t) {
    const double* src = scratch.data() + static_cast<size_t>(t) * M * 10;
    double* dst = scratch.data();
    for (int64_t i = 0; i < static_cast<int64_t>(M) * 10; ++i) dst[i] += src[i];
  }

  RenderGrads out;
  out.pos = Tensor::zeros({M, 3});
  out.opacity = Tensor::zeros({M});
  out.rot = Tensor::zeros({M, 4});
  out.scale = Tensor::zeros({M, 3});
  out.color = Tensor::zeros({M, 3});

  kernels::par_for(M, [&](int64_t i) {
    const ProjState& s = ps[i];
    if (!s.visible) return;
    const double* a = scratch.data() + static_cast<size_t>(i) * 10;
    const double dmu = a[0], dmv = a[1];
    const double dQ[4] = {a[2], a[3], a[4], a[5]};
    const double dalpha = a[6];
    out.opacity[i] = static_cast<float>(dalpha);
    for (int k = 0; k < 3; ++k) out.color[i * 3 + k] = static_cast<float>(a[7 + k]);

    // dSigma2 = -Q dQ Q (full 2x2)
    const double* Q = s.Q;
    double QdQ[4] = {Q[0] * dQ[0] + Q[1] * dQ[2], Q[0] * dQ[1] + Q[1] * dQ[3],
                     Q[2] * dQ[0] + Q[3] * dQ[2], Q[2] * dQ[1] + Q[3] * dQ[3]};
    double dS2[4] = {-(QdQ[0] * Q[0] + QdQ[1] * Q[2]), -(QdQ[0] * Q[1] + QdQ[1] * Q[3]),
                     -(QdQ[2] * Q[0] + QdQ[3] * Q[2]), -(QdQ[2] * Q[1] + QdQ[3] * Q[3])};

    // dM = (dS2 + dS2^T) M sig3
    double sym[4] = {2 * dS2[0], dS2[1] + dS2[2], dS2[1] + dS2[2], 2 * dS2[3]};
    double symM[6];  // (dS2+dS2^T) * M -> 2x3
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c)
        symM[r * 3 + c] = sym[r * 2] * s.Mjw[c] + sym[r * 2 + 1] * s.Mjw[3 + c];
    double dM[6];
    for (int r = 0; r < 2; ++r)
      for (int c = 0; c < 3; ++c) {
        double accv = 0.0;
        for (int k = 0; k < 3; ++k) accv += symM[r * 3 + k] * s.sig3[k * 3 + c];
        dM[r * 3 + c] = accv;
      }
    // dSig3 = M^T dS2 M
    double dSig3[9];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        dSig3[r * 3 + c] = s.Mjw[r] * (dS2[0] * s.Mjw[c] + dS2[1] * s.Mjw[3 + c]) +
                           s.Mjw[3 + r] * (dS2[2] * s.Mjw[c] + dS2[3] * s.Mjw[3 + c]);

    // dJ = dM W^T; J entries depend on the camera-space mean.
    double dJ00 = 0, dJ02 = 0, dJ11 = 0, dJ12 = 0;
    for (int c = 0; c < 3; ++c) {
      dJ00 += dM[c] * cam.R(0, c);
      dJ02 += dM[c] * cam.R(2, c);
      dJ11 += dM[3 + c] * cam.R(1, c);
      dJ12 += dM[3 + c] * cam.R(2, c);
    }
    const double Z2 = s.Z * s.Z, Z3 = Z2 * s.Z;
    double dpc[3] = {0, 0, 0};
    dpc[0] += dJ02 * (-cam.fx / Z2);
    dpc[1] += dJ12 * (-cam.fy / Z2);
    dpc[2] += dJ00 * (-cam.fx / Z2) + dJ11 * (-cam.fy / Z2) +
              dJ02 * (2 * cam.fx * s.X / Z3) + dJ12 * (2 * cam.fy * s.Y / Z3);
    // mean path
    dpc[0] += dmu * cam.fx / s.Z;
    dpc[1] += dmv * cam.fy / s.Z;
    dpc[2] += dmu * (-cam.fx * s.X / Z2) + dmv * (-cam.fy * s.Y / Z2);
    for (int k = 0; k < 3; ++k) {
      double accv = 0.0;
      for (int r = 0; r < 3; ++r) accv += cam.R(r, k) * dpc[r];
      out.pos[i * 3 + k] = static_cast<float>(accv);
    }

    // dSig3 -> rotation and scale
    const double sx = cloud.scale[i * 3], sy = cloud.scale[i * 3 + 1],
                 sz = cloud.scale[i * 3 + 2];
    const double d2[3] = {sx * sx, sy * sy, sz * sz};
    // dR = (G + G^T) R D
    double GR[9];  // (G+G^T) * R
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double accv = 0.0;
        for (int k = 0; k < 3; ++k)
          accv += (dSig3[r * 3 + k] + dSig3[k * 3 + r]) * s.R3[k * 3 + c];
        GR[r * 3 + c] = accv;
      }
    double dR[9];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) dR[r * 3 + c] = GR[r * 3 + c] * d2[c];
    // ds_k = 2 s_k (R^T G R)_kk
    for (int k = 0; k < 3; ++k) {
      double accv = 0.0;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
          accv += s.R3[r * 3 + k] * dSig3[r * 3 + c] * s.R3[c * 3 + k];
      out.scale[i * 3 + k] = static_cast<float>(2.0 * std::sqrt(d2[k]) * accv);
    }

    // dR -> dq through the quaternion rotation formula, then through the
    // normalization q/|q|.
    const double w = s.qn[0], x = s.qn[1], y = s.qn[2], z = s.qn[3];
    const double dRdq[4][9] = {
        {0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0},
        {0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x},
        {-4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y},
        {-4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0}};
    double dqn[4];
    for (int k = 0; k < 4; ++k) {
      double accv = 0.0;
      for (int e = 0; e < 9; ++e) accv += dR[e] * dRdq[k][e];
      dqn[k] = accv;
    }
    double dot = 0.0;
    for (int k = 0; k < 4; ++k) dot += dqn[k] * s.qn[k];
    for (int k = 0; k < 4; ++k)
      out.rot[i * 4 + k] = static_cast<float>((dqn[k] - s.qn[k] * dot) / s.qnorm);
  });

  return out;
}

}  // namespace gsav::render
