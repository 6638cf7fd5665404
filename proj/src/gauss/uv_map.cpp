// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "gauss/uv_map.h"

#include <cmath>
#include <stdexcept>

namespace gsav::gauss {

using geom::Mat3;
using geom::Quat;
using geom::Vec2;
using geom::Vec3;

UvBasePoints uv_base_points(const geom::BodyTemplate& t, int res_u, int res_v) {
  if (res_u < 4 || res_v < 4)
    throw std::runtime_error("uv_base_points: resolution must be at least 4");

  // Area-weighted vertex normals for the frame's z axis.
  std::vector<Vec3> vnormal(t.vertex_count(), Vec3::Zero());
  for (const auto& f : t.faces) {
    const Vec3 n = (t.vertices[f[1]] - t.vertices[f[0]])
                       .cross(t.vertices[f[2]] - t.vertices[f[0]]);
    for (int k = 0; k < 3; ++k) vnormal[f[k]] += n;
  }
  for (auto& n : vnormal) {
    const double l = n.norm();
    if (l > 1e-12) n /= l;
  }

  UvBasePoints out;
  out.res_u = res_u;
  out.res_v = res_v;
  out.mask.assign(static_cast<size_t>(res_u) * res_v, 0);

  const int J = t.joint_count();
  // First triangle hit wins; charts are disjoint so overlaps only occur on
  // shared triangle edges within a part.
  for (const auto& f : t.faces) {
    const Vec2& a = t.uv_coords[f[0]];
    const Vec2& b = t.uv_coords[f[1]];
    const Vec2& c = t.uv_coords[f[2]];
    const double area = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    if (std::abs(area) < 1e-14) continue;

    const int u0 = std::max(0, static_cast<int>(std::floor(std::min({a.x(), b.x(), c.x()}) * res_u - 0.5)));
    const int u1 = std::min(res_u - 1, static_cast<int>(std::ceil(std::max({a.x(), b.x(), c.x()}) * res_u)));
    const int v0 = std::max(0, static_cast<int>(std::floor(std::min({a.y(), b.y(), c.y()}) * res_v - 0.5)));
    const int v1 = std::min(res_v - 1, static_cast<int>(std::ceil(std::max({a.y(), b.y(), c.y()}) * res_v)));

    // Tangent along increasing u in world space.
    const Vec3 dp1 = t.vertices[f[1]] - t.vertices[f[0]];
    const Vec3 dp2 = t.vertices[f[2]] - t.vertices[f[0]];
    const double du1 = b.x() - a.x(), dv1 = b.y() - a.y();
    const double du2 = c.x() - a.x(), dv2 = c.y() - a.y();
    const double denom = du1 * dv2 - du2 * dv1;
    const Vec3 dPdu = std::abs(denom) > 1e-14 ? Vec3((dv2 * dp1 - dv1 * dp2) / denom)
                                              : dp1;
    const Vec3 dPdv = std::abs(denom) > 1e-14 ? Vec3((du1 * dp2 - du2 * dp1) / denom)
                                              : dp2;

    for (int tv = v0; tv <= v1; ++tv) {
      for (int tu = u0; tu <= u1; ++tu) {
        const size_t lin = static_cast<size_t>(tv) * res_u + tu;
        if (out.mask[lin]) continue;
        const double px = (tu + 0.5) / res_u;
        const double py = (tv + 0.5) / res_v;
        const double w0 = ((b.x() - px) * (c.y() - py) - (c.x() - px) * (b.y() - py)) / area;
        const double w1 = ((c.x() - px) * (a.y() - py) - (a.x() - px) * (c.y() - py)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < -1e-12 || w1 < -1e-12 || w2 < -1e-12) continue;

        out.mask[lin] = 1;
        out.texel.push_back(static_cast<int>(lin));
        out.point.push_back(w0 * t.vertices[f[0]] + w1 * t.vertices[f[1]] +
                            w2 * t.vertices[f[2]]);

        Vec3 n = w0 * vnormal[f[0]] + w1 * vnormal[f[1]] + w2 * vnormal[f[2]];
        if (n.norm() < 1e-9) n = dPdu.cross(dPdv);
        n.normalize();
        Vec3 tan = dPdu - n * n.dot(dPdu);
        if (tan.norm() < 1e-9) {
          tan = std::abs(n.y()) < 0.9 ? Vec3(0, 1, 0).cross(n) : Vec3(1, 0, 0).cross(n);
        }
        tan.normalize();
        const Vec3 bit = n.cross(tan);
        Mat3 fr;
        fr.col(0) = tan;
        fr.col(1) = bit;
        fr.col(2) = n;
        out.frame.emplace_back(fr);

        std::vector<double> w(J, 0.0);
        double sum = 0.0;
        for (int jj = 0; jj < J; ++jj) {
          w[jj] = w0 * t.skin_weights[f[0]][jj] + w1 * t.skin_weights[f[1]][jj] +
                  w2 * t.skin_weights[f[2]][jj];
          if (w[jj] < 0.0) w[jj] = 0.0;
          sum += w[jj];
        }
        for (double& x : w) x /= sum;
        out.weights.push_back(std::move(w));

        out.spacing.push_back(0.5 * (dPdu.norm() / res_u + dPdv.norm() / res_v));
      }
    }
  }
  return out;
}

}  // namespace gsav::gauss
