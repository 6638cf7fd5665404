// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "geom/cond_maps.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "geom/kinematics.h"

namespace gsav::geom {

namespace {

// Inverse-depth normalization range for the geometry channel.
constexpr double kNearVis = 0.5;
constexpr double kFarVis = 10.0;
constexpr double kLineHalfWidth = 1.0;  // full-intensity core radius, px
constexpr double kLineFalloff = 1.0;    // AA edge width, px

}  // namespace

double point_segment_distance(double px, double py, double ax, double ay, double bx,
                              double by) {
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double s = len2 > 0.0 ? ((px - ax) * dx + (py - ay) * dy) / len2 : 0.0;
  s = std::clamp(s, 0.0, 1.0);
  const double qx = ax + s * dx, qy = ay + s * dy;
  return std::hypot(px - qx, py - qy);
}

CondMaps render_conditioning_maps_one(const BodyTemplate& t, const PoseParams& pose,
                                      const CameraParams& cam) {
  const int W = cam.width, H = cam.height;
  CondMaps out;
  out.geometry = Image(3, H, W);
  out.skeleton = Image(1, H, W);

  // Posed geometry in camera space.
  const std::vector<Vec3> posed = pose_vertices(t, pose);
  std::vector<Vec3> pc(posed.size());
  for (size_t i = 0; i < posed.size(); ++i) pc[i] = cam.R * posed[i] + cam.t;

  std::vector<double> zbuf(static_cast<size_t>(H) * W,
                           std::numeric_limits<double>::infinity());

  for (const auto& f : t.faces) {
    const Vec3& a = pc[f[0]];
    const Vec3& b = pc[f[1]];
    const Vec3& c = pc[f[2]];
    if (a.z() <= kNearVis * 0.2 || b.z() <= kNearVis * 0.2 || c.z() <= kNearVis * 0.2)
      continue;  // whole triangle culled near the eye plane
    const double au = cam.fx * a.x() / a.z() + cam.cx;
    const double av = cam.fy * a.y() / a.z() + cam.cy;
    const double bu = cam.fx * b.x() / b.z() + cam.cx;
    const double bv = cam.fy * b.y() / b.z() + cam.cy;
    const double cu = cam.fx * c.x() / c.z() + cam.cx;
    const double cv = cam.fy * c.y() / c.z() + cam.cy;

    const int x0 = std::max(0, static_cast<int>(std::floor(std::min({au, bu, cu}))));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max({au, bu, cu}))));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min({av, bv, cv}))));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max({av, bv, cv}))));
    if (x0 > x1 || y0 > y1) continue;

    const double area = (bu - au) * (cv - av) - (cu - au) * (bv - av);
    if (std::abs(area) < 1e-12) continue;

    Vec3 n = (b - a).cross(c - a);
    const double nn = n.norm();
    if (nn < 1e-12) continue;
    n /= nn;
    if (n.z() > 0.0) n = -n;  // face the camera

    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double px = x + 0.5, py = y + 0.5;
        const double w0 = ((bu - px) * (cv - py) - (cu - px) * (bv - py)) / area;
        const double w1 = ((cu - px) * (av - py) - (au - px) * (cv - py)) / area;
        const double w2 = 1.0 - w0 - w1;
        if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
        const double z = w0 * a.z() + w1 * b.z() + w2 * c.z();
        double& zb = zbuf[static_cast<size_t>(y) * W + x];
        if (z >= zb) continue;
        zb = z;
        const double invd = std::clamp(
            (1.0 / z - 1.0 / kFarVis) / (1.0 / kNearVis - 1.0 / kFarVis), 0.0, 1.0);
        out.geometry.at(0, y, x) = static_cast<float>(invd);
        out.geometry.at(1, y, x) = static_cast<float>(0.5 * (n.x() + 1.0));
        out.geometry.at(2, y, x) = static_cast<float>(0.5 * (n.y() + 1.0));
      }
    }
  }

  // Skeleton: anti-aliased parent-child segments.
  const std::vector<Mat4> world = forward_kinematics(t, pose);
  std::vector<Projection> jp(t.joint_count());
  for (int j = 0; j < t.joint_count(); ++j)
    jp[j] = project(cam, world[j].block<3, 1>(0, 3));
  for (int j = 0; j < t.joint_count(); ++j) {
    const int p = t.parent[j];
    if (p < 0 || !jp[j].visible || !jp[p].visible) continue;
    const double reach = kLineHalfWidth + kLineFalloff;
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(jp[j].u, jp[p].u) - reach)));
    const int x1 = std::min(W - 1, static_cast<int>(std::ceil(std::max(jp[j].u, jp[p].u) + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(jp[j].v, jp[p].v) - reach)));
    const int y1 = std::min(H - 1, static_cast<int>(std::ceil(std::max(jp[j].v, jp[p].v) + reach)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const double d = point_segment_distance(x + 0.5, y + 0.5, jp[j].u, jp[j].v,
                                                jp[p].u, jp[p].v);
        const double val =
            std::clamp((kLineHalfWidth + kLineFalloff - d) / kLineFalloff, 0.0, 1.0);
        float& px = out.skeleton.at(0, y, x);
        px = std::max(px, static_cast<float>(val));
      }
    }
  }
  return out;
}

std::vector<CondMaps> render_conditioning_maps(const BodyTemplate& t,
                                               const PoseParams& pose,
                                               const std::vector<CameraParams>& cams) {
  if (cams.empty()) throw std::runtime_error("render_conditioning_maps: no cameras");
  std::vector<CondMaps> out;
  out.reserve(cams.size());
  for (const auto& cam : cams) out.push_back(render_conditioning_maps_one(t, pose, cam));
  return out;
}

std::optional<FaceBox> face_crop_box(const BodyTemplate& t, const PoseParams& pose,
                                     const CameraParams& cam, double scale) {
  const std::vector<Mat4> world = forward_kinematics(t, pose);
  const Vec3 head = world[t.head_joint].block<3, 1>(0, 3);
  const int neck = t.parent[t.head_joint];
  const Vec3 neck_pos =
      neck >= 0 ? Vec3(world[neck].block<3, 1>(0, 3)) : head - Vec3(0, 0.1, 0);

  const Projection hp = project(cam, head);
  if (!hp.visible) return std::nullopt;
  if (hp.u < 0.0 || hp.u >= cam.width || hp.v < 0.0 || hp.v >= cam.height)
    return std::nullopt;

  const double head_radius = (head - neck_pos).norm();
  const double radius_px = cam.fx * head_radius / hp.depth;
  int side = std::max(2, static_cast<int>(std::lround(scale * radius_px)));
  side = std::min({side, cam.width, cam.height});

  int x0 = static_cast<int>(std::lround(hp.u - side * 0.5));
  int y0 = static_cast<int>(std::lround(hp.v - side * 0.5));
  x0 = std::clamp(x0, 0, cam.width - side);
  y0 = std::clamp(y0, 0, cam.height - side);
  return FaceBox{x0, y0, side};
}

}  // namespace gsav::geom
