// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "geom/camera.h"

#include <stdexcept>

#include <json.hpp>

namespace gsav::geom {

using nlohmann::json;

void CameraParams::validate() const {
  if (fx <= 0.0 || fy <= 0.0) throw std::runtime_error("camera: focal length must be > 0");
  if (width <= 0 || height <= 0) throw std::runtime_error("camera: empty image size");
  const Mat3 should_be_id = R * R.transpose();
  if ((should_be_id - Mat3::Identity()).norm() > 1e-6)
    throw std::runtime_error("camera: rotation part is not orthonormal");
  if (std::abs(R.determinant() - 1.0) > 1e-6)
    throw std::runtime_error("camera: rotation determinant is not +1");
}

std::string CameraParams::to_json() const {
  json j;
  j["fx"] = fx;
  j["fy"] = fy;
  j["cx"] = cx;
  j["cy"] = cy;
  j["width"] = width;
  j["height"] = height;
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back({R(r, 0), R(r, 1), R(r, 2)});
  j["R"] = rows;
  j["t"] = {t.x(), t.y(), t.z()};
  return j.dump();
}

CameraParams CameraParams::from_json(const std::string& text) {
  json j = json::parse(text);
  CameraParams c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  const auto& rows = j.at("R");
  for (int r = 0; r < 3; ++r)
    for (int col = 0; col < 3; ++col) c.R(r, col) = rows[r][col].get<double>();
  const auto& jt = j.at("t");
  c.t = Vec3(jt[0].get<double>(), jt[1].get<double>(), jt[2].get<double>());
  c.validate();
  return c;
}

Projection project(const CameraParams& cam, const Vec3& p, double near_plane) {
  const Vec3 pc = cam.R * p + cam.t;
  Projection out;
  out.depth = pc.z();
  if (pc.z() <= near_plane) return out;  // behind camera: not visible
  out.u = cam.fx * pc.x() / pc.z() + cam.cx;
  out.v = cam.fy * pc.y() / pc.z() + cam.cy;
  out.visible = true;
  return out;
}

Vec3 unproject(const CameraParams& cam, double u, double v, double depth) {
  const Vec3 pc((u - cam.cx) * depth / cam.fx, (v - cam.cy) * depth / cam.fy, depth);
  return cam.R.transpose() * (pc - cam.t);
}

CameraParams look_at(const Vec3& eye, const Vec3& target, double focal, int width,
                     int height) {
  CameraParams cam;
  const Vec3 up(0.0, 1.0, 0.0);
  const Vec3 f = (target - eye).normalized();
  Vec3 d = f * f.dot(up) - up;  // image-down direction in world space
  const double dn = d.norm();
  if (dn < 1e-9) throw std::runtime_error("look_at: view direction parallel to up");
  d /= dn;
  const Vec3 r = d.cross(f);
  cam.R.row(0) = r;
  cam.R.row(1) = d;
  cam.R.row(2) = f;
  cam.t = -(cam.R * eye);
  cam.fx = cam.fy = focal;
  cam.cx = width * 0.5;
  cam.cy = height * 0.5;
  cam.width = width;
  cam.height = height;
  return cam;
}

CameraParams crop_camera(const CameraParams& cam, const FaceBox& box, int out_size) {
  if (box.side <= 0) throw std::runtime_error("crop_camera: empty box");
  const double s = static_cast<double>(out_size) / box.side;
  CameraParams out = cam;
  out.fx = cam.fx * s;
  out.fy = cam.fy * s;
  out.cx = (cam.cx - box.x0) * s;
  out.cy = (cam.cy - box.y0) * s;
  out.width = out.height = out_size;
  return out;
}

}  // namespace gsav::geom
