// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "geom/body_template.h"

namespace gsav::geom {

// Pinhole camera. R maps world to camera (x right, y down, z forward);
// p_cam = R p + t.
struct CameraParams {
  double fx = 100.0, fy = 100.0;
  double cx = 32.0, cy = 32.0;
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  int width = 64, height = 64;

  Vec3 center() const { return -(R.transpose() * t); }
  void validate() const;

  std::string to_json() const;
  static CameraParams from_json(const std::string& text);
};

struct Projection {
  double u = 0.0, v = 0.0;
  double depth = 0.0;  // camera-frame z
  bool visible = false;
};

// Perspective projection; points behind the near plane come back with
// visible=false rather than throwing.
Projection project(const CameraParams& cam, const Vec3& p, double near_plane = 1e-6);

// Inverse of project at a given camera depth.
Vec3 unproject(const CameraParams& cam, double u, double v, double depth);

// Camera on a viewing ring: positioned at `eye`, looking at `target`, world
// up (0,1,0) appearing upward in the image.
CameraParams look_at(const Vec3& eye, const Vec3& target, double focal, int width,
                     int height);

// Camera equivalent to cropping `box` (square, pixels) from `cam` and
// resampling to out_size x out_size.
struct FaceBox {
  int x0 = 0, y0 = 0, side = 0;
};
CameraParams crop_camera(const CameraParams& cam, const FaceBox& box, int out_size);

}  // namespace gsav::geom
