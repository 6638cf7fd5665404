// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "core/image.h"
#include "geom/camera.h"

namespace gsav::geom {

// Geometric conditioning renders for the posed template. The geometry map is
// 3-channel (normalized inverse depth, camera-space normal x/y remapped to
// [0,1]); the skeleton map is single-channel white bone segments on black.
// Background is 0 in every channel.
struct CondMaps {
  Image geometry;  // [3,H,W]
  Image skeleton;  // [1,H,W]
};

CondMaps render_conditioning_maps_one(const BodyTemplate& t, const PoseParams& pose,
                                      const CameraParams& cam);
std::vector<CondMaps> render_conditioning_maps(const BodyTemplate& t,
                                               const PoseParams& pose,
                                               const std::vector<CameraParams>& cams);

// Distance from a pixel center to a 2D segment; exposed for the scanline
// oracle in tests.
double point_segment_distance(double px, double py, double ax, double ay, double bx,
                              double by);

// Square crop around the projected head joint, side proportional to the
// projected head size, clamped into the image. Empty when the head is not
// visible (caller skips the face loss).
std::optional<FaceBox> face_crop_box(const BodyTemplate& t, const PoseParams& pose,
                                     const CameraParams& cam, double scale = 3.0);

}  // namespace gsav::geom
