// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "core/tensor.h"
#include "geom/body_template.h"

namespace gsav::gauss {

// Per-texel Gaussian attribute channels on the UV plane. Channel layout
// (row-major texels, idx = v*res_u + u):
//   0-2  position offset (raw, tanh-squashed on decode)
//   3    opacity logit
//   4-7  rotation (w,x,y,z before normalization, identity-offset on w)
//   8-10 log scale
//   11-13 color logit
struct UVGaussianMap {
  int res_u = 0, res_v = 0;
  Tensor channels;         // [14, res_v*res_u]
  std::vector<char> mask;  // texels covered by the UV chart

  static constexpr int kChannels = 14;
  int texel_count() const { return res_u * res_v; }
};

// Canonical surface geometry sampled at covered texel centers: interpolated
// position, skinning weights, and a tangent/bitangent/normal frame.
struct UvBasePoints {
  int res_u = 0, res_v = 0;
  std::vector<char> mask;                       // full grid
  std::vector<int> texel;                       // linear indices of covered texels
  std::vector<geom::Vec3> point;                // per covered texel
  std::vector<geom::Quat> frame;                // local->world rotation
  std::vector<std::vector<double>> weights;     // interpolated skin weights
  std::vector<double> spacing;                  // world-space texel pitch

  int count() const { return static_cast<int>(texel.size()); }
};

// Rasterizes the template's UV triangles over the texel grid. Texel centers
// inside a triangle get barycentric surface samples. Throws if resolution < 4.
UvBasePoints uv_base_points(const geom::BodyTemplate& t, int res_u, int res_v);

}  // namespace gsav::gauss
