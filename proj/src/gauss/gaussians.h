// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "gauss/uv_map.h"
#include "nn/graph.h"

namespace gsav::gauss {

// Struct-of-arrays Gaussian cloud. Attributes are float tensors; geometry
// math runs in double inside the consumers.
struct GaussianCloud {
  Tensor pos;      // [M,3]
  Tensor opacity;  // [M]
  Tensor rot;      // [M,4] unit quaternions (w,x,y,z)
  Tensor scale;    // [M,3] positive, meters
  Tensor color;    // [M,3] in [0,1]
  std::vector<int> texel;  // unique source texel per primitive

  int count() const { return pos.defined() ? pos.dim(0) : 0; }
  void validate() const;
};

// Differentiable counterpart used inside training graphs.
struct CloudValues {
  nn::Value pos, opacity, rot, scale, color;
  std::vector<int> texel;

  GaussianCloud detach() const;
};

struct DecodeConfig {
  double max_offset = 0.05;  // meters, tanh bound on UV-regressed offsets
  double s_min = 1e-4;       // meters
  double s_max = 0.1;
  double s_unit = 0.01;      // scale at log-scale channel 0
};

// Decode the 14-channel UV map into a canonical cloud. Ordering follows
// row-major texel order of the covered texels. Throws on non-finite channel
// values, naming the texel.
GaussianCloud decode_uv_map(const UVGaussianMap& map, const UvBasePoints& bases,
                            const DecodeConfig& cfg = {});
// Graph version: channels is a [14, res_v*res_u] Value.
CloudValues decode_uv_map_val(const nn::Value& channels, const UvBasePoints& bases,
                              const DecodeConfig& cfg = {});

// 3x3 covariance R(r) diag(s)^2 R(r)^T of one primitive.
geom::Mat3 covariance(const geom::Quat& r, const geom::Vec3& s);

// LBS pose deformation: positions and rotations update, opacity/scale/color
// pass through untouched. Throws on non-positive blended determinant,
// naming the texel.
GaussianCloud deform(const GaussianCloud& cloud, const UvBasePoints& bases,
                     const geom::BodyTemplate& t, const geom::PoseParams& pose);
CloudValues deform_val(const CloudValues& cloud, const UvBasePoints& bases,
                       const geom::BodyTemplate& t, const geom::PoseParams& pose);

// Double-precision single-texel decode, shared with the production op;
// outputs ordered (pos3, opacity, rot4, scale3, color3). The Jacobian
// counterpart backs the finite-difference gradient checks.
void decode_texel_f64(const double raw[UVGaussianMap::kChannels],
                      const geom::Vec3& base, const geom::Quat& frame,
                      const DecodeConfig& cfg,
                      double out[UVGaussianMap::kChannels]);
void decode_texel_jacobian(const double raw[UVGaussianMap::kChannels],
                           const geom::Vec3& base, const geom::Quat& frame,
                           const DecodeConfig& cfg,
                           double jac[UVGaussianMap::kChannels]
                                     [UVGaussianMap::kChannels]);

}  // namespace gsav::gauss
