// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "core/image.h"
#include "gauss/gaussians.h"
#include "geom/camera.h"

namespace gsav::render {

struct RenderConfig {
  double near_plane = 0.05;   // camera-z culling plane, meters
  double blur = 0.3;          // screen-space covariance floor, px^2
  double w_min = 1e-4;        // contribution floor
  double sigma_cut = 3.0;     // Mahalanobis footprint cutoff
  double stop_T = 1e-4;       // early transmittance stop
  double background[3] = {1.0, 1.0, 1.0};
  int tile = 16;
};

struct ProjectedGaussian {
  double mean_u = 0.0, mean_v = 0.0;
  double cov[3] = {0.0, 0.0, 0.0};  // (a,b,c): [[a,b],[b,c]], blur included
  double depth = 0.0;
  float color[3] = {0, 0, 0};
  float opacity = 0.0f;
  int src = 0;  // source index / texel tiebreak
  bool visible = false;
};

struct RenderOutput {
  Image rgb;            // [3,H,W]
  Image alpha;          // [1,H,W] accumulated weight
  Image transmittance;  // [1,H,W] final T
};

// EWA projection: cov2d = J W Sigma W^T J^T + blur*I. Degenerate or
// behind-camera primitives come back with visible=false.
std::vector<ProjectedGaussian> project_gaussians(const gauss::GaussianCloud& cloud,
                                                 const geom::CameraParams& cam,
                                                 const RenderConfig& cfg = {});

// Front-to-back alpha compositing, stable depth order (tie-break by src).
RenderOutput rasterize(const std::vector<ProjectedGaussian>& projected, int width,
                       int height, const RenderConfig& cfg = {});

RenderOutput render(const gauss::GaussianCloud& cloud, const geom::CameraParams& cam,
                    const RenderConfig& cfg = {});

// Gradients of a scalar loss with respect to every primitive attribute,
// given dL/d(rgb) (and optionally dL/d(alpha)). Math runs in double.
struct RenderGrads {
  Tensor pos;      // [M,3]
  Tensor opacity;  // [M]
  Tensor rot;      // [M,4]
  Tensor scale;    // [M,3]
  Tensor color;    // [M,3]
};

RenderGrads render_backward(const gauss::GaussianCloud& cloud,
                            const geom::CameraParams& cam, const RenderConfig& cfg,
                            const Tensor& grad_rgb, const Tensor* grad_alpha = nullptr);

// Mean rgb value of the render, accumulated entirely in double. Used by the
// finite-difference gradient checks, where float quantization of the image
// would dominate the difference quotient.
double render_scalar_mean(const gauss::GaussianCloud& cloud,
                          const geom::CameraParams& cam, const RenderConfig& cfg = {});

}  // namespace gsav::render
