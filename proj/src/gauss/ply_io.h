// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "gauss/gaussians.h"

namespace gsav::gauss {

// Binary PLY in the community 3DGS layout (x,y,z, nx,ny,nz, f_dc_0..2,
// opacity as logit, scale_0..2 as logs, rot_0..3) so third-party splat
// viewers open the files directly. Colors map through the SH DC convention
// f_dc = (c - 0.5) / 0.28209479177387814.
void save_gaussian_ply(const std::string& path, const GaussianCloud& cloud);
GaussianCloud load_gaussian_ply(const std::string& path);

}  // namespace gsav::gauss
