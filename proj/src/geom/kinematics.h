// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "geom/body_template.h"

namespace gsav::geom {

// Rest transform of joint j: pure translation to its rest position.
std::vector<Mat4> rest_transforms(const BodyTemplate& t);

// Posed world transform per joint, composed parent-first along the tree.
// Throws on joint-count mismatch.
std::vector<Mat4> forward_kinematics(const BodyTemplate& t, const PoseParams& pose);

// Per-joint skinning matrices T_posed * T_rest^{-1}.
std::vector<Mat4> skinning_transforms(const BodyTemplate& t, const PoseParams& pose);

// Weighted blend of skinning matrices; `weights` has one entry per joint.
Mat4 blend_transform(const std::vector<Mat4>& skinning, const double* weights);

// Per-vertex blended transforms A_v = sum_j w_vj * (T_j^posed (T_j^rest)^-1).
std::vector<Mat4> lbs_transforms(const BodyTemplate& t, const PoseParams& pose);

// Posed vertex positions (A_v applied to canonical vertices).
std::vector<Vec3> pose_vertices(const BodyTemplate& t, const PoseParams& pose);

// Nearest rotation factor (polar decomposition) of a possibly non-rigid
// linear blend. Throws if the determinant is not positive.
Mat3 polar_rotation(const Mat3& m);

}  // namespace gsav::geom
