// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <array>
#include <string>
#include <vector>

namespace gsav::geom {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Quat = Eigen::Quaterniond;

// Canonical articulated surface: kinematic tree, per-vertex skinning weights
// and a rectangular per-part UV atlas. Geometry is double precision; the
// exactness tests (identity pose, rigid partition of unity) rely on it.
struct BodyTemplate {
  std::vector<Vec3> vertices;                  // canonical pose, meters
  std::vector<std::array<int, 3>> faces;       // CCW outward
  std::vector<Vec3> joints;                    // rest positions
  std::vector<int> parent;                     // -1 for the single root
  std::vector<std::vector<double>> skin_weights;  // [V][J], rows sum to 1
  std::vector<Vec2> uv_coords;                 // in [0,1]^2
  int head_joint = 0;

  int joint_count() const { return static_cast<int>(joints.size()); }
  int vertex_count() const { return static_cast<int>(vertices.size()); }
  Vec3 centroid() const;

  // Throws std::runtime_error naming the violated invariant.
  void validate() const;

  std::string to_json() const;
  static BodyTemplate from_json(const std::string& text);
  void save(const std::string& path) const;
  static BodyTemplate load(const std::string& path);
};

struct PoseParams {
  std::vector<Quat> joint_rotations;  // unit quaternions, one per joint
  Vec3 root_translation = Vec3::Zero();

  static PoseParams identity(int joint_count);
  void validate(int expected_joints) const;

  std::string to_json() const;
  static PoseParams from_json(const std::string& text);
};

// Seeded procedural humanoid: capsule limbs around a 17-joint skeleton,
// per-part rectangular UV charts packed into a 4x3 atlas. Proportions jitter
// with the seed so different avatars get different bodies; the UV layout is
// identical across seeds.
BodyTemplate make_humanoid(uint64_t seed);

// Atlas slots: 0 torso, 1 head, 2/3 left upper arm/forearm, 4/5 right arm,
// 6/7 left thigh/shin, 8/9 right leg.
constexpr int kHumanoidParts = 10;
struct ChartRect {
  double u0, v0, u1, v1;
};
ChartRect humanoid_chart_rect(int part);

}  // namespace gsav::geom
