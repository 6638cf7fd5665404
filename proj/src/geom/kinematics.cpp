// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "geom/kinematics.h"

#include <functional>
#include <stdexcept>

namespace gsav::geom {

namespace {

Mat4 translation(const Vec3& v) {
  Mat4 m = Mat4::Identity();
  m.block<3, 1>(0, 3) = v;
  return m;
}

Mat4 rotation(const Quat& q) {
  Mat4 m = Mat4::Identity();
  m.block<3, 3>(0, 0) = q.toRotationMatrix();
  return m;
}

}  // namespace

std::vector<Mat4> rest_transforms(const BodyTemplate& t) {
  std::vector<Mat4> out(t.joint_count());
  for (int j = 0; j < t.joint_count(); ++j) out[j] = translation(t.joints[j]);
  return out;
}

std::vector<Mat4> forward_kinematics(const BodyTemplate& t, const PoseParams& pose) {
  pose.validate(t.joint_count());
  const int J = t.joint_count();
  std::vector<Mat4> world(J);
  std::vector<bool> done(J, false);
  // Parents were stored before children by construction, but resolve
  // recursively anyway so arbitrary orderings load correctly.
  std::function<void(int)> solve = [&](int j) {
    if (done[j]) return;
    if (t.parent[j] < 0) {
      world[j] = translation(pose.root_translation) * translation(t.joints[j]) *
                 rotation(pose.joint_rotations[j]);
    } else {
      solve(t.parent[j]);
      world[j] = world[t.parent[j]] *
                 translation(t.joints[j] - t.joints[t.parent[j]]) *
                 rotation(pose.joint_rotations[j]);
    }
    done[j] = true;
  };
  for (int j = 0; j < J; ++j) solve(j);
  return world;
}

std::vector<Mat4> skinning_transforms(const BodyTemplate& t, const PoseParams& pose) {
  std::vector<Mat4> world = forward_kinematics(t, pose);
  for (int j = 0; j < t.joint_count(); ++j)
    world[j] = world[j] * translation(-t.joints[j]);
  return world;
}

Mat4 blend_transform(const std::vector<Mat4>& skinning, const double* weights) {
  Mat4 a = Mat4::Zero();
  for (size_t j = 0; j < skinning.size(); ++j)
    if (weights[j] != 0.0) a += weights[j] * skinning[j];
  return a;
}

std::vector<Mat4> lbs_transforms(const BodyTemplate& t, const PoseParams& pose) {
  const std::vector<Mat4> skin = skinning_transforms(t, pose);
  std::vector<Mat4> out(t.vertex_count());
  for (int v = 0; v < t.vertex_count(); ++v)
    out[v] = blend_transform(skin, t.skin_weights[v].data());
  return out;
}

std::vector<Vec3> pose_vertices(const BodyTemplate& t, const PoseParams& pose) {
  const std::vector<Mat4> skin = skinning_transforms(t, pose);
  std::vector<Vec3> out(t.vertex_count());
  for (int v = 0; v < t.vertex_count(); ++v) {
    const Mat4 a = blend_transform(skin, t.skin_weights[v].data());
    out[v] = a.block<3, 3>(0, 0) * t.vertices[v] + a.block<3, 1>(0, 3);
  }
  return out;
}

Mat3 polar_rotation(const Mat3& m) {
  if (m.determinant() <= 0.0)
    throw std::runtime_error("polar_rotation: non-positive determinant");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 flip = Mat3::Identity();
    flip(2, 2) = -1.0;
    r = svd.matrixU() * flip * svd.matrixV().transpose();
  }
  return r;
}

}  // namespace gsav::geom
