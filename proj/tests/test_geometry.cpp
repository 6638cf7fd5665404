// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "core/rng.h"
#include "geom/body_template.h"
#include "geom/camera.h"
#include "geom/cond_maps.h"
#include "geom/kinematics.h"

using namespace gsav;
using geom::Mat3;
using geom::Mat4;
using geom::Quat;
using geom::Vec3;

namespace {

// Two-joint chain at the origin with one vertex, for hand-checked cases.
geom::BodyTemplate tiny_template() {
  geom::BodyTemplate t;
  t.joints = {Vec3(0, 0, 0), Vec3(0, 1, 0)};
  t.parent = {-1, 0};
  t.vertices = {Vec3(0, 1, 0), Vec3(0.1, 0.5, 0), Vec3(0, 0.5, 0.1)};
  t.faces = {{0, 1, 2}};
  t.skin_weights = {{0.0, 1.0}, {1.0, 0.0}, {0.5, 0.5}};
  t.uv_coords = {geom::Vec2(0.1, 0.1), geom::Vec2(0.9, 0.1), geom::Vec2(0.1, 0.9)};
  t.head_joint = 1;
  t.validate();
  return t;
}

Quat rot_z_90() { return Quat(Eigen::AngleAxisd(M_PI / 2, Vec3(0, 0, 1))); }

}  // namespace

TEST_CASE("forward kinematics: identity pose reproduces rest transforms") {
  const geom::BodyTemplate t = geom::make_humanoid(7);
  const auto world = geom::forward_kinematics(t, geom::PoseParams::identity(t.joint_count()));
  const auto rest = geom::rest_transforms(t);
  for (int j = 0; j < t.joint_count(); ++j)
    CHECK((world[j] - rest[j]).norm() < 1e-6);
}

TEST_CASE("forward kinematics: 90-degree z rotation moves the child to (-1,0,0)") {
  const geom::BodyTemplate t = tiny_template();
  geom::PoseParams pose = geom::PoseParams::identity(2);
  pose.joint_rotations[0] = rot_z_90();
  const auto world = geom::forward_kinematics(t, pose);
  const Vec3 child = world[1].block<3, 1>(0, 3);
  CHECK(child.x() == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(child.y() == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(child.z() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("forward kinematics: root translation shifts every joint") {
  const geom::BodyTemplate t = geom::make_humanoid(3);
  geom::PoseParams pose = geom::PoseParams::identity(t.joint_count());
  pose.root_translation = Vec3(0, 0, 1);
  const auto world = geom::forward_kinematics(t, pose);
  const auto rest = geom::rest_transforms(t);
  for (int j = 0; j < t.joint_count(); ++j) {
    const Vec3 d = world[j].block<3, 1>(0, 3) - rest[j].block<3, 1>(0, 3);
    CHECK((d - Vec3(0, 0, 1)).norm() < 1e-9);
  }
}

TEST_CASE("forward kinematics rejects joint-count mismatch") {
  const geom::BodyTemplate t = tiny_template();
  CHECK_THROWS(geom::forward_kinematics(t, geom::PoseParams::identity(5)));
}

TEST_CASE("lbs: identity pose gives identity per-vertex transforms") {
  const geom::BodyTemplate t = geom::make_humanoid(11);
  const auto A = geom::lbs_transforms(t, geom::PoseParams::identity(t.joint_count()));
  for (const auto& a : A) CHECK((a - Mat4::Identity()).norm() < 1e-6);
}

TEST_CASE("lbs: one-hot weights under a joint rotation are exactly rigid") {
  const geom::BodyTemplate t = tiny_template();
  geom::PoseParams pose = geom::PoseParams::identity(2);
  pose.joint_rotations[1] = rot_z_90();
  const auto A = geom::lbs_transforms(t, pose);
  // vertex 0 is skinned 100% to joint 1
  const Mat3 r = A[0].block<3, 3>(0, 0);
  CHECK((r - rot_z_90().toRotationMatrix()).norm() < 1e-12);
  CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("lbs: half-half weights blend the two joint transforms elementwise") {
  const geom::BodyTemplate t = tiny_template();
  geom::PoseParams pose = geom::PoseParams::identity(2);
  pose.joint_rotations[0] = rot_z_90();
  const auto skin = geom::skinning_transforms(t, pose);
  const auto A = geom::lbs_transforms(t, pose);
  const Mat4 expected = 0.5 * skin[0] + 0.5 * skin[1];
  CHECK((A[2] - expected).norm() < 1e-12);
}

TEST_CASE("lbs: equal rigid transform on all joints reaches every vertex") {
  const geom::BodyTemplate t = geom::make_humanoid(5);
  Rng rng(42);
  const Quat q = Quat(Eigen::AngleAxisd(rng.uniform(-2, 2), Vec3(rng.normal(), rng.normal(), rng.normal()).normalized()));
  geom::PoseParams pose = geom::PoseParams::identity(t.joint_count());
  // Same rotation about the root joint; children inherit it, so give the
  // rigid map to the root only and identity elsewhere: that IS a rigid map
  // of the whole body. Partition of unity then forces A_v = that map.
  pose.joint_rotations[0] = q;
  pose.root_translation = Vec3(0.2, -0.1, 0.4);
  const auto skin = geom::skinning_transforms(t, pose);
  const auto A = geom::lbs_transforms(t, pose);
  for (int v = 0; v < t.vertex_count(); v += 37)
    CHECK((A[v] - skin[0]).norm() < 1e-6);
}

TEST_CASE("project: optical axis, hand-worked pixel, and degenerate depth") {
  geom::CameraParams cam;
  cam.fx = cam.fy = 100.0;
  cam.cx = cam.cy = 64.0;
  cam.width = cam.height = 128;

  auto axis = geom::project(cam, Vec3(0, 0, 2.5));
  CHECK(axis.visible);
  CHECK(axis.u == doctest::Approx(64.0));
  CHECK(axis.v == doctest::Approx(64.0));
  CHECK(axis.depth == doctest::Approx(2.5));

  auto p = geom::project(cam, Vec3(0.1, 0, 1));
  CHECK(p.u == doctest::Approx(74.0));
  CHECK(p.v == doctest::Approx(64.0));

  CHECK_FALSE(geom::project(cam, Vec3(0, 0, 0)).visible);
  CHECK_FALSE(geom::project(cam, Vec3(0.3, 0.1, -1)).visible);
}

TEST_CASE("project/unproject round trip") {
  Rng rng(9);
  const geom::CameraParams cam =
      geom::look_at(Vec3(1.2, 0.4, 2.8), Vec3(0, 0.9, 0), 80.0, 64, 64);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p(rng.uniform(-1, 1), rng.uniform(0, 2), rng.uniform(-1, 1));
    const auto pr = geom::project(cam, p);
    if (!pr.visible) continue;
    const Vec3 back = geom::unproject(cam, pr.u, pr.v, pr.depth);
    CHECK((back - p).norm() < 1e-5);
  }
}

TEST_CASE("conditioning maps: template behind the camera renders background") {
  const geom::BodyTemplate t = geom::make_humanoid(2);
  const geom::PoseParams pose = geom::PoseParams::identity(t.joint_count());
  // Camera looking away from the body.
  const geom::CameraParams cam =
      geom::look_at(t.centroid() + Vec3(0, 0, 3), t.centroid() + Vec3(0, 0, 10), 70, 64, 64);
  const auto maps = geom::render_conditioning_maps_one(t, pose, cam);
  for (int64_t i = 0; i < maps.geometry.t.numel(); ++i) CHECK(maps.geometry.t[i] == 0.0f);
  for (int64_t i = 0; i < maps.skeleton.t.numel(); ++i) CHECK(maps.skeleton.t[i] == 0.0f);
}

TEST_CASE("skeleton map support matches the brute-force segment oracle") {
  const geom::BodyTemplate t = geom::make_humanoid(4);
  const geom::PoseParams pose = geom::PoseParams::identity(t.joint_count());
  const geom::CameraParams cam =
      geom::look_at(t.centroid() + Vec3(0.4, 0.2, 2.7), t.centroid(), 70, 64, 64);
  const auto maps = geom::render_conditioning_maps_one(t, pose, cam);

  // Oracle: exhaustive per-pixel distance over all projected bones.
  const auto world = geom::forward_kinematics(t, pose);
  std::vector<std::array<double, 4>> segs;
  for (int j = 0; j < t.joint_count(); ++j) {
    if (t.parent[j] < 0) continue;
    const auto a = geom::project(cam, world[j].block<3, 1>(0, 3));
    const auto b = geom::project(cam, world[t.parent[j]].block<3, 1>(0, 3));
    if (a.visible && b.visible) segs.push_back({a.u, a.v, b.u, b.v});
  }
  REQUIRE_FALSE(segs.empty());
  int nonzero = 0;
  for (int y = 0; y < 64; ++y) {
    for (int x = 0; x < 64; ++x) {
      double dmin = 1e9;
      for (const auto& s : segs)
        dmin = std::min(dmin, geom::point_segment_distance(x + 0.5, y + 0.5, s[0], s[1], s[2], s[3]));
      const float v = maps.skeleton.at(0, y, x);
      if (dmin < 1.95)
        CHECK(v > 0.0f);
      else if (dmin > 2.05)
        CHECK(v == 0.0f);
      if (v > 0.0f) ++nonzero;
    }
  }
  CHECK(nonzero > 50);  // the skeleton is actually drawn
}

TEST_CASE("180-degree yaw pair mirrors the projected root about the principal point") {
  const geom::BodyTemplate t = geom::make_humanoid(6);
  const geom::PoseParams pose = geom::PoseParams::identity(t.joint_count());
  const Vec3 c = t.centroid();
  const geom::CameraParams cam0 = geom::look_at(c + Vec3(0, 0, 2.6), c, 70, 64, 64);
  const geom::CameraParams cam1 = geom::look_at(c - Vec3(0, 0, 2.6), c, 70, 64, 64);
  const auto world = geom::forward_kinematics(t, pose);
  const Vec3 root = world[0].block<3, 1>(0, 3);
  const auto p0 = geom::project(cam0, root);
  const auto p1 = geom::project(cam1, root);
  REQUIRE(p0.visible);
  REQUIRE(p1.visible);
  CHECK(p0.u - cam0.cx == doctest::Approx(-(p1.u - cam1.cx)).epsilon(1e-9));
  CHECK(p0.v == doctest::Approx(p1.v).epsilon(1e-9));
}

TEST_CASE("face crop box: axis centering, corner clamping, perspective halving") {
  const geom::BodyTemplate t = geom::make_humanoid(8);
  const geom::PoseParams pose = geom::PoseParams::identity(t.joint_count());
  const auto rest = geom::rest_transforms(t);
  const Vec3 head = rest[t.head_joint].block<3, 1>(0, 3);

  // Camera aimed exactly at the head: box centered at the principal point.
  {
    const geom::CameraParams cam = geom::look_at(head + Vec3(0, 0, 2.0), head, 80, 64, 64);
    const auto box = geom::face_crop_box(t, pose, cam);
    REQUIRE(box);
    CHECK(box->x0 + box->side / 2 == doctest::Approx(32).epsilon(0.05));
    CHECK(box->y0 + box->side / 2 == doctest::Approx(32).epsilon(0.05));
  }
  // Head projected near the image corner: box still inside bounds.
  {
    geom::CameraParams cam = geom::look_at(head + Vec3(0, 0, 2.0), head, 80, 64, 64);
    cam.cx = 2.0;
    cam.cy = 61.0;
    const auto box = geom::face_crop_box(t, pose, cam);
    REQUIRE(box);
    CHECK(box->x0 >= 0);
    CHECK(box->y0 >= 0);
    CHECK(box->x0 + box->side <= 64);
    CHECK(box->y0 + box->side <= 64);
  }
  // Doubling the distance halves the box side within a pixel.
  {
    const geom::CameraParams near =
        geom::look_at(head + Vec3(0, 0, 1.5), head, 120, 256, 256);
    const geom::CameraParams far =
        geom::look_at(head + Vec3(0, 0, 3.0), head, 120, 256, 256);
    const auto bn = geom::face_crop_box(t, pose, near);
    const auto bf = geom::face_crop_box(t, pose, far);
    REQUIRE(bn);
    REQUIRE(bf);
    CHECK(std::abs(bn->side - 2 * bf->side) <= 2);
  }
  // Head behind the camera: no box.
  {
    const geom::CameraParams cam = geom::look_at(head + Vec3(0, 0, 2.0), head + Vec3(0, 0, 4.0), 80, 64, 64);
    CHECK_FALSE(geom::face_crop_box(t, pose, cam));
  }
}

TEST_CASE("template JSON round trip and validation errors") {
  const geom::BodyTemplate t = geom::make_humanoid(123);
  const std::string path = (std::filesystem::temp_directory_path() / "tpl_test.json").string();
  t.save(path);
  const geom::BodyTemplate back = geom::BodyTemplate::load(path);
  REQUIRE(back.vertex_count() == t.vertex_count());
  for (int v = 0; v < t.vertex_count(); ++v)
    CHECK((back.vertices[v] - t.vertices[v]).norm() == 0.0);
  for (int v = 0; v < t.vertex_count(); ++v)
    for (int j = 0; j < t.joint_count(); ++j)
      CHECK(back.skin_weights[v][j] == t.skin_weights[v][j]);
  CHECK(back.head_joint == t.head_joint);
  std::filesystem::remove(path);

  geom::BodyTemplate bad = tiny_template();
  bad.skin_weights[0][0] = 0.7;  // row no longer sums to 1
  CHECK_THROWS(bad.validate());

  geom::BodyTemplate cyc = tiny_template();
  cyc.parent = {1, 0};  // cycle, no root
  CHECK_THROWS(cyc.validate());

  geom::BodyTemplate uvb = tiny_template();
  uvb.uv_coords[0] = geom::Vec2(1.5, 0.2);
  CHECK_THROWS(uvb.validate());
}

TEST_CASE("pose validation requires unit quaternions") {
  geom::PoseParams p = geom::PoseParams::identity(2);
  p.joint_rotations[1] = Quat(2.0, 0, 0, 0);
  CHECK_THROWS(p.validate(2));
}

TEST_CASE("humanoid generation is seed-deterministic and varies across seeds") {
  const geom::BodyTemplate a = geom::make_humanoid(77);
  const geom::BodyTemplate b = geom::make_humanoid(77);
  const geom::BodyTemplate c = geom::make_humanoid(78);
  REQUIRE(a.vertex_count() == b.vertex_count());
  double same = 0, diff = 0;
  for (int v = 0; v < a.vertex_count(); ++v) {
    same += (a.vertices[v] - b.vertices[v]).norm();
    diff += (a.vertices[v] - c.vertices[v]).norm();
  }
  CHECK(same == 0.0);
  CHECK(diff > 1e-3);
  CHECK(a.vertex_count() >= 500);
  CHECK(a.vertex_count() <= 2000);
  CHECK(a.joint_count() >= 10);
  CHECK(a.joint_count() <= 24);
}
