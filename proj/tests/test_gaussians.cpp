// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "core/rng.h"
#include "gauss/gaussians.h"
#include "gauss/ply_io.h"
#include "geom/kinematics.h"

using namespace gsav;
using geom::Quat;
using geom::Vec3;

namespace {

gauss::UVGaussianMap zero_map(const gauss::UvBasePoints& bases) {
  gauss::UVGaussianMap m;
  m.res_u = bases.res_u;
  m.res_v = bases.res_v;
  m.channels = Tensor::zeros({gauss::UVGaussianMap::kChannels, bases.res_u * bases.res_v});
  m.mask = bases.mask;
  return m;
}

}  // namespace

TEST_CASE("uv_base_points: barycentric sampling and mask") {
  const geom::BodyTemplate t = geom::make_humanoid(1);
  CHECK_THROWS(gauss::uv_base_points(t, 3, 3));  // resolution floor

  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 64, 64);
  CHECK(bp.count() > 500);
  CHECK(bp.count() < 64 * 64);
  CHECK(static_cast<int>(bp.texel.size()) == bp.count());

  // Each covered texel's point must sit within one of its part's triangles'
  // bounding volume; spot-check the barycentric reconstruction against the
  // closest vertex by UV distance.
  int checked = 0;
  for (int i = 0; i < bp.count(); i += 97) {
    const int tx = bp.texel[i];
    const double u = (tx % 64 + 0.5) / 64.0;
    const double v = (tx / 64 + 0.5) / 64.0;
    double best = 1e9;
    int best_v = 0;
    for (int vi = 0; vi < t.vertex_count(); ++vi) {
      const double d = std::hypot(t.uv_coords[vi].x() - u, t.uv_coords[vi].y() - v);
      if (d < best) {
        best = d;
        best_v = vi;
      }
    }
    // A UV step of 1/64 corresponds to a bounded world-space step.
    CHECK((bp.point[i] - t.vertices[best_v]).norm() < 0.25);
    ++checked;
  }
  CHECK(checked > 3);

  // Texels in the atlas gutters are uncovered.
  const size_t corner = 0;  // (0,0) lies in the margin
  CHECK(bp.mask[corner] == 0);
}

TEST_CASE("uv_base_points: exact corner and centroid cases on a crafted chart") {
  // One triangle covering a known UV area.
  geom::BodyTemplate t;
  t.joints = {Vec3(0, 0, 0)};
  t.parent = {-1};
  t.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
  t.faces = {{0, 1, 2}};
  t.skin_weights = {{1.0}, {1.0}, {1.0}};
  // Texel centers at resolution 8 sit at (k+0.5)/8.
  t.uv_coords = {geom::Vec2(0.5 / 8, 0.5 / 8), geom::Vec2(7.5 / 8, 0.5 / 8),
                 geom::Vec2(0.5 / 8, 7.5 / 8)};
  t.head_joint = 0;
  t.validate();

  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 8, 8);
  // Texel (0,0): its center coincides with vertex 0's UV.
  REQUIRE(bp.mask[0] == 1);
  CHECK((bp.point[0] - t.vertices[0]).norm() < 1e-12);

  // Centroid texel: pick the covered texel whose center is nearest the UV
  // centroid and check barycentric (1/3,1/3,1/3) reconstruction.
  const double cu = (0.5 / 8 + 7.5 / 8 + 0.5 / 8) / 3.0;
  const double cv = (0.5 / 8 + 0.5 / 8 + 7.5 / 8) / 3.0;
  const Vec3 centroid_pos = (t.vertices[0] + t.vertices[1] + t.vertices[2]) / 3.0;
  double best = 1e9;
  int best_i = -1;
  for (int i = 0; i < bp.count(); ++i) {
    const int tx = bp.texel[i];
    const double u = (tx % 8 + 0.5) / 8.0, v = (tx / 8 + 0.5) / 8.0;
    const double d = std::hypot(u - cu, v - cv);
    if (d < best) {
      best = d;
      best_i = i;
    }
  }
  REQUIRE(best_i >= 0);
  // The nearest texel center is within half a texel of the centroid, so the
  // sampled point lands within the matching world-space neighborhood.
  CHECK((bp.point[best_i] - centroid_pos).norm() < 0.75 / 8.0 * 1.5);

  // An uncovered texel (outside the triangle).
  CHECK(bp.mask[7] == 0);
}

TEST_CASE("decode: zero channels give the documented closed form") {
  const geom::BodyTemplate t = geom::make_humanoid(2);
  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 32, 32);
  const gauss::DecodeConfig cfg;
  const gauss::GaussianCloud c = gauss::decode_uv_map(zero_map(bp), bp, cfg);
  REQUIRE(c.count() == bp.count());
  for (int i = 0; i < c.count(); i += 111) {
    for (int k = 0; k < 3; ++k)
      CHECK(c.pos[i * 3 + k] == doctest::Approx(bp.point[i][k]).epsilon(1e-6));
    CHECK(c.opacity[i] == doctest::Approx(0.5));
    for (int k = 0; k < 3; ++k)
      CHECK(c.scale[i * 3 + k] == doctest::Approx(cfg.s_min + cfg.s_unit));
    for (int k = 0; k < 3; ++k) CHECK(c.color[i * 3 + k] == doctest::Approx(0.5));
    // Rotation equals the local frame.
    const Quat q(c.rot[i * 4], c.rot[i * 4 + 1], c.rot[i * 4 + 2], c.rot[i * 4 + 3]);
    CHECK(std::abs(q.dot(bp.frame[i])) == doctest::Approx(1.0).epsilon(1e-6));
  }
  c.validate();
}

TEST_CASE("decode: saturation and offset closed forms") {
  const geom::BodyTemplate t = geom::make_humanoid(3);
  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 16, 16);
  gauss::UVGaussianMap m = zero_map(bp);
  const int texels = 16 * 16;
  const int tx = bp.texel[0];
  float* ch = m.channels.data();
  ch[3 * texels + tx] = 20.0f;  // opacity logit saturation
  ch[0 * texels + tx] = 20.0f;  // tanh -> 1 in the frame-x direction

  gauss::DecodeConfig cfg;
  cfg.max_offset = 0.02;
  const gauss::GaussianCloud c = gauss::decode_uv_map(m, bp, cfg);
  CHECK(c.opacity[0] == doctest::Approx(1.0).epsilon(1e-6));
  const Vec3 expected =
      bp.point[0] + 0.02 * (bp.frame[0].toRotationMatrix() * Vec3(1, 0, 0));
  for (int k = 0; k < 3; ++k)
    CHECK(c.pos[k] == doctest::Approx(expected[k]).epsilon(1e-6));
}

TEST_CASE("decode rejects non-finite channels naming the texel") {
  const geom::BodyTemplate t = geom::make_humanoid(4);
  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 16, 16);
  gauss::UVGaussianMap m = zero_map(bp);
  m.channels.data()[5 * (16 * 16) + bp.texel[3]] = NAN;
  try {
    gauss::decode_uv_map(m, bp, {});
    FAIL("expected decode error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find(std::to_string(bp.texel[3])) != std::string::npos);
  }
}

TEST_CASE("decode jacobian matches central finite differences to 1e-4 relative") {
  Rng rng(5);
  const geom::BodyTemplate t = geom::make_humanoid(5);
  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 16, 16);
  const gauss::DecodeConfig cfg;
  constexpr int K = gauss::UVGaussianMap::kChannels;

  for (int trial = 0; trial < 5; ++trial) {
    const int i = static_cast<int>(rng.uniform_int(bp.count()));
    double raw[K];
    for (double& v : raw) v = rng.uniform(-1.2, 1.2);
    double jac[K][K];
    gauss::decode_texel_jacobian(raw, bp.point[i], bp.frame[i], cfg, jac);
    const double h = 1e-6;
    for (int c = 0; c < K; ++c) {
      double plus[K], minus[K];
      raw[c] += h;
      gauss::decode_texel_f64(raw, bp.point[i], bp.frame[i], cfg, plus);
      raw[c] -= 2 * h;
      gauss::decode_texel_f64(raw, bp.point[i], bp.frame[i], cfg, minus);
      raw[c] += h;
      for (int o = 0; o < K; ++o) {
        const double num = (plus[o] - minus[o]) / (2 * h);
        const double ana = jac[o][c];
        const double tol = 1e-4 * std::max({std::abs(num), std::abs(ana), 1e-4});
        CHECK(std::abs(num - ana) <= tol);
      }
    }
  }
}

TEST_CASE("covariance closed forms") {
  // identity rotation -> diag(s^2)
  geom::Mat3 c = gauss::covariance(Quat::Identity(), Vec3(0.2, 0.3, 0.5));
  CHECK(c(0, 0) == doctest::Approx(0.04));
  CHECK(c(1, 1) == doctest::Approx(0.09));
  CHECK(c(2, 2) == doctest::Approx(0.25));
  CHECK(std::abs(c(0, 1)) < 1e-12);

  // isotropic scale is rotation invariant
  Rng rng(6);
  const Quat q = Quat(Eigen::AngleAxisd(
      rng.uniform(-3, 3), Vec3(rng.normal(), rng.normal(), rng.normal()).normalized()));
  c = gauss::covariance(q, Vec3(0.4, 0.4, 0.4));
  CHECK((c - 0.16 * geom::Mat3::Identity()).norm() < 1e-12);

  // 90-degree z rotation of diag(4,1,1) -> diag(1,4,1)
  const Quat rz(Eigen::AngleAxisd(M_PI / 2, Vec3(0, 0, 1)));
  c = gauss::covariance(rz, Vec3(2, 1, 1));
  CHECK(c(0, 0) == doctest::Approx(1.0));
  CHECK(c(1, 1) == doctest::Approx(4.0));
  CHECK(c(2, 2) == doctest::Approx(1.0));

  // symmetry and eigenvalue floor
  CHECK((c - c.transpose()).norm() < 1e-9);
}

TEST_CASE("deform: identity pose is the identity, other attributes shared") {
  const geom::BodyTemplate t = geom::make_humanoid(7);
  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 32, 32);
  const gauss::GaussianCloud c = gauss::decode_uv_map(zero_map(bp), bp, {});
  const gauss::GaussianCloud d =
      gauss::deform(c, bp, t, geom::PoseParams::identity(t.joint_count()));
  for (int i = 0; i < c.count(); ++i) {
    for (int k = 0; k < 3; ++k)
      CHECK(d.pos[i * 3 + k] == doctest::Approx(c.pos[i * 3 + k]).epsilon(1e-6));
    for (int k = 0; k < 4; ++k)
      CHECK(std::abs(d.rot[i * 4 + k] - c.rot[i * 4 + k]) < 1e-6);
  }
  // alpha/s/c are bit-identical (shared storage)
  CHECK(d.opacity.data() == c.opacity.data());
  CHECK(d.scale.data() == c.scale.data());
  CHECK(d.color.data() == c.color.data());
}

TEST_CASE("deform: shared rigid transform moves the cloud rigidly") {
  const geom::BodyTemplate t = geom::make_humanoid(8);
  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 32, 32);
  const gauss::GaussianCloud c = gauss::decode_uv_map(zero_map(bp), bp, {});

  geom::PoseParams pose = geom::PoseParams::identity(t.joint_count());
  const Quat R(Eigen::AngleAxisd(0.8, Vec3(0.2, 1.0, -0.3).normalized()));
  pose.joint_rotations[0] = R;
  pose.root_translation = Vec3(0.3, 0.1, -0.2);
  const gauss::GaussianCloud d = gauss::deform(c, bp, t, pose);

  const auto skin = geom::skinning_transforms(t, pose);
  for (int i = 0; i < c.count(); i += 101) {
    const Vec3 p(c.pos[i * 3], c.pos[i * 3 + 1], c.pos[i * 3 + 2]);
    const Vec3 expected =
        skin[0].block<3, 3>(0, 0) * p + skin[0].block<3, 1>(0, 3);
    for (int k = 0; k < 3; ++k)
      CHECK(d.pos[i * 3 + k] == doctest::Approx(expected[k]).epsilon(1e-5));
    // r' = quat(R) * r
    const Quat r(c.rot[i * 4], c.rot[i * 4 + 1], c.rot[i * 4 + 2], c.rot[i * 4 + 3]);
    const Quat rr(d.rot[i * 4], d.rot[i * 4 + 1], d.rot[i * 4 + 2], d.rot[i * 4 + 3]);
    const Quat expected_r = Quat(skin[0].block<3, 3>(0, 0)) * r;
    CHECK(std::abs(rr.dot(expected_r)) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("deform: one-hot texel under a 90-degree joint rotation") {
  const geom::BodyTemplate tiny = [] {
    geom::BodyTemplate t;
    t.joints = {Vec3(0, 0, 0)};
    t.parent = {-1};
    t.vertices = {Vec3(0, 1, 0), Vec3(0.2, 1, 0), Vec3(0, 1, 0.2)};
    t.faces = {{0, 1, 2}};
    t.skin_weights = {{1.0}, {1.0}, {1.0}};
    t.uv_coords = {geom::Vec2(0.2, 0.2), geom::Vec2(0.8, 0.2), geom::Vec2(0.2, 0.8)};
    t.head_joint = 0;
    return t;
  }();
  const gauss::UvBasePoints bp = gauss::uv_base_points(tiny, 8, 8);
  REQUIRE(bp.count() > 0);

  gauss::UVGaussianMap m = zero_map(bp);
  gauss::GaussianCloud c = gauss::decode_uv_map(m, bp, {});
  // Put the first primitive exactly at (0,1,0).
  c.pos[0] = 0.0f;
  c.pos[1] = 1.0f;
  c.pos[2] = 0.0f;

  geom::PoseParams pose = geom::PoseParams::identity(1);
  pose.joint_rotations[0] = Quat(Eigen::AngleAxisd(M_PI / 2, Vec3(0, 0, 1)));
  const gauss::GaussianCloud d = gauss::deform(c, bp, tiny, pose);
  CHECK(d.pos[0] == doctest::Approx(-1.0).epsilon(1e-6));
  CHECK(d.pos[1] == doctest::Approx(0.0).epsilon(1e-6));
  CHECK(d.pos[2] == doctest::Approx(0.0).epsilon(1e-6));
}

TEST_CASE("deform reports degenerate blends by texel") {
  // Two joints rotated 180 degrees apart, blended 50/50: the linear part is
  // singular.
  geom::BodyTemplate t;
  t.joints = {Vec3(0, 0, 0), Vec3(0, 0.5, 0)};
  t.parent = {-1, 0};
  t.vertices = {Vec3(0, 0.5, 0), Vec3(0.2, 0.5, 0), Vec3(0, 0.5, 0.2)};
  t.faces = {{0, 1, 2}};
  t.skin_weights = {{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}};
  t.uv_coords = {geom::Vec2(0.2, 0.2), geom::Vec2(0.8, 0.2), geom::Vec2(0.2, 0.8)};
  t.head_joint = 1;
  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 8, 8);
  REQUIRE(bp.count() > 0);
  const gauss::GaussianCloud c = gauss::decode_uv_map(zero_map(bp), bp, {});

  geom::PoseParams pose = geom::PoseParams::identity(2);
  pose.joint_rotations[1] = Quat(Eigen::AngleAxisd(M_PI, Vec3(0, 0, 1)));
  CHECK_THROWS_WITH_AS(gauss::deform(c, bp, t, pose),
                       doctest::Contains("texel"), std::runtime_error);
}

TEST_CASE("gaussian PLY round trip preserves attributes") {
  const geom::BodyTemplate t = geom::make_humanoid(9);
  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 16, 16);
  gauss::UVGaussianMap m = zero_map(bp);
  Rng rng(10);
  for (int64_t i = 0; i < m.channels.numel(); ++i)
    m.channels[i] = static_cast<float>(rng.uniform(-0.5, 0.5));
  const gauss::GaussianCloud c = gauss::decode_uv_map(m, bp, {});

  const std::string path = (std::filesystem::temp_directory_path() / "cloud_test.ply").string();
  gauss::save_gaussian_ply(path, c);
  const gauss::GaussianCloud back = gauss::load_gaussian_ply(path);
  std::filesystem::remove(path);

  REQUIRE(back.count() == c.count());
  for (int i = 0; i < c.count(); i += 59) {
    for (int k = 0; k < 3; ++k) {
      CHECK(back.pos[i * 3 + k] == c.pos[i * 3 + k]);  // stored verbatim
      CHECK(back.scale[i * 3 + k] ==
            doctest::Approx(c.scale[i * 3 + k]).epsilon(1e-5));
      CHECK(back.color[i * 3 + k] ==
            doctest::Approx(c.color[i * 3 + k]).epsilon(1e-5));
    }
    CHECK(back.opacity[i] == doctest::Approx(c.opacity[i]).epsilon(1e-5));
    for (int k = 0; k < 4; ++k)
      CHECK(back.rot[i * 4 + k] == doctest::Approx(c.rot[i * 4 + k]).epsilon(1e-5));
  }
}

TEST_CASE("decode/deform autodiff path matches the plain path") {
  const geom::BodyTemplate t = geom::make_humanoid(11);
  const gauss::UvBasePoints bp = gauss::uv_base_points(t, 16, 16);
  gauss::UVGaussianMap m = zero_map(bp);
  Rng rng(12);
  for (int64_t i = 0; i < m.channels.numel(); ++i)
    m.channels[i] = static_cast<float>(rng.uniform(-0.8, 0.8));

  const gauss::GaussianCloud plain = gauss::decode_uv_map(m, bp, {});
  nn::Value ch = nn::make_leaf(m.channels.clone());
  const gauss::CloudValues val = gauss::decode_uv_map_val(ch, bp, {});
  for (int64_t i = 0; i < plain.pos.numel(); ++i)
    CHECK(val.pos->val[i] == plain.pos[i]);
  for (int64_t i = 0; i < plain.rot.numel(); ++i)
    CHECK(val.rot->val[i] == plain.rot[i]);

  // Gradient of a scalar through decode matches finite differences.
  auto build = [&] {
    const gauss::CloudValues cv = gauss::decode_uv_map_val(ch, bp, {});
    return nn::weighted_sum({{1.0f, nn::mean_all(cv.pos)},
                             {0.5f, nn::mean_all(cv.rot)},
                             {0.25f, nn::mean_all(cv.scale)},
                             {0.7f, nn::mean_all(cv.opacity)},
                             {0.3f, nn::mean_all(cv.color)}});
  };
  ch->grad = Tensor();
  nn::Value loss = build();
  nn::backward(loss);
  Rng pick(13);
  for (int trial = 0; trial < 12; ++trial) {
    const int64_t i = static_cast<int64_t>(pick.uniform_int(ch->val.numel()));
    const float old = ch->val[i];
    const float h = 1e-2f;
    ch->val[i] = old + h;
    const float fp = build()->val.item();
    ch->val[i] = old - h;
    const float fm = build()->val.item();
    ch->val[i] = old;
    const float num = (fp - fm) / (2 * h);
    CHECK(std::abs(num - ch->grad[i]) <=
          2e-3f + 3e-2f * std::max(std::abs(num), std::abs(ch->grad[i])));
  }
}
