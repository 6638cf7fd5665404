// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "geom/body_template.h"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <stdexcept>

#include <json.hpp>

#include "core/rng.h"

namespace gsav::geom {

using nlohmann::json;

Vec3 BodyTemplate::centroid() const {
  Vec3 c = Vec3::Zero();
  for (const auto& v : vertices) c += v;
  return vertices.empty() ? c : Vec3(c / static_cast<double>(vertices.size()));
}

void BodyTemplate::validate() const {
  const int J = joint_count();
  const int V = vertex_count();
  if (static_cast<int>(parent.size()) != J)
    throw std::runtime_error("template: parent size != joint count");
  int roots = 0;
  for (int j = 0; j < J; ++j) {
    if (parent[j] < 0) {
      ++roots;
      continue;
    }
    if (parent[j] >= J) throw std::runtime_error("template: parent index out of range");
    // Walk to the root; more than J hops means a cycle.
    int cur = j, hops = 0;
    while (cur >= 0) {
      cur = parent[cur];
      if (++hops > J) throw std::runtime_error("template: kinematic tree has a cycle");
    }
  }
  if (roots != 1) throw std::runtime_error("template: tree must have exactly one root");

  if (static_cast<int>(skin_weights.size()) != V)
    throw std::runtime_error("template: skin_weights rows != vertex count");
  for (int v = 0; v < V; ++v) {
    if (static_cast<int>(skin_weights[v].size()) != J)
      throw std::runtime_error("template: skin_weights row width != joint count");
    double sum = 0.0;
    for (double w : skin_weights[v]) {
      if (w < 0.0) throw std::runtime_error("template: negative skin weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-6)
      throw std::runtime_error("template: skin weight row does not sum to 1");
  }
  if (static_cast<int>(uv_coords.size()) != V)
    throw std::runtime_error("template: uv_coords size != vertex count");
  for (const auto& uv : uv_coords)
    if (uv.x() < 0.0 || uv.x() > 1.0 || uv.y() < 0.0 || uv.y() > 1.0)
      throw std::runtime_error("template: uv coordinate outside [0,1]^2");
  for (const auto& f : faces)
    for (int idx : f)
      if (idx < 0 || idx >= V) throw std::runtime_error("template: face index out of range");
  if (head_joint < 0 || head_joint >= J)
    throw std::runtime_error("template: head_joint out of range");
}

std::string BodyTemplate::to_json() const {
  json j;
  auto& jv = j["vertices"] = json::array();
  for (const auto& v : vertices) jv.push_back({v.x(), v.y(), v.z()});
  auto& jf = j["faces"] = json::array();
  for (const auto& f : faces) jf.push_back({f[0], f[1], f[2]});
  auto& jj = j["joints"] = json::array();
  for (const auto& p : joints) jj.push_back({p.x(), p.y(), p.z()});
  auto& jp = j["parent"] = json::array();
  for (int p : parent) {
    if (p < 0)
      jp.push_back(nullptr);
    else
      jp.push_back(p);
  }
  auto& jw = j["skin_weights"] = json::array();
  for (const auto& row : skin_weights) jw.push_back(row);
  auto& ju = j["uv_coords"] = json::array();
  for (const auto& uv : uv_coords) ju.push_back({uv.x(), uv.y()});
  j["head_joint"] = head_joint;
  return j.dump();
}

BodyTemplate BodyTemplate::from_json(const std::string& text) {
  json j = json::parse(text);
  BodyTemplate t;
  for (const auto& v : j.at("vertices"))
    t.vertices.emplace_back(v[0].get<double>(), v[1].get<double>(), v[2].get<double>());
  for (const auto& f : j.at("faces"))
    t.faces.push_back({f[0].get<int>(), f[1].get<int>(), f[2].get<int>()});
  for (const auto& p : j.at("joints"))
    t.joints.emplace_back(p[0].get<double>(), p[1].get<double>(), p[2].get<double>());
  for (const auto& p : j.at("parent"))
    t.parent.push_back(p.is_null() ? -1 : p.get<int>());
  for (const auto& row : j.at("skin_weights"))
    t.skin_weights.push_back(row.get<std::vector<double>>());
  for (const auto& uv : j.at("uv_coords"))
    t.uv_coords.emplace_back(uv[0].get<double>(), uv[1].get<double>());
  t.head_joint = j.at("head_joint").get<int>();
  t.validate();
  return t;
}

void BodyTemplate::save(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("template: cannot open for write: " + path);
  os << to_json();
}

BodyTemplate BodyTemplate::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("template: cannot open: " + path);
  std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return from_json(text);
}

PoseParams PoseParams::identity(int joint_count) {
  PoseParams p;
  p.joint_rotations.assign(static_cast<size_t>(joint_count), Quat::Identity());
  return p;
}

void PoseParams::validate(int expected_joints) const {
  if (static_cast<int>(joint_rotations.size()) != expected_joints)
    throw std::runtime_error("pose: joint count mismatch");
  for (const auto& q : joint_rotations)
    if (std::abs(q.norm() - 1.0) > 1e-6)
      throw std::runtime_error("pose: quaternion is not unit length");
}

std::string PoseParams::to_json() const {
  json j;
  auto& jr = j["joint_rotations"] = json::array();
  for (const auto& q : joint_rotations) jr.push_back({q.w(), q.x(), q.y(), q.z()});
  j["root_translation"] = {root_translation.x(), root_translation.y(),
                           root_translation.z()};
  return j.dump();
}

PoseParams PoseParams::from_json(const std::string& text) {
  json j = json::parse(text);
  PoseParams p;
  for (const auto& q : j.at("joint_rotations"))
    p.joint_rotations.emplace_back(q[0].get<double>(), q[1].get<double>(),
                                   q[2].get<double>(), q[3].get<double>());
  const auto& rt = j.at("root_translation");
  p.root_translation = Vec3(rt[0].get<double>(), rt[1].get<double>(), rt[2].get<double>());
  return p;
}

// ---------------------------------------------------------------------------
// Procedural humanoid
// ---------------------------------------------------------------------------

namespace {

enum JointId {
  kPelvis = 0, kSpine, kChest, kNeck, kHead,
  kLShoulder, kLElbow, kLWrist,
  kRShoulder, kRElbow, kRWrist,
  kLHip, kLKnee, kLAnkle,
  kRHip, kRKnee, kRAnkle,
  kJointCount
};

struct Knot {
  double s;
  int joint;
};

struct PartSpec {
  Vec3 p0, p1;
  double r0, r1;
  std::vector<Knot> knots;
  int chart;  // atlas slot
};

// Piecewise-linear blend between adjacent knots along the tube axis.
void knot_weights(double s, const std::vector<Knot>& knots, std::vector<double>& w) {
  if (s <= knots.front().s) {
    w[knots.front().joint] += 1.0;
    return;
  }
  if (s >= knots.back().s) {
    w[knots.back().joint] += 1.0;
    return;
  }
  for (size_t i = 0; i + 1 < knots.size(); ++i) {
    if (s >= knots[i].s && s <= knots[i + 1].s) {
      const double f = (s - knots[i].s) / (knots[i + 1].s - knots[i].s);
      w[knots[i].joint] += 1.0 - f;
      w[knots[i + 1].joint] += f;
      return;
    }
  }
}

constexpr int kRadial = 10;  // radial segments (kRadial+1 UV columns, seam duplicated)
constexpr int kRings = 5;    // axial rings

}  // namespace

BodyTemplate make_humanoid(uint64_t seed) {
  Rng rng(seed);
  const double height = rng.uniform(0.92, 1.08);
  const double width = rng.uniform(0.90, 1.10);
  const double arm = rng.uniform(0.92, 1.08);
  const double leg = rng.uniform(0.92, 1.08);
  const double bulk = rng.uniform(0.88, 1.12);

  BodyTemplate t;
  t.joints.resize(kJointCount);
  t.parent.assign(kJointCount, -1);
  auto J = [&](int id, int par, double x, double y, double z) {
    t.joints[id] = Vec3(x * width, y * height, z);
    t.parent[id] = par;
  };
  J(kPelvis, -1, 0.00, 0.95, 0.0);
  J(kSpine, kPelvis, 0.00, 1.10, 0.0);
  J(kChest, kSpine, 0.00, 1.30, 0.0);
  J(kNeck, kChest, 0.00, 1.46, 0.0);
  J(kHead, kNeck, 0.00, 1.56, 0.0);
  const double arm_y = 1.42 * height;
  t.joints[kLShoulder] = Vec3(0.17 * width, arm_y, 0.0);
  t.joints[kLElbow] = Vec3((0.17 + 0.27 * arm) * width, arm_y, 0.0);
  t.joints[kLWrist] = Vec3((0.17 + 0.52 * arm) * width, arm_y, 0.0);
  t.parent[kLShoulder] = kChest;
  t.parent[kLElbow] = kLShoulder;
  t.parent[kLWrist] = kLElbow;
  t.joints[kRShoulder] = Vec3(-0.17 * width, arm_y, 0.0);
  t.joints[kRElbow] = Vec3(-(0.17 + 0.27 * arm) * width, arm_y, 0.0);
  t.joints[kRWrist] = Vec3(-(0.17 + 0.52 * arm) * width, arm_y, 0.0);
  t.parent[kRShoulder] = kChest;
  t.parent[kRElbow] = kRShoulder;
  t.parent[kRWrist] = kRElbow;
  const double hip_x = 0.10 * width;
  t.joints[kLHip] = Vec3(hip_x, 0.90 * height, 0.0);
  t.joints[kLKnee] = Vec3(hip_x, (0.90 - 0.42 * leg) * height, 0.0);
  t.joints[kLAnkle] = Vec3(hip_x, (0.90 - 0.80 * leg) * height, 0.0);
  t.parent[kLHip] = kPelvis;
  t.parent[kLKnee] = kLHip;
  t.parent[kLAnkle] = kLKnee;
  t.joints[kRHip] = Vec3(-hip_x, 0.90 * height, 0.0);
  t.joints[kRKnee] = Vec3(-hip_x, (0.90 - 0.42 * leg) * height, 0.0);
  t.joints[kRAnkle] = Vec3(-hip_x, (0.90 - 0.80 * leg) * height, 0.0);
  t.parent[kRHip] = kPelvis;
  t.parent[kRKnee] = kRHip;
  t.parent[kRAnkle] = kRKnee;
  t.head_joint = kHead;

  const Vec3 up(0.0, 1.0, 0.0);
  auto j = [&](int id) { return t.joints[id]; };
  std::vector<PartSpec> parts = {
      // torso
      {j(kPelvis) - up * 0.10 * height, j(kNeck), 0.155 * bulk, 0.125 * bulk,
       {{0.00, kPelvis}, {0.30, kPelvis}, {0.55, kSpine}, {0.85, kChest}, {1.00, kChest}},
       0},
      // head
      {j(kNeck), j(kHead) + up * 0.12 * height, 0.055 * bulk, 0.085 * bulk,
       {{0.00, kNeck}, {0.35, kHead}, {1.00, kHead}},
       1},
      // left arm
      {j(kLShoulder), j(kLElbow), 0.050 * bulk, 0.042 * bulk,
       {{0.00, kChest}, {0.18, kLShoulder}, {0.80, kLShoulder}, {1.00, kLElbow}},
       2},
      {j(kLElbow), j(kLWrist) + Vec3(0.05 * arm * width, 0, 0), 0.040 * bulk, 0.032 * bulk,
       {{0.00, kLElbow}, {0.85, kLElbow}, {1.00, kLWrist}},
       3},
      // right arm
      {j(kRShoulder), j(kRElbow), 0.050 * bulk, 0.042 * bulk,
       {{0.00, kChest}, {0.18, kRShoulder}, {0.80, kRShoulder}, {1.00, kRElbow}},
       4},
      {j(kRElbow), j(kRWrist) + Vec3(-0.05 * arm * width, 0, 0), 0.040 * bulk, 0.032 * bulk,
       {{0.00, kRElbow}, {0.85, kRElbow}, {1.00, kRWrist}},
       5},
      // left leg
      {j(kLHip), j(kLKnee), 0.073 * bulk, 0.055 * bulk,
       {{0.00, kPelvis}, {0.20, kLHip}, {0.80, kLHip}, {1.00, kLKnee}},
       6},
      {j(kLKnee), j(kLAnkle) - up * 0.05 * height, 0.052 * bulk, 0.040 * bulk,
       {{0.00, kLKnee}, {0.85, kLKnee}, {1.00, kLAnkle}},
       7},
      // right leg
      {j(kRHip), j(kRKnee), 0.073 * bulk, 0.055 * bulk,
       {{0.00, kPelvis}, {0.20, kRHip}, {0.80, kRHip}, {1.00, kRKnee}},
       8},
      {j(kRKnee), j(kRAnkle) - up * 0.05 * height, 0.052 * bulk, 0.040 * bulk,
       {{0.00, kRKnee}, {0.85, kRKnee}, {1.00, kRAnkle}},
       9},
  };

  auto chart_rect = [](int slot, double& u0, double& v0, double& u1, double& v1) {
    const ChartRect r = humanoid_chart_rect(slot);
    u0 = r.u0;
    v0 = r.v0;
    u1 = r.u1;
    v1 = r.v1;
  };

  for (const auto& part : parts) {
    const Vec3 axis = part.p1 - part.p0;
    const double len = axis.norm();
    const Vec3 dir = axis / len;
    Vec3 ref = std::abs(dir.y()) < 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
    const Vec3 u = (ref - dir * ref.dot(dir)).normalized();
    const Vec3 v = dir.cross(u);

    double cu0, cv0, cu1, cv1;
    chart_rect(part.chart, cu0, cv0, cu1, cv1);

    const int base = t.vertex_count();
    for (int ring = 0; ring < kRings; ++ring) {
      const double s = static_cast<double>(ring) / (kRings - 1);
      const double r = part.r0 + (part.r1 - part.r0) * s;
      for (int seg = 0; seg <= kRadial; ++seg) {
        const double a = 2.0 * M_PI * static_cast<double>(seg % kRadial) / kRadial;
        t.vertices.push_back(part.p0 + dir * (s * len) +
                             (u * std::cos(a) + v * std::sin(a)) * r);
        const double tu = cu0 + (cu1 - cu0) * static_cast<double>(seg) / kRadial;
        const double tv = cv0 + (cv1 - cv0) * s;
        t.uv_coords.emplace_back(tu, tv);
        std::vector<double> w(kJointCount, 0.0);
        knot_weights(s, part.knots, w);
        double sum = 0.0;
        for (double x : w) sum += x;
        for (double& x : w) x /= sum;
        t.skin_weights.push_back(std::move(w));
      }
    }
    const int cols = kRadial + 1;
    for (int ring = 0; ring + 1 < kRings; ++ring) {
      for (int seg = 0; seg < kRadial; ++seg) {
        const int v00 = base + ring * cols + seg;
        const int v01 = v00 + 1;
        const int v10 = v00 + cols;
        const int v11 = v10 + 1;
        t.faces.push_back({v00, v01, v11});
        t.faces.push_back({v00, v11, v10});
      }
    }
  }

  t.validate();
  return t;
}

ChartRect humanoid_chart_rect(int part) {
  if (part < 0 || part >= kHumanoidParts)
    throw std::runtime_error("humanoid_chart_rect: part out of range");
  const int col = part % 4, row = part / 4;
  // Small margins keep neighboring charts disjoint.
  const double mu = 0.005, mv = 0.007;
  return {col * 0.25 + mu, row * (1.0 / 3.0) + mv, (col + 1) * 0.25 - mu,
          (row + 1) * (1.0 / 3.0) - mv};
}

}  // namespace gsav::geom
