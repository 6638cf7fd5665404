// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "gauss/ply_io.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace gsav::gauss {

namespace {

constexpr double kShDc = 0.28209479177387814;

float logit_clamped(float a) {
  const float lo = 1e-12f;
  const float x = std::min(1.0f - lo, std::max(lo, a));
  const float l = std::log(x / (1.0f - x));
  return std::min(30.0f, std::max(-30.0f, l));
}

const char* kFields[] = {"x",       "y",       "z",       "nx",      "ny",
                         "nz",      "f_dc_0",  "f_dc_1",  "f_dc_2",  "opacity",
                         "scale_0", "scale_1", "scale_2", "rot_0",   "rot_1",
                         "rot_2",   "rot_3"};
constexpr int kFieldCount = 17;

}  // namespace

void save_gaussian_ply(const std::string& path, const GaussianCloud& cloud) {
  const int M = cloud.count();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("ply: cannot open for write: " + path);
  os << "ply\nformat binary_little_endian 1.0\nelement vertex " << M << "\n";
  for (const char* f : kFields) os << "property float " << f << "\n";
  os << "end_header\n";

  std::vector<float> row(kFieldCount);
  for (int i = 0; i < M; ++i) {
    row[0] = cloud.pos[static_cast<int64_t>(i) * 3];
    row[1] = cloud.pos[static_cast<int64_t>(i) * 3 + 1];
    row[2] = cloud.pos[static_cast<int64_t>(i) * 3 + 2];
    row[3] = row[4] = row[5] = 0.0f;
    for (int k = 0; k < 3; ++k)
      row[6 + k] = static_cast<float>(
          (cloud.color[static_cast<int64_t>(i) * 3 + k] - 0.5) / kShDc);
    row[9] = logit_clamped(cloud.opacity[i]);
    for (int k = 0; k < 3; ++k)
      row[10 + k] = std::log(cloud.scale[static_cast<int64_t>(i) * 3 + k]);
    for (int k = 0; k < 4; ++k) row[13 + k] = cloud.rot[static_cast<int64_t>(i) * 4 + k];
    os.write(reinterpret_cast<const char*>(row.data()), sizeof(float) * kFieldCount);
  }
  if (!os) throw std::runtime_error("ply: write failed: " + path);
}

GaussianCloud load_gaussian_ply(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("ply: cannot open: " + path);

  std::string line;
  std::getline(is, line);
  if (line != "ply") throw std::runtime_error("ply: bad magic: " + path);
  int count = -1;
  std::vector<std::string> props;
  bool binary_le = false;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = (fmt == "binary_little_endian");
    } else if (tok == "element") {
      std::string what;
      ls >> what >> count;
      if (what != "vertex") throw std::runtime_error("ply: unexpected element: " + what);
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") throw std::runtime_error("ply: only float properties supported");
      props.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (!binary_le) throw std::runtime_error("ply: only binary_little_endian supported");
  if (count < 0) throw std::runtime_error("ply: missing vertex element");

  std::map<std::string, int> at;
  for (size_t i = 0; i < props.size(); ++i) at[props[i]] = static_cast<int>(i);
  for (const char* f : kFields)
    if (std::string(f) != "nx" && std::string(f) != "ny" && std::string(f) != "nz" &&
        !at.count(f))
      throw std::runtime_error(std::string("ply: missing property ") + f);

  GaussianCloud c;
  c.pos = Tensor::zeros({count, 3});
  c.opacity = Tensor::zeros({count});
  c.rot = Tensor::zeros({count, 4});
  c.scale = Tensor::zeros({count, 3});
  c.color = Tensor::zeros({count, 3});
  c.texel.resize(count);

  std::vector<float> row(props.size());
  for (int i = 0; i < count; ++i) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(sizeof(float) * row.size()));
    if (!is) throw std::runtime_error("ply: truncated data: " + path);
    c.pos[static_cast<int64_t>(i) * 3] = row[at["x"]];
    c.pos[static_cast<int64_t>(i) * 3 + 1] = row[at["y"]];
    c.pos[static_cast<int64_t>(i) * 3 + 2] = row[at["z"]];
    c.opacity[i] = 1.0f / (1.0f + std::exp(-row[at["opacity"]]));
    for (int k = 0; k < 3; ++k) {
      c.scale[static_cast<int64_t>(i) * 3 + k] = std::exp(row[at["scale_" + std::to_string(k)]]);
      c.color[static_cast<int64_t>(i) * 3 + k] = static_cast<float>(
          std::clamp(row[at["f_dc_" + std::to_string(k)]] * kShDc + 0.5, 0.0, 1.0));
    }
    float n2 = 0.0f;
    for (int k = 0; k < 4; ++k) {
      const float q = row[at["rot_" + std::to_string(k)]];
      c.rot[static_cast<int64_t>(i) * 4 + k] = q;
      n2 += q * q;
    }
    const float n = std::sqrt(n2);
    for (int k = 0; k < 4; ++k) c.rot[static_cast<int64_t>(i) * 4 + k] /= n;
    c.texel[i] = i;
  }
  return c;
}

}  // namespace gsav::gauss
