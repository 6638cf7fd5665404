// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "core/npy_io.h"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace gsav {

void save_npy(const std::string& path, const Tensor& t) {
  std::ostringstream dict;
  dict << "{'descr': '<f4', 'fortran_order': False, 'shape': (";
  for (int i = 0; i < t.rank(); ++i) dict << t.dim(i) << (t.rank() == 1 || i + 1 < t.rank() ? "," : "");
  dict << "), }";
  std::string header = dict.str();
  const size_t unpadded = 10 + header.size() + 1;
  const size_t pad = (64 - unpadded % 64) % 64;
  header.append(pad, ' ');
  header.push_back('\n');

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("npy: cannot open for write: " + path);
  const uint8_t magic[8] = {0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  os.write(reinterpret_cast<const char*>(magic), 8);
  const uint16_t hlen = static_cast<uint16_t>(header.size());
  os.write(reinterpret_cast<const char*>(&hlen), 2);
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!os) throw std::runtime_error("npy: write failed: " + path);
}

Tensor load_npy(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("npy: cannot open: " + path);
  uint8_t magic[8];
  is.read(reinterpret_cast<char*>(magic), 8);
  if (!is || magic[0] != 0x93 || std::memcmp(magic + 1, "NUMPY", 5) != 0)
    throw std::runtime_error("npy: bad magic: " + path);
  uint16_t hlen = 0;
  is.read(reinterpret_cast<char*>(&hlen), 2);
  std::string header(hlen, '\0');
  is.read(header.data(), hlen);
  if (header.find("'<f4'") == std::string::npos)
    throw std::runtime_error("npy: only '<f4' supported: " + path);
  if (header.find("'fortran_order': False") == std::string::npos)
    throw std::runtime_error("npy: fortran order unsupported: " + path);

  const size_t lp = header.find('(');
  const size_t rp = header.find(')', lp);
  if (lp == std::string::npos || rp == std::string::npos)
    throw std::runtime_error("npy: malformed shape: " + path);
  std::vector<int> shape;
  std::string inner = header.substr(lp + 1, rp - lp - 1);
  std::stringstream ss(inner);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const std::string trimmed = tok.substr(tok.find_first_not_of(' ') == std::string::npos
                                               ? tok.size()
                                               : tok.find_first_not_of(' '));
    if (!trimmed.empty()) shape.push_back(std::stoi(trimmed));
  }
  if (shape.empty()) shape.push_back(1);

  Tensor t = Tensor::zeros(shape);
  is.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(t.numel() * sizeof(float)));
  if (!is) throw std::runtime_error("npy: truncated data: " + path);
  return t;
}

}  // namespace gsav
