// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/tensor.h"

namespace gsav {

// Planar float image [C,H,W], values nominally in [0,1].
struct Image {
  Tensor t;

  Image() = default;
  explicit Image(Tensor tensor) : t(std::move(tensor)) {}
  Image(int c, int h, int w) : t(Tensor::zeros({c, h, w})) {}

  int channels() const { return t.dim(0); }
  int height() const { return t.dim(1); }
  int width() const { return t.dim(2); }
  bool defined() const { return t.defined(); }

  float& at(int c, int y, int x) {
    return t[static_cast<int64_t>(c) * height() * width() + static_cast<int64_t>(y) * width() + x];
  }
  float at(int c, int y, int x) const {
    return t[static_cast<int64_t>(c) * height() * width() + static_cast<int64_t>(y) * width() + x];
  }

  // 8-bit interleaved quantization: round(clamp(v)*255).
  std::vector<uint8_t> to_bytes() const;
  static Image from_bytes(const std::vector<uint8_t>& bytes, int w, int h, int c);
};

// PNG on disk (8-bit). Deterministic encoder: fixed zlib level, filter 0.
void save_png(const std::string& path, const Image& img);
Image load_png(const std::string& path);

}  // namespace gsav
