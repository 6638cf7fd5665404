// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "core/image.h"

#include <algorithm>
#include <cmath>

#include "core/png_io.h"

namespace gsav {

std::vector<uint8_t> Image::to_bytes() const {
  const int C = channels(), H = height(), W = width();
  std::vector<uint8_t> out(static_cast<size_t>(C) * H * W);
  const float* p = t.data();
  const int64_t plane = static_cast<int64_t>(H) * W;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      for (int c = 0; c < C; ++c) {
        float v = p[c * plane + static_cast<int64_t>(y) * W + x];
        v = std::min(1.0f, std::max(0.0f, v));
        out[(static_cast<size_t>(y) * W + x) * C + c] =
            static_cast<uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  return out;
}

Image Image::from_bytes(const std::vector<uint8_t>& bytes, int w, int h, int c) {
  Image img(c, h, w);
  float* p = img.t.data();
  const int64_t plane = static_cast<int64_t>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch)
        p[ch * plane + static_cast<int64_t>(y) * w + x] =
            static_cast<float>(bytes[(static_cast<size_t>(y) * w + x) * c + ch]) / 255.0f;
  return img;
}

void save_png(const std::string& path, const Image& img) {
  png::write_file(path, img.to_bytes(), img.width(), img.height(), img.channels());
}

Image load_png(const std::string& path) {
  int w = 0, h = 0, c = 0;
  std::vector<uint8_t> bytes = png::read_file(path, &w, &h, &c);
  return Image::from_bytes(bytes, w, h, c);
}

}  // namespace gsav
