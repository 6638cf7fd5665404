// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gsav::png {

// Minimal PNG codec (8-bit, gray / RGB / RGBA, non-interlaced) over zlib.
// The encoder always emits filter 0 rows at a fixed compression level, so
// identical pixels produce identical files.
std::vector<uint8_t> encode(const std::vector<uint8_t>& interleaved, int w, int h,
                            int channels);
std::vector<uint8_t> decode(const std::vector<uint8_t>& file, int* w, int* h,
                            int* channels);

void write_file(const std::string& path, const std::vector<uint8_t>& interleaved,
                int w, int h, int channels);
std::vector<uint8_t> read_file(const std::string& path, int* w, int* h, int* channels);

}  // namespace gsav::png
