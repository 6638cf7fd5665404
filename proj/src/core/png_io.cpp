// Copyright Contributors to the gsavatar project
// SPDX-License-Identifier: Apache-2.0

#include "core/png_io.h"

#include <zlib.h>

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gsav::png {

namespace {

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  out.push_back(static_cast<uint8_t>(v >> 24));
  out.push_back(static_cast<uint8_t>(v >> 16));
  out.push_back(static_cast<uint8_t>(v >> 8));
  out.push_back(static_cast<uint8_t>(v));
}

uint32_t get_u32(const uint8_t* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

void put_chunk(std::vector<uint8_t>& out, const char type[4],
               const std::vector<uint8_t>& data) {
  put_u32(out, static_cast<uint32_t>(data.size()));
  const size_t start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const uint32_t crc = static_cast<uint32_t>(
      crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
  put_u32(out, crc);
}

int color_type_for(int channels) {
  switch (channels) {
    case 1: return 0;
    case 3: return 2;
    case 4: return 6;
    default: throw std::runtime_error("png: unsupported channel count");
  }
}

int channels_for(int color_type) {
  switch (color_type) {
    case 0: return 1;
    case 2: return 3;
    case 4: return 2;
    case 6: return 4;
    default: throw std::runtime_error("png: unsupported color type");
  }
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

}  // namespace

std::vector<uint8_t> encode(const std::vector<uint8_t>& interleaved, int w, int h,
                            int channels) {
  if (interleaved.size() != static_cast<size_t>(w) * h * channels)
    throw std::runtime_error("png: pixel buffer size mismatch");
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  std::vector<uint8_t> out(sig, sig + 8);

  std::vector<uint8_t> ihdr;
  put_u32(ihdr, static_cast<uint32_t>(w));
  put_u32(ihdr, static_cast<uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(static_cast<uint8_t>(color_type_for(channels)));
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);
  put_chunk(out, "IHDR", ihdr);

  // Raw scanlines, filter byte 0 per row.
  const size_t stride = static_cast<size_t>(w) * channels;
  std::vector<uint8_t> raw((stride + 1) * h);
  for (int y = 0; y < h; ++y) {
    raw[y * (stride + 1)] = 0;
    std::memcpy(raw.data() + y * (stride + 1) + 1, interleaved.data() + y * stride, stride);
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<uint8_t> comp(bound);
  if (compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  comp.resize(bound);
  put_chunk(out, "IDAT", comp);
  put_chunk(out, "IEND", {});
  return out;
}

std::vector<uint8_t> decode(const std::vector<uint8_t>& file, int* w, int* h,
                            int* channels) {
  static const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
  if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
    throw std::runtime_error("png: bad signature");

  int width = 0, height = 0, chans = 0;
  std::vector<uint8_t> idat;
  size_t pos = 8;
  while (pos + 8 <= file.size()) {
    const uint32_t len = get_u32(file.data() + pos);
    if (pos + 12 + len > file.size()) throw std::runtime_error("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(file.data() + pos + 4);
    const uint8_t* data = file.data() + pos + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      width = static_cast<int>(get_u32(data));
      height = static_cast<int>(get_u32(data + 4));
      if (data[8] != 8) throw std::runtime_error("png: only 8-bit supported");
      chans = channels_for(data[9]);
      if (data[10] != 0 || data[11] != 0 || data[12] != 0)
        throw std::runtime_error("png: unsupported compression/filter/interlace");
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), data, data + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    pos += 12 + len;
  }
  if (width <= 0 || height <= 0) throw std::runtime_error("png: missing IHDR");

  const size_t stride = static_cast<size_t>(width) * chans;
  std::vector<uint8_t> raw((stride + 1) * height);
  uLongf rawlen = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &rawlen, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      rawlen != raw.size())
    throw std::runtime_error("png: inflate failed");

  std::vector<uint8_t> pix(stride * height);
  const int bpp = chans;  // bytes per pixel at bit depth 8
  for (int y = 0; y < height; ++y) {
    const uint8_t filter = raw[y * (stride + 1)];
    const uint8_t* src = raw.data() + y * (stride + 1) + 1;
    uint8_t* dst = pix.data() + y * stride;
    const uint8_t* prev = y > 0 ? pix.data() + (y - 1) * stride : nullptr;
    for (size_t i = 0; i < stride; ++i) {
      const int a = i >= static_cast<size_t>(bpp) ? dst[i - bpp] : 0;
      const int b = prev ? prev[i] : 0;
      const int c = (prev && i >= static_cast<size_t>(bpp)) ? prev[i - bpp] : 0;
      int v = src[i];
      switch (filter) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw std::runtime_error("png: bad filter byte");
      }
      dst[i] = static_cast<uint8_t>(v & 0xff);
    }
  }
  *w = width;
  *h = height;
  *channels = chans;
  return pix;
}

void write_file(const std::string& path, const std::vector<uint8_t>& interleaved,
                int w, int h, int channels) {
  const std::vector<uint8_t> bytes = encode(interleaved, w, h, channels);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("png: cannot open for write: " + path);
  os.write(reinterpret_cast<const char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("png: write failed: " + path);
}

std::vector<uint8_t> read_file(const std::string& path, int* w, int* h, int* channels) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("png: cannot open: " + path);
  std::vector<uint8_t> file((std::istreambuf_iterator<char>(is)),
                            std::istreambuf_iterator<char>());
  return decode(file, w, h, channels);
}

}  // namespace gsav::png
