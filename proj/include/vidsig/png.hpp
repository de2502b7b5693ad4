#pragma once

// Minimal PNG frame-sequence export (frame_%05d.png, 8-bit RGB). Pixels are
// quantized to 8 bits, so unlike the .vst container this path is lossy.
// The encoder emits stored (uncompressed) deflate blocks, which every PNG
// reader accepts; read_png only understands files produced here and exists
// for round-trip tests.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vidsig/errors.hpp"
#include "vidsig/tensor.hpp"

namespace vidsig {
namespace pngdetail {

inline std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t crc = 0) {
  static const auto table = [] {
    std::vector<std::uint32_t> t(256);
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int j = 0; j < 8; ++j) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xffffffffu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xffu] ^ (crc >> 8);
  return crc ^ 0xffffffffu;
}

inline std::uint32_t adler32(const std::uint8_t* data, std::size_t len) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

inline void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t x) {
  out.push_back(static_cast<std::uint8_t>(x >> 24));
  out.push_back(static_cast<std::uint8_t>(x >> 16));
  out.push_back(static_cast<std::uint8_t>(x >> 8));
  out.push_back(static_cast<std::uint8_t>(x));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
                      const std::vector<std::uint8_t>& payload) {
  put_u32be(out, static_cast<std::uint32_t>(payload.size()));
  std::size_t type_pos = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  put_u32be(out, crc32(out.data() + type_pos, payload.size() + 4));
}

inline std::uint32_t get_u32be(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

}  // namespace pngdetail

// Encode an 8-bit RGB image. rgb is row-major, 3 bytes per pixel.
inline std::vector<std::uint8_t> encode_png_rgb8(int width, int height,
                                                 const std::vector<std::uint8_t>& rgb) {
  using namespace pngdetail;
  if (static_cast<std::size_t>(width) * height * 3 != rgb.size())
    throw ShapeError("encode_png_rgb8: pixel buffer size mismatch");

  // Raw scanline stream: filter byte 0 per row.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(height) * (1 + 3 * width));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const std::uint8_t* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + 3 * width);
  }

  // zlib stream with stored deflate blocks.
  std::vector<std::uint8_t> z;
  z.push_back(0x78);
  z.push_back(0x01);
  std::size_t off = 0;
  while (off < raw.size() || raw.empty()) {
    std::size_t block = std::min<std::size_t>(65535, raw.size() - off);
    bool final = (off + block == raw.size());
    z.push_back(final ? 1 : 0);
    z.push_back(static_cast<std::uint8_t>(block & 0xff));
    z.push_back(static_cast<std::uint8_t>(block >> 8));
    z.push_back(static_cast<std::uint8_t>(~block & 0xff));
    z.push_back(static_cast<std::uint8_t>((~block >> 8) & 0xff));
    z.insert(z.end(), raw.begin() + off, raw.begin() + off + block);
    off += block;
    if (final) break;
  }
  put_u32be(z, adler32(raw.data(), raw.size()));

  std::vector<std::uint8_t> out = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  put_u32be(ihdr, static_cast<std::uint32_t>(width));
  put_u32be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  put_chunk(out, "IHDR", ihdr);
  put_chunk(out, "IDAT", z);
  put_chunk(out, "IEND", {});
  return out;
}

struct PngImage {
  int width = 0, height = 0;
  std::vector<std::uint8_t> rgb;
};

inline PngImage decode_png_rgb8(const std::vector<std::uint8_t>& file) {
  using namespace pngdetail;
  if (file.size() < 8 + 25 || file[0] != 0x89 || file[1] != 'P')
    throw IoError("decode_png_rgb8: not a PNG stream");
  PngImage img;
  std::vector<std::uint8_t> idat;
  std::size_t pos = 8;
  while (pos + 8 <= file.size()) {
    std::uint32_t len = get_u32be(&file[pos]);
    std::string type(reinterpret_cast<const char*>(&file[pos + 4]), 4);
    if (pos + 12 + len > file.size()) throw IoError("decode_png_rgb8: truncated chunk");
    const std::uint8_t* data = &file[pos + 8];
    if (type == "IHDR") {
      img.width = static_cast<int>(get_u32be(data));
      img.height = static_cast<int>(get_u32be(data + 4));
      if (data[8] != 8 || data[9] != 2)
        throw IoError("decode_png_rgb8: only 8-bit RGB is supported");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (img.width <= 0 || img.height <= 0) throw IoError("decode_png_rgb8: missing IHDR");
  // Inflate: stored blocks only (what encode_png_rgb8 emits).
  if (idat.size() < 2) throw IoError("decode_png_rgb8: empty IDAT");
  std::vector<std::uint8_t> raw;
  std::size_t p = 2;
  while (true) {
    if (p + 5 > idat.size()) throw IoError("decode_png_rgb8: truncated deflate block");
    std::uint8_t hdr = idat[p];
    if ((hdr >> 1) != 0) throw IoError("decode_png_rgb8: compressed blocks unsupported");
    std::size_t len = idat[p + 1] | (std::size_t(idat[p + 2]) << 8);
    p += 5;
    if (p + len > idat.size()) throw IoError("decode_png_rgb8: truncated deflate payload");
    raw.insert(raw.end(), idat.begin() + p, idat.begin() + p + len);
    p += len;
    if (hdr & 1) break;
  }
  std::size_t stride = 1 + static_cast<std::size_t>(img.width) * 3;
  if (raw.size() != stride * img.height) throw IoError("decode_png_rgb8: scanline size mismatch");
  img.rgb.resize(static_cast<std::size_t>(img.width) * img.height * 3);
  for (int y = 0; y < img.height; ++y) {
    if (raw[y * stride] != 0) throw IoError("decode_png_rgb8: only filter 0 is supported");
    std::copy_n(raw.begin() + y * stride + 1, 3 * img.width,
                img.rgb.begin() + static_cast<std::size_t>(y) * img.width * 3);
  }
  return img;
}

inline std::uint8_t quantize8(float x) {
  long q = std::lround(static_cast<double>(x) * 255.0);
  return static_cast<std::uint8_t>(std::clamp(q, 0L, 255L));
}

// Export a video as frame_%05d.png under dir. Channels beyond the first
// three are ignored; single-channel video is replicated to gray RGB.
inline void export_png_frames(const VideoTensor& v, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (int t = 0; t < v.n; ++t) {
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(v.h) * v.w * 3);
    for (int y = 0; y < v.h; ++y)
      for (int x = 0; x < v.w; ++x)
        for (int ch = 0; ch < 3; ++ch) {
          int src = v.c >= 3 ? ch : 0;
          rgb[(static_cast<std::size_t>(y) * v.w + x) * 3 + ch] = quantize8(v.at(t, src, y, x));
        }
    auto bytes = encode_png_rgb8(v.w, v.h, rgb);
    char name[32];
    std::snprintf(name, sizeof name, "frame_%05d.png", t);
    std::ofstream os(std::filesystem::path(dir) / name, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write PNG frame under " + dir);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  }
}

inline PngImage load_png_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open PNG: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  return decode_png_rgb8(bytes);
}

}  // namespace vidsig
