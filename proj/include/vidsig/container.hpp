#pragma once

// Raw tensor container (.vst). Fixed little-endian layout:
//   magic "VSIG" | u32 rank | u32 dims[rank] | u32 dtype (0 = f32) | payload
// Payload is row-major f32. Round trips are bit-exact for finite tensors,
// which is what checkpointing and the file-format tests rely on.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vidsig/errors.hpp"
#include "vidsig/tensor.hpp"

namespace vidsig {

namespace detail {

static_assert(std::endian::native == std::endian::little,
              "vst writer assumes a little-endian host");

inline void write_u32(std::ostream& os, std::uint32_t x) {
  os.write(reinterpret_cast<const char*>(&x), 4);
}

inline std::uint32_t read_u32(std::istream& is, const std::string& path) {
  std::uint32_t x = 0;
  if (!is.read(reinterpret_cast<char*>(&x), 4))
    throw IoError("corrupt container (truncated header): " + path);
  return x;
}

}  // namespace detail

inline void save_tensor_raw(const std::vector<std::uint32_t>& dims, const float* data,
                            const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write("VSIG", 4);
  detail::write_u32(os, static_cast<std::uint32_t>(dims.size()));
  std::size_t count = 1;
  for (auto d : dims) {
    detail::write_u32(os, d);
    count *= d;
  }
  detail::write_u32(os, 0);  // dtype f32
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
  if (!os) throw IoError("write failed: " + path);
}

struct RawTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;
};

inline RawTensor load_tensor_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open for read: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "VSIG", 4) != 0)
    throw IoError("corrupt container (bad magic): " + path);
  std::uint32_t rank = detail::read_u32(is, path);
  if (rank > 8) throw IoError("corrupt container (rank " + std::to_string(rank) + "): " + path);
  RawTensor t;
  t.dims.resize(rank);
  std::size_t count = 1;
  for (auto& d : t.dims) {
    d = detail::read_u32(is, path);
    count *= d;
  }
  std::uint32_t dtype = detail::read_u32(is, path);
  if (dtype != 0) throw IoError("unsupported dtype tag " + std::to_string(dtype) + ": " + path);
  t.data.resize(count);
  if (!is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(count * 4)))
    throw IoError("corrupt container (truncated payload): " + path);
  return t;
}

inline void save_tensor(const Tensor4<float>& t, const std::string& path) {
  save_tensor_raw({static_cast<std::uint32_t>(t.n), static_cast<std::uint32_t>(t.c),
                   static_cast<std::uint32_t>(t.h), static_cast<std::uint32_t>(t.w)},
                  t.v.data(), path);
}

inline Tensor4<float> load_tensor(const std::string& path) {
  RawTensor r = load_tensor_raw(path);
  if (r.dims.size() != 4) throw IoError("expected rank-4 tensor in " + path);
  Tensor4<float> t(static_cast<int>(r.dims[0]), static_cast<int>(r.dims[1]),
                   static_cast<int>(r.dims[2]), static_cast<int>(r.dims[3]));
  t.v = std::move(r.data);
  return t;
}

inline void save_video(const VideoTensor& v, const std::string& path) { save_tensor(v, path); }

inline VideoTensor load_video(const std::string& path) {
  VideoTensor v = load_tensor(path);
  if (v.n < 1 || v.c < 1 || v.h < 1 || v.w < 1)
    throw IoError("video container has empty dimensions: " + path);
  return v;
}

}  // namespace vidsig
