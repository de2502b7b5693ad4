#pragma once

// Rank-4 tensors are the common currency of the pipeline: videos are
// frames x channels x H x W in [0,1], latents are frames x c' x h x w
// (unbounded), convolution kernels are out x in x kh x kw. Lower-rank
// parameters (biases, linear weights) reuse the same container with
// trailing singleton dims.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vidsig/errors.hpp"
#include "vidsig/rng.hpp"

namespace vidsig {

template <typename T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_, T fill = T(0))
      : n(n_), c(c_), h(h_), w(w_), v(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {
    if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
      throw ShapeError("Tensor4: negative dimension");
  }

  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }

  T& at(int i, int j, int y, int x) { return v[((static_cast<std::size_t>(i) * c + j) * h + y) * w + x]; }
  T at(int i, int j, int y, int x) const {
    return v[((static_cast<std::size_t>(i) * c + j) * h + y) * w + x];
  }

  T* plane(int i, int j) { return v.data() + (static_cast<std::size_t>(i) * c + j) * h * w; }
  const T* plane(int i, int j) const {
    return v.data() + (static_cast<std::size_t>(i) * c + j) * h * w;
  }

  // Single-frame copy (n == 1 result).
  Tensor4 frame(int i) const {
    Tensor4 f(1, c, h, w);
    std::copy_n(v.data() + static_cast<std::size_t>(i) * c * h * w, static_cast<std::size_t>(c) * h * w,
                f.v.data());
    return f;
  }

  void set_frame(int i, const Tensor4& f) {
    std::copy_n(f.v.data(), static_cast<std::size_t>(c) * h * w,
                v.data() + static_cast<std::size_t>(i) * c * h * w);
  }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  void fill(T x) { std::fill(v.begin(), v.end(), x); }

  void clamp01() {
    for (T& x : v) x = std::clamp(x, T(0), T(1));
  }
};

using VideoTensor = Tensor4<float>;
using LatentTensor = Tensor4<float>;

template <typename To, typename From>
Tensor4<To> tensor_cast(const Tensor4<From>& t) {
  Tensor4<To> r(t.n, t.c, t.h, t.w);
  for (std::size_t i = 0; i < t.v.size(); ++i) r.v[i] = static_cast<To>(t.v[i]);
  return r;
}

template <typename T>
Tensor4<T> random_uniform(int n, int c, int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
  Tensor4<T> t(n, c, h, w);
  for (T& x : t.v) x = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
Tensor4<T> random_gaussian(int n, int c, int h, int w, Rng& rng, double mean = 0.0,
                           double stddev = 1.0) {
  Tensor4<T> t(n, c, h, w);
  for (T& x : t.v) x = static_cast<T>(rng.gaussian(mean, stddev));
  return t;
}

// -------------------------------------------------------------------------
// Watermark messages

struct WatermarkMessage {
  std::vector<std::uint8_t> bits;  // each 0 or 1

  WatermarkMessage() = default;
  explicit WatermarkMessage(std::vector<std::uint8_t> b) : bits(std::move(b)) {
    for (auto x : bits)
      if (x > 1) throw ConfigError("WatermarkMessage: bits must be 0 or 1");
  }

  int k() const { return static_cast<int>(bits.size()); }

  static WatermarkMessage random(int k, Rng& rng) {
    std::vector<std::uint8_t> b(k);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng.next_u64() & 1);
    return WatermarkMessage(std::move(b));
  }

  static WatermarkMessage parse(const std::string& s) {
    std::vector<std::uint8_t> b;
    b.reserve(s.size());
    for (char ch : s) {
      if (ch == '0')
        b.push_back(0);
      else if (ch == '1')
        b.push_back(1);
      else
        throw ConfigError("WatermarkMessage: expected a string of 0s and 1s");
    }
    return WatermarkMessage(std::move(b));
  }

  WatermarkMessage complement() const {
    WatermarkMessage m = *this;
    for (auto& x : m.bits) x = static_cast<std::uint8_t>(1 - x);
    return m;
  }

  std::string to_string() const {
    std::string s;
    s.reserve(bits.size());
    for (auto x : bits) s.push_back(x ? '1' : '0');
    return s;
  }

  bool operator==(const WatermarkMessage& o) const { return bits == o.bits; }
};

// Per-frame soft bit probabilities, frames x k, each entry in [0,1].
template <typename T>
struct SoftMessageT {
  int frames = 0, k = 0;
  std::vector<T> p;

  SoftMessageT() = default;
  SoftMessageT(int frames_, int k_, T fill = T(0))
      : frames(frames_), k(k_), p(static_cast<std::size_t>(frames_) * k_, fill) {}

  T& at(int t, int i) { return p[static_cast<std::size_t>(t) * k + i]; }
  T at(int t, int i) const { return p[static_cast<std::size_t>(t) * k + i]; }

  // Frame-mean soft vector (the voting statistic).
  std::vector<T> mean() const {
    std::vector<T> m(k, T(0));
    for (int t = 0; t < frames; ++t)
      for (int i = 0; i < k; ++i) m[i] += at(t, i);
    for (auto& x : m) x /= static_cast<T>(frames);
    return m;
  }
};

using SoftMessage = SoftMessageT<float>;

}  // namespace vidsig
