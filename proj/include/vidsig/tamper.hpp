#pragma once

// Tamper operators for robustness evaluation. Temporal attacks manipulate
// frame structure only: surviving frames are copied bit-exactly (the only
// synthesized pixels are FA's averaged frame and FIG's noise frame).
// Spatial attacks apply per frame and clamp back to [0,1]. All indices are
// 0-based; randomized variants draw them from the spec seed.

#include <cmath>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vidsig/errors.hpp"
#include "vidsig/rng.hpp"
#include "vidsig/tensor.hpp"

namespace vidsig {

// --------------------------------------------------------------------------
// Temporal attacks

// FD: delete frame i. Result has N-1 frames.
inline VideoTensor frame_drop(const VideoTensor& v, int i) {
  if (v.n < 2) throw ConfigError("frame_drop: cannot drop from a single-frame video");
  if (i < 0 || i >= v.n) throw ConfigError("frame_drop: index out of range");
  VideoTensor out(v.n - 1, v.c, v.h, v.w);
  int dst = 0;
  for (int t = 0; t < v.n; ++t) {
    if (t == i) continue;
    out.set_frame(dst++, v.frame(t));
  }
  return out;
}

// FS: swap two distinct frames i and j.
inline VideoTensor frame_swap(const VideoTensor& v, int i, int j) {
  if (i == j) throw ConfigError("frame_swap: indices must be distinct");
  if (i < 0 || i >= v.n || j < 0 || j >= v.n) throw ConfigError("frame_swap: index out of range");
  VideoTensor out = v;
  out.set_frame(i, v.frame(j));
  out.set_frame(j, v.frame(i));
  return out;
}

// FI: insert a copy of frame i before position j. Result has N+1 frames.
inline VideoTensor frame_insert(const VideoTensor& v, int i, int j) {
  if (i < 0 || i >= v.n) throw ConfigError("frame_insert: source index out of range");
  if (j < 0 || j > v.n) throw ConfigError("frame_insert: insert position out of range");
  VideoTensor out(v.n + 1, v.c, v.h, v.w);
  int dst = 0;
  for (int t = 0; t <= v.n; ++t) {
    if (t == j) out.set_frame(dst++, v.frame(i));
    if (t < v.n) out.set_frame(dst++, v.frame(t));
  }
  return out;
}

// Standard-normal frame, pre-clamp; exposed so sample statistics can be
// checked on the unclamped values.
inline VideoTensor gaussian_frame(int c, int h, int w, std::uint64_t seed) {
  Rng rng = Rng(seed).fork("fig-frame");
  VideoTensor f(1, c, h, w);
  for (auto& x : f.v) x = static_cast<float>(rng.gaussian());
  return f;
}

// FIG: insert an N(0,1) frame (clamped to [0,1]) before position i.
inline VideoTensor frame_insert_gaussian(const VideoTensor& v, int i, std::uint64_t seed) {
  if (i < 0 || i > v.n) throw ConfigError("frame_insert_gaussian: position out of range");
  VideoTensor noise = gaussian_frame(v.c, v.h, v.w, seed);
  noise.clamp01();
  VideoTensor out(v.n + 1, v.c, v.h, v.w);
  int dst = 0;
  for (int t = 0; t <= v.n; ++t) {
    if (t == i) out.set_frame(dst++, noise);
    if (t < v.n) out.set_frame(dst++, v.frame(t));
  }
  return out;
}

// FA: replace frames i..i+n-1 by their mean. Result has N-n+1 frames:
// [f_0 .. f_{i-1}, mean, f_{i+n} .. f_{N-1}]. The window collapses to one
// frame and the trailing frames shift left by n-1.
inline VideoTensor frame_average(const VideoTensor& v, int n, int i) {
  if (n < 1) throw ConfigError("frame_average: n must be >= 1");
  if (i < 0) throw ConfigError("frame_average: index out of range");
  if (i + n > v.n) throw ConfigError("frame_average: window i+n exceeds frame count");
  VideoTensor out(v.n - n + 1, v.c, v.h, v.w);
  int dst = 0;
  for (int t = 0; t < i; ++t) out.set_frame(dst++, v.frame(t));
  VideoTensor mean(1, v.c, v.h, v.w, 0.0f);
  const std::size_t fsz = static_cast<std::size_t>(v.c) * v.h * v.w;
  for (int t = i; t < i + n; ++t) {
    const float* src = v.v.data() + t * fsz;
    for (std::size_t e = 0; e < fsz; ++e) mean.v[e] += src[e];
  }
  for (auto& x : mean.v) x /= static_cast<float>(n);
  out.set_frame(dst++, mean);
  for (int t = i + n; t < v.n; ++t) out.set_frame(dst++, v.frame(t));
  return out;
}

// --------------------------------------------------------------------------
// Spatial attacks (per-frame, clamped to [0,1])

inline VideoTensor gaussian_noise(const VideoTensor& v, double sigma, std::uint64_t seed) {
  if (sigma < 0) throw ConfigError("gaussian_noise: sigma must be >= 0");
  VideoTensor out = v;
  if (sigma == 0) return out;
  Rng rng = Rng(seed).fork("gauss-noise");
  for (auto& x : out.v) x = static_cast<float>(x + sigma * rng.gaussian());
  out.clamp01();
  return out;
}

inline std::vector<double> gaussian_kernel1d(int ksize, double sigma) {
  if (ksize < 1 || ksize % 2 == 0) throw ConfigError("gaussian_blur: kernel size must be odd");
  if (!(sigma > 0)) throw ConfigError("gaussian_blur: sigma must be > 0");
  std::vector<double> k(ksize);
  const int c = ksize / 2;
  double sum = 0;
  for (int i = 0; i < ksize; ++i) {
    k[i] = std::exp(-(i - c) * (i - c) / (2 * sigma * sigma));
    sum += k[i];
  }
  for (auto& x : k) x /= sum;
  return k;
}

inline int default_blur_ksize(double sigma) {
  return 2 * static_cast<int>(std::ceil(2 * sigma)) + 1;
}

// Separable Gaussian blur; borders replicate the edge pixel so constant
// images are preserved.
inline VideoTensor gaussian_blur(const VideoTensor& v, int ksize, double sigma) {
  const auto k = gaussian_kernel1d(ksize, sigma);
  const int r = ksize / 2;
  VideoTensor out(v.n, v.c, v.h, v.w);
  std::vector<double> tmp(static_cast<std::size_t>(v.h) * v.w);
  for (int t = 0; t < v.n; ++t)
    for (int ch = 0; ch < v.c; ++ch) {
      const float* src = v.plane(t, ch);
      for (int y = 0; y < v.h; ++y)
        for (int x = 0; x < v.w; ++x) {
          double acc = 0;
          for (int d = -r; d <= r; ++d) {
            int sx = std::clamp(x + d, 0, v.w - 1);
            acc += k[d + r] * src[static_cast<std::size_t>(y) * v.w + sx];
          }
          tmp[static_cast<std::size_t>(y) * v.w + x] = acc;
        }
      float* dst = out.plane(t, ch);
      for (int y = 0; y < v.h; ++y)
        for (int x = 0; x < v.w; ++x) {
          double acc = 0;
          for (int d = -r; d <= r; ++d) {
            int sy = std::clamp(y + d, 0, v.h - 1);
            acc += k[d + r] * tmp[static_cast<std::size_t>(sy) * v.w + x];
          }
          dst[static_cast<std::size_t>(y) * v.w + x] =
              static_cast<float>(std::clamp(acc, 0.0, 1.0));
        }
    }
  return out;
}

// Each element is independently forced to 0 or 1 with probability p.
inline VideoTensor salt_pepper(const VideoTensor& v, double p, std::uint64_t seed) {
  if (p < 0 || p > 1) throw ConfigError("salt_pepper: p must be in [0, 1]");
  VideoTensor out = v;
  if (p == 0) return out;
  Rng rng = Rng(seed).fork("salt-pepper");
  for (auto& x : out.v)
    if (rng.bernoulli(p)) x = rng.bernoulli(0.5) ? 1.0f : 0.0f;
  return out;
}

// Bilinear resize (half-pixel centers). Same-size calls return a copy.
inline VideoTensor bilinear_resize(const VideoTensor& v, int oh, int ow) {
  if (oh < 1 || ow < 1) throw ConfigError("bilinear_resize: bad target size");
  if (oh == v.h && ow == v.w) return v;
  VideoTensor out(v.n, v.c, oh, ow);
  const double sy = static_cast<double>(v.h) / oh;
  const double sx = static_cast<double>(v.w) / ow;
  for (int t = 0; t < v.n; ++t)
    for (int ch = 0; ch < v.c; ++ch) {
      const float* src = v.plane(t, ch);
      float* dst = out.plane(t, ch);
      for (int y = 0; y < oh; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, v.h - 1.0);
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, v.h - 1);
        const double wy = fy - y0;
        for (int x = 0; x < ow; ++x) {
          const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, v.w - 1.0);
          const int x0 = static_cast<int>(fx);
          const int x1 = std::min(x0 + 1, v.w - 1);
          const double wx = fx - x0;
          const double v00 = src[static_cast<std::size_t>(y0) * v.w + x0];
          const double v01 = src[static_cast<std::size_t>(y0) * v.w + x1];
          const double v10 = src[static_cast<std::size_t>(y1) * v.w + x0];
          const double v11 = src[static_cast<std::size_t>(y1) * v.w + x1];
          dst[static_cast<std::size_t>(y) * ow + x] = static_cast<float>(
              (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11));
        }
      }
    }
  return out;
}

// Center crop to the given side fraction, then bilinear resize back.
inline VideoTensor crop_resize(const VideoTensor& v, double fraction) {
  if (!(fraction > 0) || fraction > 1) throw ConfigError("crop_resize: fraction must be in (0, 1]");
  if (fraction == 1.0) return v;
  const int ch_ = std::max(1, static_cast<int>(std::lround(v.h * fraction)));
  const int cw_ = std::max(1, static_cast<int>(std::lround(v.w * fraction)));
  const int y0 = (v.h - ch_) / 2, x0 = (v.w - cw_) / 2;
  VideoTensor crop(v.n, v.c, ch_, cw_);
  for (int t = 0; t < v.n; ++t)
    for (int c = 0; c < v.c; ++c)
      for (int y = 0; y < ch_; ++y)
        for (int x = 0; x < cw_; ++x) crop.at(t, c, y, x) = v.at(t, c, y0 + y, x0 + x);
  VideoTensor out = bilinear_resize(crop, v.h, v.w);
  out.clamp01();
  return out;
}

// --------------------------------------------------------------------------
// AttackSpec: "kind:param=value,..." grammar shared by the CLI and the
// evaluation config.

enum class AttackKind {
  FrameDrop,
  FrameSwap,
  FrameInsert,
  FrameInsertGaussian,
  FrameAverage,
  GaussNoise,
  GaussBlur,
  SaltPepper,
  CropResize
};

struct AttackSpec {
  AttackKind kind = AttackKind::FrameDrop;
  int i = -1, j = -1;         // -1: draw from seed
  int n = 3;                  // FA window
  double sigma = 0.05;        // noise sigma or blur sigma
  int ksize = 0;              // 0: derived from blur sigma
  double p = 0.05;            // salt & pepper flip probability
  double fraction = 0.75;     // crop fraction
  std::uint64_t seed = 0;

  static AttackKind kind_from_string(const std::string& s) {
    if (s == "fd") return AttackKind::FrameDrop;
    if (s == "fs") return AttackKind::FrameSwap;
    if (s == "fi") return AttackKind::FrameInsert;
    if (s == "fig") return AttackKind::FrameInsertGaussian;
    if (s == "fa") return AttackKind::FrameAverage;
    if (s == "gauss_noise") return AttackKind::GaussNoise;
    if (s == "gauss_blur") return AttackKind::GaussBlur;
    if (s == "salt_pepper") return AttackKind::SaltPepper;
    if (s == "crop_resize") return AttackKind::CropResize;
    throw ConfigError("unknown attack kind: " + s);
  }

  static std::string kind_to_string(AttackKind k) {
    switch (k) {
      case AttackKind::FrameDrop: return "fd";
      case AttackKind::FrameSwap: return "fs";
      case AttackKind::FrameInsert: return "fi";
      case AttackKind::FrameInsertGaussian: return "fig";
      case AttackKind::FrameAverage: return "fa";
      case AttackKind::GaussNoise: return "gauss_noise";
      case AttackKind::GaussBlur: return "gauss_blur";
      case AttackKind::SaltPepper: return "salt_pepper";
      case AttackKind::CropResize: return "crop_resize";
    }
    return "?";
  }

  static AttackSpec parse(const std::string& text) {
    AttackSpec spec;
    const auto colon = text.find(':');
    spec.kind = kind_from_string(text.substr(0, colon));
    if (colon == std::string::npos) return spec;
    std::stringstream ss(text.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) throw ConfigError("attack parameter needs key=value: " + item);
      const std::string key = item.substr(0, eq);
      const std::string val = item.substr(eq + 1);
      try {
        if (key == "i") spec.i = std::stoi(val);
        else if (key == "j") spec.j = std::stoi(val);
        else if (key == "n") spec.n = std::stoi(val);
        else if (key == "sigma") spec.sigma = std::stod(val);
        else if (key == "ksize") spec.ksize = std::stoi(val);
        else if (key == "p") spec.p = std::stod(val);
        else if (key == "fraction") spec.fraction = std::stod(val);
        else if (key == "seed") spec.seed = std::stoull(val);
        else throw ConfigError("unknown attack parameter: " + key);
      } catch (const std::invalid_argument&) {
        throw ConfigError("bad attack parameter value: " + item);
      }
    }
    return spec;
  }

  std::string to_string() const {
    std::ostringstream os;
    os << kind_to_string(kind);
    switch (kind) {
      case AttackKind::FrameAverage: os << ":n=" << n; break;
      case AttackKind::GaussNoise: os << ":sigma=" << sigma; break;
      case AttackKind::GaussBlur: os << ":sigma=" << sigma; break;
      case AttackKind::SaltPepper: os << ":p=" << p; break;
      case AttackKind::CropResize: os << ":fraction=" << fraction; break;
      default: break;
    }
    return os.str();
  }
};

// Applies the attack, drawing any unspecified indices from the spec seed.
inline VideoTensor apply_attack(const VideoTensor& v, const AttackSpec& spec) {
  Rng rng = Rng(spec.seed).fork("attack", static_cast<std::uint64_t>(spec.kind));
  switch (spec.kind) {
    case AttackKind::FrameDrop: {
      const int i = spec.i >= 0 ? spec.i : rng.range(0, v.n - 1);
      return frame_drop(v, i);
    }
    case AttackKind::FrameSwap: {
      int i = spec.i, j = spec.j;
      if (i < 0 || j < 0) {
        if (v.n < 2) throw ConfigError("frame_swap: needs at least 2 frames");
        i = rng.range(0, v.n - 1);
        j = rng.range(0, v.n - 2);
        if (j >= i) ++j;  // distinct
      }
      return frame_swap(v, i, j);
    }
    case AttackKind::FrameInsert: {
      const int i = spec.i >= 0 ? spec.i : rng.range(0, v.n - 1);
      const int j = spec.j >= 0 ? spec.j : rng.range(0, v.n - 1);
      return frame_insert(v, i, j);
    }
    case AttackKind::FrameInsertGaussian: {
      const int i = spec.i >= 0 ? spec.i : rng.range(0, v.n - 1);
      return frame_insert_gaussian(v, i, spec.seed);
    }
    case AttackKind::FrameAverage: {
      if (spec.n > v.n) throw ConfigError("frame_average: n exceeds frame count");
      const int i = spec.i >= 0 ? spec.i : rng.range(0, v.n - spec.n);
      return frame_average(v, spec.n, i);
    }
    case AttackKind::GaussNoise:
      return gaussian_noise(v, spec.sigma, spec.seed);
    case AttackKind::GaussBlur:
      return gaussian_blur(v, spec.ksize > 0 ? spec.ksize : default_blur_ksize(spec.sigma),
                           spec.sigma);
    case AttackKind::SaltPepper:
      return salt_pepper(v, spec.p, spec.seed);
    case AttackKind::CropResize:
      return crop_resize(v, spec.fraction);
  }
  throw ConfigError("apply_attack: bad kind");
}

}  // namespace vidsig
