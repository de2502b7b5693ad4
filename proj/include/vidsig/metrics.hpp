#pragma once

// Video quality metrics (PSNR, SSIM, tLP) and the pluggable perceptual
// distance used by the training losses and the layer-sensitivity search.
// The LP slot in tLP defaults to MSE over 2x average-pooled frames; it is
// a stand-in for learned perceptual metrics and its numbers are not
// comparable to published LPIPS values.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "vidsig/errors.hpp"
#include "vidsig/tensor.hpp"

namespace vidsig {

enum class MetricKind { Mse, Mae, Learned };

inline MetricKind metric_from_string(const std::string& s) {
  if (s == "mse") return MetricKind::Mse;
  if (s == "mae") return MetricKind::Mae;
  if (s == "learned") return MetricKind::Learned;
  throw ConfigError("unknown perceptual metric: " + s);
}

inline std::string metric_to_string(MetricKind k) {
  switch (k) {
    case MetricKind::Mse: return "mse";
    case MetricKind::Mae: return "mae";
    case MetricKind::Learned: return "learned";
  }
  return "?";
}

// Learned-metric slot: d(a, b) with optional gradient wrt a.
template <typename T>
using LearnedMetricFn =
    std::function<T(const Tensor4<T>&, const Tensor4<T>&, Tensor4<T>* grad_a)>;

// Elementwise distance over a whole tensor, mean-reduced. grad_a, when
// non-null, receives d(distance)/d(a) added into it (caller zeroes).
template <typename T>
T metric_distance(MetricKind kind, const Tensor4<T>& a, const Tensor4<T>& b,
                  Tensor4<T>* grad_a = nullptr, const LearnedMetricFn<T>* learned = nullptr) {
  if (!a.same_shape(b)) throw ShapeError("metric_distance: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  switch (kind) {
    case MetricKind::Mse: {
      const T inv = T(1) / static_cast<T>(a.size());
      T acc = T(0);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const T d = a.v[i] - b.v[i];
        acc += d * d;
        if (grad_a) grad_a->v[i] += T(2) * d * inv;
      }
      return acc * inv;
    }
    case MetricKind::Mae: {
      const T inv = T(1) / static_cast<T>(a.size());
      T acc = T(0);
      for (std::size_t i = 0; i < a.size(); ++i) {
        const T d = a.v[i] - b.v[i];
        acc += std::abs(d);
        if (grad_a) grad_a->v[i] += (d > T(0) ? inv : (d < T(0) ? -inv : T(0)));
      }
      return acc * inv;
    }
    case MetricKind::Learned: {
      if (!learned || !*learned) throw ConfigError("learned metric selected but no callback installed");
      return (*learned)(a, b, grad_a);
    }
  }
  throw ConfigError("metric_distance: bad kind");
}

// ---------------------------------------------------------------------------
// PSNR

inline constexpr double kPsnrCapDb = 100.0;  // sentinel for zero-error frames

template <typename T>
double psnr(const Tensor4<T>& a, const Tensor4<T>& b, std::vector<double>* per_frame = nullptr) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
  if (a.n < 1) throw ShapeError("psnr: empty video");
  const std::size_t fsz = static_cast<std::size_t>(a.c) * a.h * a.w;
  double total = 0;
  for (int t = 0; t < a.n; ++t) {
    const T* pa = a.v.data() + t * fsz;
    const T* pb = b.v.data() + t * fsz;
    double mse = 0;
    for (std::size_t i = 0; i < fsz; ++i) {
      const double d = static_cast<double>(pa[i]) - static_cast<double>(pb[i]);
      mse += d * d;
    }
    mse /= static_cast<double>(fsz);
    double p = mse <= 0 ? kPsnrCapDb : std::min(kPsnrCapDb, 10.0 * std::log10(1.0 / mse));
    if (per_frame) per_frame->push_back(p);
    total += p;
  }
  return total / a.n;
}

// ---------------------------------------------------------------------------
// SSIM: 11x11 Gaussian window (sigma 1.5), C1=(0.01)^2, C2=(0.03)^2 for
// MAX=1, window fully inside the frame, channels then frames averaged.
// The window shrinks to the smallest image dimension for tiny inputs.

namespace detail {

inline std::vector<double> gaussian_window(int size, double sigma) {
  std::vector<double> w(static_cast<std::size_t>(size) * size);
  const double c = (size - 1) / 2.0;
  double sum = 0;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double g = std::exp(-((y - c) * (y - c) + (x - c) * (x - c)) / (2 * sigma * sigma));
      w[static_cast<std::size_t>(y) * size + x] = g;
      sum += g;
    }
  for (auto& g : w) g /= sum;
  return w;
}

}  // namespace detail

template <typename T>
double ssim(const Tensor4<T>& a, const Tensor4<T>& b, std::vector<double>* per_frame = nullptr) {
  if (!a.same_shape(b)) throw ShapeError("ssim: shape mismatch");
  if (a.n < 1) throw ShapeError("ssim: empty video");
  constexpr double C1 = 0.01 * 0.01;
  constexpr double C2 = 0.03 * 0.03;
  int win = std::min({11, a.h, a.w});
  if (win % 2 == 0) --win;
  if (win < 1) throw ShapeError("ssim: degenerate image");
  const auto w = detail::gaussian_window(win, 1.5);

  double video_acc = 0;
  for (int t = 0; t < a.n; ++t) {
    double frame_acc = 0;
    for (int ch = 0; ch < a.c; ++ch) {
      const T* pa = a.plane(t, ch);
      const T* pb = b.plane(t, ch);
      double ch_acc = 0;
      int count = 0;
      for (int y0 = 0; y0 + win <= a.h; ++y0)
        for (int x0 = 0; x0 + win <= a.w; ++x0) {
          // Two-pass central moments. The x- and y-side accumulators run
          // through structurally identical expressions, and the mean-square
          // sum uses the identity mux^2 + muy^2 = (mux - muy)^2 + 2 mux muy,
          // so ssim(x, x) evaluates to exactly 1.0 under any FMA
          // contraction the compiler picks.
          double mx = 0, my = 0;
          const double* wp = w.data();
          for (int dy = 0; dy < win; ++dy) {
            const T* ra = pa + static_cast<std::size_t>(y0 + dy) * a.w + x0;
            const T* rb = pb + static_cast<std::size_t>(y0 + dy) * a.w + x0;
            for (int dx = 0; dx < win; ++dx, ++wp) {
              mx += *wp * static_cast<double>(ra[dx]);
              my += *wp * static_cast<double>(rb[dx]);
            }
          }
          double vx = 0, vy = 0, cxy = 0;
          wp = w.data();
          for (int dy = 0; dy < win; ++dy) {
            const T* ra = pa + static_cast<std::size_t>(y0 + dy) * a.w + x0;
            const T* rb = pb + static_cast<std::size_t>(y0 + dy) * a.w + x0;
            for (int dx = 0; dx < win; ++dx, ++wp) {
              const double da = static_cast<double>(ra[dx]) - mx;
              const double db = static_cast<double>(rb[dx]) - my;
              vx += *wp * da * da;
              vy += *wp * db * db;
              cxy += *wp * da * db;
            }
          }
          const double dmu = mx - my;
          const double pm = mx * my;
          const double lum_num = 2 * pm + C1;
          const double lum_den = dmu * dmu + 2 * pm + C1;
          const double str_num = 2 * cxy + C2;
          const double str_den = vx + vy + C2;
          ch_acc += (lum_num * str_num) / (lum_den * str_den);
          ++count;
        }
      frame_acc += ch_acc / count;
    }
    frame_acc /= a.c;
    if (per_frame) per_frame->push_back(frame_acc);
    video_acc += frame_acc;
  }
  return video_acc / a.n;
}

// ---------------------------------------------------------------------------
// tLP: temporal perceptual dynamics. mean_t | LP(a_{t-1},a_t) - LP(b_{t-1},b_t) |

// Default LP: MSE over 2x average-pooled frames (the learned-metric
// substitute; see header comment).
template <typename T>
double lp_downsampled_mse(const Tensor4<T>& fa, const Tensor4<T>& fb) {
  if (!fa.same_shape(fb)) throw ShapeError("lp: shape mismatch");
  const int ph = std::max(1, fa.h / 2), pw = std::max(1, fa.w / 2);
  double acc = 0;
  for (int ch = 0; ch < fa.c; ++ch)
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x) {
        double sa = 0, sb = 0;
        int n = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            int sy = 2 * y + dy, sx = 2 * x + dx;
            if (sy >= fa.h || sx >= fa.w) continue;
            sa += static_cast<double>(fa.at(0, ch, sy, sx));
            sb += static_cast<double>(fb.at(0, ch, sy, sx));
            ++n;
          }
        const double d = (sa - sb) / n;
        acc += d * d;
      }
  return acc / (static_cast<double>(fa.c) * ph * pw);
}

template <typename T>
using FramePairMetric = std::function<double(const Tensor4<T>&, const Tensor4<T>&)>;

template <typename T>
double tlp(const Tensor4<T>& a, const Tensor4<T>& b, const FramePairMetric<T>& lp = nullptr,
           std::vector<double>* per_pair = nullptr) {
  if (!a.same_shape(b)) throw ShapeError("tlp: shape mismatch");
  if (a.n < 2) throw ShapeError("tlp: needs at least 2 frames");
  FramePairMetric<T> metric = lp ? lp : FramePairMetric<T>([](const Tensor4<T>& x, const Tensor4<T>& y) {
    return lp_downsampled_mse(x, y);
  });
  double acc = 0;
  Tensor4<T> prev_a = a.frame(0), prev_b = b.frame(0);
  for (int t = 1; t < a.n; ++t) {
    Tensor4<T> cur_a = a.frame(t), cur_b = b.frame(t);
    const double la = metric(prev_a, cur_a);
    const double lb = metric(prev_b, cur_b);
    const double d = std::abs(la - lb);
    if (per_pair) per_pair->push_back(d);
    acc += d;
    prev_a = std::move(cur_a);
    prev_b = std::move(cur_b);
  }
  return acc / (a.n - 1);
}

// ---------------------------------------------------------------------------
// Quality report: the evaluation column set. The LPIPS column of the paper
// set is substituted by the LP stand-in and labeled as such.

struct QualityReport {
  double psnr_db = 0;
  double ssim_value = 0;
  double tlp_value = 0;
  std::vector<double> psnr_per_frame;
  std::vector<double> ssim_per_frame;
  std::vector<double> tlp_per_pair;
  std::string lp_metric = "downsampled-mse (LPIPS substitute)";
};

template <typename T>
QualityReport quality_report(const Tensor4<T>& a, const Tensor4<T>& b) {
  QualityReport r;
  r.psnr_db = psnr(a, b, &r.psnr_per_frame);
  r.ssim_value = ssim(a, b, &r.ssim_per_frame);
  if (a.n >= 2) r.tlp_value = tlp(a, b, FramePairMetric<T>(nullptr), &r.tlp_per_pair);
  return r;
}

}  // namespace vidsig
