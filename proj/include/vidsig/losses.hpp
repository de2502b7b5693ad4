#pragma once

// Fine-tuning objectives. The two watermark BCE terms sum over bits without
// dividing by k, exactly as the objective is defined; the weights absorb the
// scale. Probabilities are clamped to [1e-7, 1 - 1e-7] before any log.
// Every loss exposes an analytic gradient that is checked against central
// finite differences in the test suite.

#include <cmath>
#include <vector>

#include "vidsig/errors.hpp"
#include "vidsig/metrics.hpp"
#include "vidsig/tensor.hpp"

namespace vidsig {

inline constexpr double kProbEps = 1e-7;

struct LossWeights {
  double alpha1 = 1.0;  // frame-level watermark term
  double alpha2 = 1.0;  // video-level watermark term
  double lambda1 = 1.0;  // watermark
  double lambda2 = 0.2;  // spatial alignment
  double lambda3 = 0.2;  // temporal alignment

  void validate() const {
    if (alpha1 < 0 || alpha2 < 0 || lambda1 < 0 || lambda2 < 0 || lambda3 < 0)
      throw ConfigError("loss weights must be nonnegative");
  }
};

namespace detail {

template <typename T>
void check_soft(const SoftMessageT<T>& soft, const WatermarkMessage& m) {
  if (soft.k != m.k()) throw ShapeError("watermark loss: k mismatch");
  if (soft.frames < 1) throw ShapeError("watermark loss: empty soft message");
}

}  // namespace detail

// L_fr = -(1/f) sum_t sum_i [ m_i log p_ti + (1-m_i) log(1-p_ti) ]
template <typename T>
T frame_watermark_loss(const SoftMessageT<T>& soft, const WatermarkMessage& m,
                       SoftMessageT<T>* grad = nullptr) {
  detail::check_soft(soft, m);
  const T lo = static_cast<T>(kProbEps), hi = static_cast<T>(1.0 - kProbEps);
  const T invf = T(1) / static_cast<T>(soft.frames);
  T loss = T(0);
  for (int t = 0; t < soft.frames; ++t)
    for (int i = 0; i < soft.k; ++i) {
      const T raw = soft.at(t, i);
      const T p = std::clamp(raw, lo, hi);
      if (m.bits[i]) {
        loss -= std::log(p);
        if (grad && raw > lo && raw < hi) grad->at(t, i) += -invf / p;
      } else {
        loss -= std::log(T(1) - p);
        if (grad && raw > lo && raw < hi) grad->at(t, i) += invf / (T(1) - p);
      }
    }
  return loss * invf;
}

// L_v: BCE of the frame-mean soft vector against the key.
template <typename T>
T video_watermark_loss(const SoftMessageT<T>& soft, const WatermarkMessage& m,
                       SoftMessageT<T>* grad = nullptr) {
  detail::check_soft(soft, m);
  const T lo = static_cast<T>(kProbEps), hi = static_cast<T>(1.0 - kProbEps);
  const T invf = T(1) / static_cast<T>(soft.frames);
  std::vector<T> mean = soft.mean();
  T loss = T(0);
  for (int i = 0; i < soft.k; ++i) {
    const T raw = mean[i];
    const T p = std::clamp(raw, lo, hi);
    T dmean = T(0);
    if (m.bits[i]) {
      loss -= std::log(p);
      if (raw > lo && raw < hi) dmean = -T(1) / p;
    } else {
      loss -= std::log(T(1) - p);
      if (raw > lo && raw < hi) dmean = T(1) / (T(1) - p);
    }
    if (grad && dmean != T(0))
      for (int t = 0; t < soft.frames; ++t) grad->at(t, i) += dmean * invf;
  }
  return loss;
}

// L_wm = alpha1 * L_fr + alpha2 * L_v
template <typename T>
T watermark_loss(const SoftMessageT<T>& soft, const WatermarkMessage& m, const LossWeights& w,
                 SoftMessageT<T>* grad = nullptr) {
  SoftMessageT<T> g1, g2;
  if (grad) {
    g1 = SoftMessageT<T>(soft.frames, soft.k, T(0));
    g2 = SoftMessageT<T>(soft.frames, soft.k, T(0));
  }
  const T lfr = frame_watermark_loss(soft, m, grad ? &g1 : nullptr);
  const T lv = video_watermark_loss(soft, m, grad ? &g2 : nullptr);
  if (grad)
    for (std::size_t i = 0; i < grad->p.size(); ++i)
      grad->p[i] += static_cast<T>(w.alpha1) * g1.p[i] + static_cast<T>(w.alpha2) * g2.p[i];
  return static_cast<T>(w.alpha1) * lfr + static_cast<T>(w.alpha2) * lv;
}

// L_spatial = (1/f) sum_t D_sim(a_t, b_t)
template <typename T>
T spatial_loss(const Tensor4<T>& a, const Tensor4<T>& b, MetricKind kind,
               Tensor4<T>* grad_a = nullptr, const LearnedMetricFn<T>* learned = nullptr) {
  if (!a.same_shape(b)) throw ShapeError("spatial_loss: shape mismatch");
  const T invf = T(1) / static_cast<T>(a.n);
  T loss = T(0);
  for (int t = 0; t < a.n; ++t) {
    Tensor4<T> fa = a.frame(t), fb = b.frame(t);
    Tensor4<T> g;
    if (grad_a) g = Tensor4<T>(1, a.c, a.h, a.w, T(0));
    loss += metric_distance(kind, fa, fb, grad_a ? &g : nullptr, learned);
    if (grad_a) {
      T* dst = grad_a->plane(t, 0);
      for (std::size_t i = 0; i < g.v.size(); ++i) dst[i] += g.v[i] * invf;
    }
  }
  return loss * invf;
}

// L_temporal = (1/(f-1)) sum_t D_sim(a_{t+1}-a_t, b_{t+1}-b_t)
template <typename T>
T temporal_loss(const Tensor4<T>& a, const Tensor4<T>& b, MetricKind kind,
                Tensor4<T>* grad_a = nullptr, const LearnedMetricFn<T>* learned = nullptr) {
  if (!a.same_shape(b)) throw ShapeError("temporal_loss: shape mismatch");
  if (a.n < 2) throw ShapeError("temporal_loss: undefined for fewer than 2 frames");
  const std::size_t fsz = static_cast<std::size_t>(a.c) * a.h * a.w;
  const T inv = T(1) / static_cast<T>(a.n - 1);
  T loss = T(0);
  for (int t = 0; t + 1 < a.n; ++t) {
    Tensor4<T> da(1, a.c, a.h, a.w), db(1, a.c, a.h, a.w);
    const T* a0 = a.v.data() + t * fsz;
    const T* a1 = a.v.data() + (t + 1) * fsz;
    const T* b0 = b.v.data() + t * fsz;
    const T* b1 = b.v.data() + (t + 1) * fsz;
    for (std::size_t i = 0; i < fsz; ++i) {
      da.v[i] = a1[i] - a0[i];
      db.v[i] = b1[i] - b0[i];
    }
    Tensor4<T> g;
    if (grad_a) g = Tensor4<T>(1, a.c, a.h, a.w, T(0));
    loss += metric_distance(kind, da, db, grad_a ? &g : nullptr, learned);
    if (grad_a) {
      T* g0 = grad_a->v.data() + t * fsz;
      T* g1 = grad_a->v.data() + (t + 1) * fsz;
      for (std::size_t i = 0; i < fsz; ++i) {
        g1[i] += g.v[i] * inv;
        g0[i] -= g.v[i] * inv;
      }
    }
  }
  return loss * inv;
}

// L = lambda1 L_wm + lambda2 L_spatial + lambda3 L_temporal
inline double total_loss(double l_wm, double l_spatial, double l_temporal, const LossWeights& w) {
  return w.lambda1 * l_wm + w.lambda2 * l_spatial + w.lambda3 * l_temporal;
}

// Convenience for callers holding the tensors. Gradients are accumulated:
// grad_soft gets the watermark term, grad_video the alignment terms.
template <typename T>
T total_loss(const SoftMessageT<T>& soft, const Tensor4<T>& watermarked,
             const Tensor4<T>& reference, const WatermarkMessage& m, const LossWeights& w,
             MetricKind kind, SoftMessageT<T>* grad_soft = nullptr,
             Tensor4<T>* grad_video = nullptr, const LearnedMetricFn<T>* learned = nullptr) {
  SoftMessageT<T> gs;
  if (grad_soft) gs = SoftMessageT<T>(soft.frames, soft.k, T(0));
  Tensor4<T> gsp, gtp;
  if (grad_video) {
    gsp = Tensor4<T>(watermarked.n, watermarked.c, watermarked.h, watermarked.w, T(0));
    gtp = Tensor4<T>(watermarked.n, watermarked.c, watermarked.h, watermarked.w, T(0));
  }
  const T lwm = watermark_loss(soft, m, w, grad_soft ? &gs : nullptr);
  const T lsp = spatial_loss(watermarked, reference, kind, grad_video ? &gsp : nullptr, learned);
  const T ltp = watermarked.n >= 2
                    ? temporal_loss(watermarked, reference, kind, grad_video ? &gtp : nullptr, learned)
                    : T(0);  // single-frame clips have no temporal term to align
  if (grad_soft)
    for (std::size_t i = 0; i < grad_soft->p.size(); ++i)
      grad_soft->p[i] += static_cast<T>(w.lambda1) * gs.p[i];
  if (grad_video)
    for (std::size_t i = 0; i < grad_video->v.size(); ++i)
      grad_video->v[i] +=
          static_cast<T>(w.lambda2) * gsp.v[i] + static_cast<T>(w.lambda3) * gtp.v[i];
  return static_cast<T>(w.lambda1) * lwm + static_cast<T>(w.lambda2) * lsp +
         static_cast<T>(w.lambda3) * ltp;
}

}  // namespace vidsig
