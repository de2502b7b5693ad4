#pragma once

// Small CNN toolkit: direct-loop convolutions with hand-written backward
// passes, a Sequential container with named parameter layers and a freeze
// mask, LIFO-safe parameter snapshots, and AdamW. Everything is templated
// on the scalar type; training runs in float, finite-difference oracles in
// double.

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "vidsig/errors.hpp"
#include "vidsig/tensor.hpp"

namespace vidsig::nn {

template <typename T>
struct Param {
  std::string name;  // "<layer>.<w|b>"
  Tensor4<T> value;
  Tensor4<T> grad;

  void zero_grad() {
    if (!grad.same_shape(value)) grad = Tensor4<T>(value.n, value.c, value.h, value.w);
    grad.fill(T(0));
  }
};

// ---------------------------------------------------------------------------
// Convolution kernels (shared by layers). Valid output ranges are hoisted
// out of the inner loops so they run branch-free and vectorize.

namespace detail {

// Output indices o with 0 <= o*stride + k - pad < limit.
struct LoopRange {
  int lo, hi;  // half-open
};

inline LoopRange valid_range(int out_extent, int k, int stride, int pad, int in_extent) {
  int lo = 0;
  const int off = k - pad;
  if (off < 0) lo = (-off + stride - 1) / stride;
  int hi = out_extent;
  const int max_num = in_extent - 1 - off;
  if (max_num < 0)
    hi = 0;
  else
    hi = std::min(out_extent, max_num / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace detail

template <typename T>
void conv2d_forward(const Tensor4<T>& x, const Tensor4<T>& w, const Tensor4<T>& b, int stride,
                    int pad, Tensor4<T>& y) {
  const int Ci = x.c, H = x.h, W = x.w;
  const int Co = w.n, K = w.h;
  const int Ho = (H + 2 * pad - K) / stride + 1;
  const int Wo = (W + 2 * pad - K) / stride + 1;
  if (w.c != Ci) throw ShapeError("conv2d: channel mismatch");
  if (!(y.n == x.n && y.c == Co && y.h == Ho && y.w == Wo)) y = Tensor4<T>(x.n, Co, Ho, Wo);

  for (int i = 0; i < x.n; ++i) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < Co; ++co) {
      T* out = y.plane(i, co);
      const T bias = b.size() ? b.v[co] : T(0);
      std::fill_n(out, static_cast<std::size_t>(Ho) * Wo, bias);
      for (int ci = 0; ci < Ci; ++ci) {
        const T* in = x.plane(i, ci);
        for (int ky = 0; ky < K; ++ky)
          for (int kx = 0; kx < K; ++kx) {
            const T wv = w.at(co, ci, ky, kx);
            const auto ry = detail::valid_range(Ho, ky, stride, pad, H);
            const auto rx = detail::valid_range(Wo, kx, stride, pad, W);
            for (int oy = ry.lo; oy < ry.hi; ++oy) {
              const int sy = oy * stride + ky - pad;
              T* orow = out + static_cast<std::size_t>(oy) * Wo;
              const T* irow = in + static_cast<std::size_t>(sy) * W;
              if (stride == 1) {
                const int off = kx - pad;
                for (int ox = rx.lo; ox < rx.hi; ++ox) orow[ox] += wv * irow[ox + off];
              } else {
                for (int ox = rx.lo; ox < rx.hi; ++ox)
                  orow[ox] += wv * irow[ox * stride + kx - pad];
              }
            }
          }
      }
    }
  }
}

template <typename T>
void conv2d_backward_input(const Tensor4<T>& gy, const Tensor4<T>& w, int stride, int pad,
                           Tensor4<T>& gx) {
  const int Ci = gx.c, H = gx.h, W = gx.w;
  const int Co = w.n, K = w.h;
  const int Ho = gy.h, Wo = gy.w;
  gx.fill(T(0));
  for (int i = 0; i < gx.n; ++i) {
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < Ci; ++ci) {
      T* gin = gx.plane(i, ci);
      for (int co = 0; co < Co; ++co) {
        const T* gout = gy.plane(i, co);
        for (int ky = 0; ky < K; ++ky)
          for (int kx = 0; kx < K; ++kx) {
            const T wv = w.at(co, ci, ky, kx);
            const auto ry = detail::valid_range(Ho, ky, stride, pad, H);
            const auto rx = detail::valid_range(Wo, kx, stride, pad, W);
            for (int oy = ry.lo; oy < ry.hi; ++oy) {
              const int sy = oy * stride + ky - pad;
              const T* grow = gout + static_cast<std::size_t>(oy) * Wo;
              T* irow = gin + static_cast<std::size_t>(sy) * W;
              if (stride == 1) {
                const int off = kx - pad;
                for (int ox = rx.lo; ox < rx.hi; ++ox) irow[ox + off] += wv * grow[ox];
              } else {
                for (int ox = rx.lo; ox < rx.hi; ++ox)
                  irow[ox * stride + kx - pad] += wv * grow[ox];
              }
            }
          }
      }
    }
  }
}

template <typename T>
void conv2d_backward_params(const Tensor4<T>& x, const Tensor4<T>& gy, int stride, int pad,
                            Tensor4<T>& gw, Tensor4<T>& gb) {
  const int Ci = x.c, H = x.h, W = x.w;
  const int Co = gw.n, K = gw.h;
  const int Ho = gy.h, Wo = gy.w;
#pragma omp parallel for schedule(static)
  for (int co = 0; co < Co; ++co) {
    for (int i = 0; i < x.n; ++i) {
      const T* gout = gy.plane(i, co);
      T gbs = T(0);
      const std::size_t out_sz = static_cast<std::size_t>(Ho) * Wo;
#pragma omp simd reduction(+ : gbs)
      for (std::size_t e = 0; e < out_sz; ++e) gbs += gout[e];
      gb.v[co] += gbs;
      for (int ci = 0; ci < Ci; ++ci) {
        const T* in = x.plane(i, ci);
        for (int ky = 0; ky < K; ++ky)
          for (int kx = 0; kx < K; ++kx) {
            const auto ry = detail::valid_range(Ho, ky, stride, pad, H);
            const auto rx = detail::valid_range(Wo, kx, stride, pad, W);
            T acc = T(0);
            for (int oy = ry.lo; oy < ry.hi; ++oy) {
              const int sy = oy * stride + ky - pad;
              const T* grow = gout + static_cast<std::size_t>(oy) * Wo;
              const T* irow = in + static_cast<std::size_t>(sy) * W;
              if (stride == 1) {
                const int off = kx - pad;
#pragma omp simd reduction(+ : acc)
                for (int ox = rx.lo; ox < rx.hi; ++ox) acc += grow[ox] * irow[ox + off];
              } else {
                const int off = kx - pad;
#pragma omp simd reduction(+ : acc)
                for (int ox = rx.lo; ox < rx.hi; ++ox)
                  acc += grow[ox] * irow[ox * stride + off];
              }
            }
            gw.at(co, ci, ky, kx) += acc;
          }
      }
    }
  }
}

// Transposed convolution; weight layout is (Ci, Co, K, K). Loops iterate
// over the *input* grid; the valid source range comes from the same bound
// with input/output roles swapped.
template <typename T>
void convt2d_forward(const Tensor4<T>& x, const Tensor4<T>& w, const Tensor4<T>& b, int stride,
                     int pad, Tensor4<T>& y) {
  const int Ci = x.c, H = x.h, W = x.w;
  const int Co = w.c, K = w.h;
  const int Ho = (H - 1) * stride - 2 * pad + K;
  const int Wo = (W - 1) * stride - 2 * pad + K;
  if (w.n != Ci) throw ShapeError("convt2d: channel mismatch");
  if (!(y.n == x.n && y.c == Co && y.h == Ho && y.w == Wo)) y = Tensor4<T>(x.n, Co, Ho, Wo);

  for (int i = 0; i < x.n; ++i) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < Co; ++co) {
      T* out = y.plane(i, co);
      const T bias = b.size() ? b.v[co] : T(0);
      std::fill_n(out, static_cast<std::size_t>(Ho) * Wo, bias);
      for (int ci = 0; ci < Ci; ++ci) {
        const T* in = x.plane(i, ci);
        for (int ky = 0; ky < K; ++ky)
          for (int kx = 0; kx < K; ++kx) {
            const T wv = w.at(ci, co, ky, kx);
            const auto ry = detail::valid_range(H, ky, stride, pad, Ho);
            const auto rx = detail::valid_range(W, kx, stride, pad, Wo);
            const int off = kx - pad;
            for (int sy = ry.lo; sy < ry.hi; ++sy) {
              const int oy = sy * stride + ky - pad;
              const T* irow = in + static_cast<std::size_t>(sy) * W;
              T* orow = out + static_cast<std::size_t>(oy) * Wo;
              for (int sx = rx.lo; sx < rx.hi; ++sx) orow[sx * stride + off] += wv * irow[sx];
            }
          }
      }
    }
  }
}

template <typename T>
void convt2d_backward_input(const Tensor4<T>& gy, const Tensor4<T>& w, int stride, int pad,
                            Tensor4<T>& gx) {
  const int Ci = gx.c, H = gx.h, W = gx.w;
  const int Co = w.c, K = w.h;
  const int Ho = gy.h, Wo = gy.w;
  gx.fill(T(0));
  for (int i = 0; i < gx.n; ++i) {
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < Ci; ++ci) {
      T* gin = gx.plane(i, ci);
      for (int co = 0; co < Co; ++co) {
        const T* gout = gy.plane(i, co);
        for (int ky = 0; ky < K; ++ky)
          for (int kx = 0; kx < K; ++kx) {
            const T wv = w.at(ci, co, ky, kx);
            const auto ry = detail::valid_range(H, ky, stride, pad, Ho);
            const auto rx = detail::valid_range(W, kx, stride, pad, Wo);
            const int off = kx - pad;
            for (int sy = ry.lo; sy < ry.hi; ++sy) {
              const int oy = sy * stride + ky - pad;
              T* irow = gin + static_cast<std::size_t>(sy) * W;
              const T* grow = gout + static_cast<std::size_t>(oy) * Wo;
              for (int sx = rx.lo; sx < rx.hi; ++sx) irow[sx] += wv * grow[sx * stride + off];
            }
          }
      }
    }
  }
}

template <typename T>
void convt2d_backward_params(const Tensor4<T>& x, const Tensor4<T>& gy, int stride, int pad,
                             Tensor4<T>& gw, Tensor4<T>& gb) {
  const int Ci = x.c, H = x.h, W = x.w;
  const int Co = gw.c, K = gw.h;
  const int Ho = gy.h, Wo = gy.w;
#pragma omp parallel for schedule(static)
  for (int ci = 0; ci < Ci; ++ci) {
    for (int i = 0; i < x.n; ++i) {
      const T* in = x.plane(i, ci);
      for (int co = 0; co < Co; ++co) {
        const T* gout = gy.plane(i, co);
        for (int ky = 0; ky < K; ++ky)
          for (int kx = 0; kx < K; ++kx) {
            const auto ry = detail::valid_range(H, ky, stride, pad, Ho);
            const auto rx = detail::valid_range(W, kx, stride, pad, Wo);
            const int off = kx - pad;
            T acc = T(0);
            for (int sy = ry.lo; sy < ry.hi; ++sy) {
              const int oy = sy * stride + ky - pad;
              const T* irow = in + static_cast<std::size_t>(sy) * W;
              const T* grow = gout + static_cast<std::size_t>(oy) * Wo;
#pragma omp simd reduction(+ : acc)
              for (int sx = rx.lo; sx < rx.hi; ++sx) acc += irow[sx] * grow[sx * stride + off];
            }
            gw.at(ci, co, ky, kx) += acc;
          }
      }
    }
  }
  for (int i = 0; i < x.n; ++i)
    for (int co = 0; co < Co; ++co) {
      const T* gout = gy.plane(i, co);
      T gbs = T(0);
      const std::size_t out_sz = static_cast<std::size_t>(Ho) * Wo;
#pragma omp simd reduction(+ : gbs)
      for (std::size_t e = 0; e < out_sz; ++e) gbs += gout[e];
      gb.v[co] += gbs;
    }
}

// ---------------------------------------------------------------------------
// Layers

template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual const std::string& name() const = 0;
  virtual Tensor4<T> forward(const Tensor4<T>& x) const = 0;
  // Returns grad wrt input; accumulates parameter grads unless frozen.
  virtual Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& gy) = 0;
  virtual std::vector<Param<T>*> params() { return {}; }
  virtual std::unique_ptr<Layer<T>> clone() const = 0;

  bool frozen = false;
};

template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::string name, int c_in, int c_out, int ksize, int stride, int pad)
      : name_(std::move(name)), stride_(stride), pad_(pad) {
    w_.name = name_ + ".w";
    w_.value = Tensor4<T>(c_out, c_in, ksize, ksize);
    b_.name = name_ + ".b";
    b_.value = Tensor4<T>(c_out, 1, 1, 1);
    w_.zero_grad();
    b_.zero_grad();
  }

  void init(Rng& rng) {
    // He-style fan-in scaling.
    int fan_in = w_.value.c * w_.value.h * w_.value.w;
    double s = std::sqrt(2.0 / fan_in);
    for (T& x : w_.value.v) x = static_cast<T>(rng.gaussian(0.0, s));
    b_.value.fill(T(0));
  }

  const std::string& name() const override { return name_; }

  Tensor4<T> forward(const Tensor4<T>& x) const override {
    Tensor4<T> y;
    conv2d_forward(x, w_.value, b_.value, stride_, pad_, y);
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& gy) override {
    if (!this->frozen) conv2d_backward_params(x, gy, stride_, pad_, w_.grad, b_.grad);
    Tensor4<T> gx(x.n, x.c, x.h, x.w);
    conv2d_backward_input(gy, w_.value, stride_, pad_, gx);
    return gx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Conv2d>(*this); }

  Param<T> w_, b_;
  std::string name_;
  int stride_, pad_;
};

template <typename T>
class ConvTranspose2d final : public Layer<T> {
 public:
  ConvTranspose2d(std::string name, int c_in, int c_out, int ksize, int stride, int pad)
      : name_(std::move(name)), stride_(stride), pad_(pad) {
    w_.name = name_ + ".w";
    w_.value = Tensor4<T>(c_in, c_out, ksize, ksize);
    b_.name = name_ + ".b";
    b_.value = Tensor4<T>(c_out, 1, 1, 1);
    w_.zero_grad();
    b_.zero_grad();
  }

  void init(Rng& rng) {
    int fan_in = w_.value.n * w_.value.h * w_.value.w;  // c_in * k * k
    double s = std::sqrt(2.0 / fan_in);
    for (T& x : w_.value.v) x = static_cast<T>(rng.gaussian(0.0, s));
    b_.value.fill(T(0));
  }

  const std::string& name() const override { return name_; }

  Tensor4<T> forward(const Tensor4<T>& x) const override {
    Tensor4<T> y;
    convt2d_forward(x, w_.value, b_.value, stride_, pad_, y);
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& gy) override {
    if (!this->frozen) convt2d_backward_params(x, gy, stride_, pad_, w_.grad, b_.grad);
    Tensor4<T> gx(x.n, x.c, x.h, x.w);
    convt2d_backward_input(gy, w_.value, stride_, pad_, gx);
    return gx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }

  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<ConvTranspose2d>(*this);
  }

  Param<T> w_, b_;
  std::string name_;
  int stride_, pad_;
};

template <typename T>
class Linear final : public Layer<T> {
 public:
  Linear(std::string name, int c_in, int c_out) : name_(std::move(name)) {
    w_.name = name_ + ".w";
    w_.value = Tensor4<T>(c_out, c_in, 1, 1);
    b_.name = name_ + ".b";
    b_.value = Tensor4<T>(c_out, 1, 1, 1);
    w_.zero_grad();
    b_.zero_grad();
  }

  void init(Rng& rng) {
    double s = std::sqrt(1.0 / w_.value.c);
    for (T& x : w_.value.v) x = static_cast<T>(rng.gaussian(0.0, s));
    b_.value.fill(T(0));
  }

  const std::string& name() const override { return name_; }

  Tensor4<T> forward(const Tensor4<T>& x) const override {
    if (x.h != 1 || x.w != 1 || x.c != w_.value.c) throw ShapeError("linear: expected n x c_in x 1 x 1");
    Tensor4<T> y(x.n, w_.value.n, 1, 1);
    for (int i = 0; i < x.n; ++i)
      for (int co = 0; co < w_.value.n; ++co) {
        T acc = b_.value.v[co];
        for (int ci = 0; ci < w_.value.c; ++ci) acc += w_.value.at(co, ci, 0, 0) * x.at(i, ci, 0, 0);
        y.at(i, co, 0, 0) = acc;
      }
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& gy) override {
    Tensor4<T> gx(x.n, x.c, 1, 1);
    for (int i = 0; i < x.n; ++i)
      for (int co = 0; co < w_.value.n; ++co) {
        const T g = gy.at(i, co, 0, 0);
        if (!this->frozen) {
          b_.grad.v[co] += g;
          for (int ci = 0; ci < x.c; ++ci) w_.grad.at(co, ci, 0, 0) += g * x.at(i, ci, 0, 0);
        }
        for (int ci = 0; ci < x.c; ++ci) gx.at(i, ci, 0, 0) += w_.value.at(co, ci, 0, 0) * g;
      }
    return gx;
  }

  std::vector<Param<T>*> params() override { return {&w_, &b_}; }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Linear>(*this); }

  Param<T> w_, b_;
  std::string name_;
};

// 2x nearest-neighbor upsampling (parameter-free).
template <typename T>
class NearestUpsample2x final : public Layer<T> {
 public:
  const std::string& name() const override {
    static const std::string n = "upsample2x";
    return n;
  }

  Tensor4<T> forward(const Tensor4<T>& x) const override {
    Tensor4<T> y(x.n, x.c, 2 * x.h, 2 * x.w);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c) {
        const T* in = x.plane(i, c);
        T* out = y.plane(i, c);
        for (int yy = 0; yy < x.h; ++yy) {
          const T* irow = in + static_cast<std::size_t>(yy) * x.w;
          T* o0 = out + static_cast<std::size_t>(2 * yy) * 2 * x.w;
          T* o1 = o0 + 2 * x.w;
          for (int xx = 0; xx < x.w; ++xx) {
            o0[2 * xx] = o0[2 * xx + 1] = irow[xx];
            o1[2 * xx] = o1[2 * xx + 1] = irow[xx];
          }
        }
      }
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& gy) override {
    Tensor4<T> gx(x.n, x.c, x.h, x.w);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c) {
        const T* g = gy.plane(i, c);
        T* out = gx.plane(i, c);
        for (int yy = 0; yy < x.h; ++yy) {
          const T* g0 = g + static_cast<std::size_t>(2 * yy) * 2 * x.w;
          const T* g1 = g0 + 2 * x.w;
          T* orow = out + static_cast<std::size_t>(yy) * x.w;
          for (int xx = 0; xx < x.w; ++xx)
            orow[xx] = g0[2 * xx] + g0[2 * xx + 1] + g1[2 * xx] + g1[2 * xx + 1];
        }
      }
    return gx;
  }

  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<NearestUpsample2x>(*this);
  }
};

template <typename T>
class LeakyReLU final : public Layer<T> {
 public:
  explicit LeakyReLU(double alpha = 0.1) : alpha_(static_cast<T>(alpha)) {}

  const std::string& name() const override {
    static const std::string n = "leaky_relu";
    return n;
  }

  Tensor4<T> forward(const Tensor4<T>& x) const override {
    Tensor4<T> y = x;
    for (T& v : y.v) v = v > T(0) ? v : alpha_ * v;
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& gy) override {
    Tensor4<T> gx = gy;
    for (std::size_t i = 0; i < gx.v.size(); ++i)
      if (x.v[i] <= T(0)) gx.v[i] *= alpha_;
    return gx;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<LeakyReLU>(*this); }

  T alpha_;
};

template <typename T>
class Sigmoid final : public Layer<T> {
 public:
  const std::string& name() const override {
    static const std::string n = "sigmoid";
    return n;
  }

  Tensor4<T> forward(const Tensor4<T>& x) const override {
    Tensor4<T> y = x;
    for (T& v : y.v) v = T(1) / (T(1) + std::exp(-v));
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& gy) override {
    Tensor4<T> gx = gy;
    for (std::size_t i = 0; i < gx.v.size(); ++i) {
      const T s = T(1) / (T(1) + std::exp(-x.v[i]));
      gx.v[i] *= s * (T(1) - s);
    }
    return gx;
  }

  std::unique_ptr<Layer<T>> clone() const override { return std::make_unique<Sigmoid>(*this); }
};

template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  const std::string& name() const override {
    static const std::string n = "gap";
    return n;
  }

  Tensor4<T> forward(const Tensor4<T>& x) const override {
    Tensor4<T> y(x.n, x.c, 1, 1);
    const T inv = T(1) / static_cast<T>(static_cast<std::size_t>(x.h) * x.w);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c) {
        const T* p = x.plane(i, c);
        T acc = T(0);
        for (std::size_t e = 0; e < static_cast<std::size_t>(x.h) * x.w; ++e) acc += p[e];
        y.at(i, c, 0, 0) = acc * inv;
      }
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& x, const Tensor4<T>& gy) override {
    Tensor4<T> gx(x.n, x.c, x.h, x.w);
    const T inv = T(1) / static_cast<T>(static_cast<std::size_t>(x.h) * x.w);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c) {
        const T g = gy.at(i, c, 0, 0) * inv;
        T* p = gx.plane(i, c);
        std::fill_n(p, static_cast<std::size_t>(x.h) * x.w, g);
      }
    return gx;
  }

  std::unique_ptr<Layer<T>> clone() const override {
    return std::make_unique<GlobalAvgPool>(*this);
  }
};

// ---------------------------------------------------------------------------
// Sequential model

template <typename T>
class Sequential {
 public:
  Sequential() = default;
  Sequential(const Sequential& o) { *this = o; }
  Sequential& operator=(const Sequential& o) {
    layers.clear();
    for (const auto& l : o.layers) layers.push_back(l->clone());
    return *this;
  }
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L>
  L* add(L layer) {
    auto p = std::make_unique<L>(std::move(layer));
    L* raw = p.get();
    layers.push_back(std::move(p));
    return raw;
  }

  Tensor4<T> forward(const Tensor4<T>& x) const {
    Tensor4<T> cur = x;
    for (const auto& l : layers) cur = l->forward(cur);
    return cur;
  }

  // Keeps each layer's input for the backward pass.
  Tensor4<T> forward_cached(const Tensor4<T>& x, std::vector<Tensor4<T>>& acts) const {
    acts.clear();
    acts.reserve(layers.size());
    Tensor4<T> cur = x;
    for (const auto& l : layers) {
      acts.push_back(cur);
      cur = l->forward(cur);
    }
    return cur;
  }

  Tensor4<T> backward(const std::vector<Tensor4<T>>& acts, const Tensor4<T>& grad_out) {
    Tensor4<T> g = grad_out;
    for (std::size_t i = layers.size(); i-- > 0;) g = layers[i]->backward(acts[i], g);
    return g;
  }

  std::vector<Param<T>*> params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers)
      for (auto* p : l->params()) out.push_back(p);
    return out;
  }

  std::vector<Param<T>*> trainable_params() {
    std::vector<Param<T>*> out;
    for (auto& l : layers) {
      if (l->frozen) continue;
      for (auto* p : l->params()) out.push_back(p);
    }
    return out;
  }

  // Layers that own parameters, in order (the "named layers" of the model).
  std::vector<Layer<T>*> param_layers() {
    std::vector<Layer<T>*> out;
    for (auto& l : layers)
      if (!l->params().empty()) out.push_back(l.get());
    return out;
  }

  Layer<T>* layer_by_name(const std::string& name) {
    for (auto& l : layers)
      if (l->name() == name) return l.get();
    return nullptr;
  }

  void zero_grads() {
    for (auto* p : params()) p->zero_grad();
  }

  void freeze_all(bool frozen = true) {
    for (auto& l : layers) l->frozen = frozen;
  }

  std::vector<std::unique_ptr<Layer<T>>> layers;
};

// ---------------------------------------------------------------------------
// Parameter snapshots (LIFO restore safe: snapshots are plain values)

template <typename T>
struct ParamSnapshot {
  struct Entry {
    std::string name;
    std::vector<T> value;
  };
  std::vector<Entry> entries;
};

template <typename T>
ParamSnapshot<T> snapshot_params(Sequential<T>& model) {
  ParamSnapshot<T> s;
  for (auto* p : model.params()) s.entries.push_back({p->name, p->value.v});
  return s;
}

template <typename T>
void restore_params(Sequential<T>& model, const ParamSnapshot<T>& snap) {
  auto ps = model.params();
  if (ps.size() != snap.entries.size())
    throw ShapeError("restore_params: snapshot/model parameter count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (ps[i]->name != snap.entries[i].name)
      throw ShapeError("restore_params: parameter name mismatch at " + ps[i]->name + " vs " +
                       snap.entries[i].name);
    if (ps[i]->value.v.size() != snap.entries[i].value.size())
      throw ShapeError("restore_params: parameter size mismatch at " + ps[i]->name);
    ps[i]->value.v = snap.entries[i].value;
  }
}

// ---------------------------------------------------------------------------
// AdamW

template <typename T>
class AdamW {
 public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;  // decoupled

  void step(const std::vector<Param<T>*>& params, double lr) {
    ++t_;
    if (state_.size() != params.size()) {
      state_.clear();
      state_.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        state_[i].m.assign(params[i]->value.v.size(), 0.0);
        state_[i].v.assign(params[i]->value.v.size(), 0.0);
      }
    }
    const double bc1 = 1.0 - std::pow(beta1, t_);
    const double bc2 = 1.0 - std::pow(beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& st = state_[i];
      auto& val = params[i]->value.v;
      auto& grd = params[i]->grad.v;
      for (std::size_t e = 0; e < val.size(); ++e) {
        const double g = static_cast<double>(grd[e]);
        st.m[e] = beta1 * st.m[e] + (1.0 - beta1) * g;
        st.v[e] = beta2 * st.v[e] + (1.0 - beta2) * g * g;
        const double mhat = st.m[e] / bc1;
        const double vhat = st.v[e] / bc2;
        double upd = mhat / (std::sqrt(vhat) + eps) + weight_decay * static_cast<double>(val[e]);
        val[e] = static_cast<T>(static_cast<double>(val[e]) - lr * upd);
      }
    }
  }

 private:
  struct State {
    std::vector<double> m, v;
  };
  std::vector<State> state_;
  long t_ = 0;
};

}  // namespace vidsig::nn
