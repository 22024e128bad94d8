#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/nn/autograd.hpp"

namespace hytip::nn {

/// Counts convolution multiply-accumulates executed on this thread while a
/// MacScope is alive. Used for the instrumented route of complexity accounting.
struct MacCounter {
  std::uint64_t macs = 0;
  std::uint64_t conv_calls = 0;
};

namespace detail {
inline MacCounter*& active_counter() {
  thread_local MacCounter* counter = nullptr;
  return counter;
}
}  // namespace detail

class MacScope {
 public:
  explicit MacScope(MacCounter& c) : prev_(detail::active_counter()) { detail::active_counter() = &c; }
  ~MacScope() { detail::active_counter() = prev_; }
  MacScope(const MacScope&) = delete;
  MacScope& operator=(const MacScope&) = delete;

 private:
  MacCounter* prev_;
};

/// Hash of the branch taken at every non-smooth point (activation signs,
/// clamps, bilinear cells, likelihood floors) while a BranchScope is alive.
/// Two evaluations with equal hashes lie on the same smooth piece.
struct BranchProbe {
  std::uint64_t hash = 14695981039346656037ull;
  void mix(std::uint64_t v) { hash = (hash ^ v) * 1099511628211ull; }
};

namespace detail {
inline BranchProbe*& active_probe() {
  thread_local BranchProbe* probe = nullptr;
  return probe;
}

template <class T, class Code>
void record_branches(const Tensor<T>& x, Code code) {
  BranchProbe* p = active_probe();
  if (!p) return;
  for (std::size_t i = 0; i < x.size(); ++i) p->mix(i * 8 + static_cast<std::uint64_t>(code(x[i])));
}
}  // namespace detail

class BranchScope {
 public:
  explicit BranchScope(BranchProbe& p) : prev_(detail::active_probe()) { detail::active_probe() = &p; }
  ~BranchScope() { detail::active_probe() = prev_; }
  BranchScope(const BranchScope&) = delete;
  BranchScope& operator=(const BranchScope&) = delete;

 private:
  BranchProbe* prev_;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  auto dim = [&](int x, int y) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw std::invalid_argument(std::string(op) + ": cannot broadcast " + a.str() + " with " + b.str());
  };
  return {dim(a.n, b.n), dim(a.c, b.c), dim(a.h, b.h), dim(a.w, b.w)};
}

inline std::array<std::size_t, 4> strides_for(const Shape& s, const Shape& out) {
  std::array<std::size_t, 4> st{static_cast<std::size_t>(s.c) * s.h * s.w,
                                static_cast<std::size_t>(s.h) * s.w,
                                static_cast<std::size_t>(s.w), 1};
  if (s.n == 1 && out.n != 1) st[0] = 0;
  if (s.c == 1 && out.c != 1) st[1] = 0;
  if (s.h == 1 && out.h != 1) st[2] = 0;
  if (s.w == 1 && out.w != 1) st[3] = 0;
  return st;
}

/// Visits every output index together with the matching input offsets.
template <class F>
void for_each_broadcast(const Shape& out, const std::array<std::size_t, 4>& sa,
                        const std::array<std::size_t, 4>& sb, F&& f) {
  std::size_t o = 0;
  for (int n = 0; n < out.n; ++n)
    for (int c = 0; c < out.c; ++c)
      for (int y = 0; y < out.h; ++y) {
        std::size_t ia = n * sa[0] + c * sa[1] + y * sa[2];
        std::size_t ib = n * sb[0] + c * sb[1] + y * sb[2];
        for (int x = 0; x < out.w; ++x, ++o) f(o, ia + x * sa[3], ib + x * sb[3]);
      }
}

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
void im2col(const T* in, int cin, int h, int w, int k, int stride, int pad, int ho, int wo, T* cols) {
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols + (static_cast<std::size_t>((c * k + ky) * k + kx)) * ho * wo;
        const T* plane = in + static_cast<std::size_t>(c) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride + ky - pad;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
}

template <class T>
void col2im(const T* cols, int cin, int h, int w, int k, int stride, int pad, int ho, int wo, T* out) {
  for (int c = 0; c < cin; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols + (static_cast<std::size_t>((c * k + ky) * k + kx)) * ho * wo;
        T* plane = out + static_cast<std::size_t>(c) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
}

template <class T>
T normal_cdf(T x) {
  return T(0.5) * std::erfc(-x / std::sqrt(T(2)));
}
template <class T>
T normal_pdf(T x) {
  return std::exp(T(-0.5) * x * x) / std::sqrt(T(2) * T(3.14159265358979323846));
}
template <class T>
T logistic(T x) {
  return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic with NumPy-style broadcasting over size-1 extents.

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  const Shape out = detail::broadcast_shape(a.shape(), b.shape(), "add");
  auto sa = detail::strides_for(a.shape(), out), sb = detail::strides_for(b.shape(), out);
  Tensor<T> v(out);
  const T *pa = a.value().data(), *pb = b.value().data();
  detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { v[o] = pa[i] + pb[j]; });
  return make_result<T>(std::move(v), {a, b}, [out, sa, sb](Node<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const T* g = self.grad.data();
    T* ga = A.requires_grad ? A.grad_buffer().data() : nullptr;
    T* gb = B.requires_grad ? B.grad_buffer().data() : nullptr;
    detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (ga) ga[i] += g[o];
      if (gb) gb[j] += g[o];
    });
  });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  const Shape out = detail::broadcast_shape(a.shape(), b.shape(), "sub");
  auto sa = detail::strides_for(a.shape(), out), sb = detail::strides_for(b.shape(), out);
  Tensor<T> v(out);
  const T *pa = a.value().data(), *pb = b.value().data();
  detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { v[o] = pa[i] - pb[j]; });
  return make_result<T>(std::move(v), {a, b}, [out, sa, sb](Node<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const T* g = self.grad.data();
    T* ga = A.requires_grad ? A.grad_buffer().data() : nullptr;
    T* gb = B.requires_grad ? B.grad_buffer().data() : nullptr;
    detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (ga) ga[i] += g[o];
      if (gb) gb[j] -= g[o];
    });
  });
}

template <class T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  const Shape out = detail::broadcast_shape(a.shape(), b.shape(), "mul");
  auto sa = detail::strides_for(a.shape(), out), sb = detail::strides_for(b.shape(), out);
  Tensor<T> v(out);
  const T *pa = a.value().data(), *pb = b.value().data();
  detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { v[o] = pa[i] * pb[j]; });
  return make_result<T>(std::move(v), {a, b}, [out, sa, sb](Node<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const T* g = self.grad.data();
    const T *va = A.value.data(), *vb = B.value.data();
    T* ga = A.requires_grad ? A.grad_buffer().data() : nullptr;
    T* gb = B.requires_grad ? B.grad_buffer().data() : nullptr;
    detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (ga) ga[i] += g[o] * vb[j];
      if (gb) gb[j] += g[o] * va[i];
    });
  });
}

template <class T>
Var<T> div(const Var<T>& a, const Var<T>& b) {
  const Shape out = detail::broadcast_shape(a.shape(), b.shape(), "div");
  auto sa = detail::strides_for(a.shape(), out), sb = detail::strides_for(b.shape(), out);
  Tensor<T> v(out);
  const T *pa = a.value().data(), *pb = b.value().data();
  detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) { v[o] = pa[i] / pb[j]; });
  return make_result<T>(std::move(v), {a, b}, [out, sa, sb](Node<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const T* g = self.grad.data();
    const T *va = A.value.data(), *vb = B.value.data();
    T* ga = A.requires_grad ? A.grad_buffer().data() : nullptr;
    T* gb = B.requires_grad ? B.grad_buffer().data() : nullptr;
    detail::for_each_broadcast(out, sa, sb, [&](std::size_t o, std::size_t i, std::size_t j) {
      if (ga) ga[i] += g[o] / vb[j];
      if (gb) gb[j] -= g[o] * va[i] / (vb[j] * vb[j]);
    });
  });
}

/// Elementwise map with derivative df(x, y) expressed through input x and output y.
template <class T, class F, class DF>
Var<T> unary(const Var<T>& a, F f, DF df) {
  Tensor<T> v(a.shape());
  const T* pa = a.value().data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(pa[i]);
  return make_result<T>(std::move(v), {a}, [df](Node<T>& self) {
    auto& A = *self.parents[0];
    T* ga = A.grad_buffer().data();
    const T *g = self.grad.data(), *x = A.value.data(), *y = self.value.data();
    for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
  return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}
template <class T>
Var<T> add_scalar(const Var<T>& a, T s) {
  return unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}
template <class T>
Var<T> neg(const Var<T>& a) {
  return scale(a, T(-1));
}
template <class T>
Var<T> leaky_relu(const Var<T>& a, T slope = T(0.1)) {
  detail::record_branches(a.value(), [](T x) { return x > 0; });
  return unary(a, [slope](T x) { return x > 0 ? x : slope * x; },
               [slope](T x, T) { return x > 0 ? T(1) : slope; });
}
template <class T>
Var<T> relu(const Var<T>& a) {
  detail::record_branches(a.value(), [](T x) { return x > 0; });
  return unary(a, [](T x) { return x > 0 ? x : T(0); }, [](T x, T) { return x > 0 ? T(1) : T(0); });
}
template <class T>
Var<T> sigmoid(const Var<T>& a) {
  return unary(a, [](T x) { return detail::logistic(x); }, [](T, T y) { return y * (T(1) - y); });
}
template <class T>
Var<T> tanh(const Var<T>& a) {
  return unary(a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}
template <class T>
Var<T> exp(const Var<T>& a) {
  return unary(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}
template <class T>
Var<T> log(const Var<T>& a) {
  return unary(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}
template <class T>
Var<T> softplus(const Var<T>& a) {
  detail::record_branches(a.value(), [](T x) { return x > T(20); });
  return unary(
      a, [](T x) { return x > T(20) ? x : std::log1p(std::exp(x)); },
      [](T x, T) { return detail::logistic(x); });
}
template <class T>
Var<T> square(const Var<T>& a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}
template <class T>
Var<T> sqrt(const Var<T>& a) {
  return unary(a, [](T x) { return std::sqrt(x); }, [](T, T y) { return T(0.5) / y; });
}
/// Clamp with zero gradient outside [lo, hi].
template <class T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  detail::record_branches(a.value(), [lo, hi](T x) { return x < lo ? 1 : (x > hi ? 2 : 0); });
  return unary(a, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
               [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T(1) : T(0); });
}
template <class T>
Var<T> lower_bound(const Var<T>& a, T lo) {
  detail::record_branches(a.value(), [lo](T x) { return x < lo; });
  return unary(a, [lo](T x) { return x < lo ? lo : x; }, [lo](T x, T) { return x >= lo ? T(1) : T(0); });
}
/// Round half to even in the forward pass, identity gradient.
template <class T>
Var<T> round_ste(const Var<T>& a) {
  return unary(a, [](T x) { return std::nearbyint(x); }, [](T, T) { return T(1); });
}

// ---------------------------------------------------------------------------
// Reductions.

template <class T>
Var<T> sum(const Var<T>& a) {
  T s = 0;
  for (T x : a.value().span()) s += x;
  return make_result<T>(Tensor<T>({1, 1, 1, 1}, s), {a}, [](Node<T>& self) {
    auto& A = *self.parents[0];
    const T g = self.grad[0];
    for (auto& x : A.grad_buffer().span()) x += g;
  });
}

template <class T>
Var<T> mean(const Var<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

/// Mean squared error, fused.
template <class T>
Var<T> mse(const Var<T>& a, const Var<T>& b) {
  detail::require(a.shape() == b.shape(), "mse: " + a.shape().str() + " vs " + b.shape().str());
  const std::size_t n = a.value().size();
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    T d = a.value()[i] - b.value()[i];
    s += d * d;
  }
  return make_result<T>(Tensor<T>({1, 1, 1, 1}, s / static_cast<T>(n)), {a, b}, [n](Node<T>& self) {
    auto& A = *self.parents[0];
    auto& B = *self.parents[1];
    const T g = self.grad[0] * T(2) / static_cast<T>(n);
    T* ga = A.requires_grad ? A.grad_buffer().data() : nullptr;
    T* gb = B.requires_grad ? B.grad_buffer().data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      T d = g * (A.value[i] - B.value[i]);
      if (ga) ga[i] += d;
      if (gb) gb[i] -= d;
    }
  });
}

/// Averages channels into a single plane: [N,C,H,W] -> [N,1,H,W].
template <class T>
Var<T> mean_channels(const Var<T>& a) {
  const Shape s = a.shape();
  Tensor<T> v({s.n, 1, s.h, s.w});
  const T inv = T(1) / static_cast<T>(s.c);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* src = a.value().plane(n, c);
      T* dst = v.plane(n, 0);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += src[i] * inv;
    }
  return make_result<T>(std::move(v), {a}, [s, inv](Node<T>& self) {
    auto& A = *self.parents[0];
    auto& ga = A.grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* g = self.grad.plane(n, 0);
        T* dst = ga.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += g[i] * inv;
      }
  });
}

// ---------------------------------------------------------------------------
// Channel plumbing.

template <class T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  detail::require(!parts.empty(), "concat: no inputs");
  Shape s = parts.front().shape();
  int channels = 0;
  for (const auto& p : parts) {
    const Shape& q = p.shape();
    detail::require(q.n == s.n && q.h == s.h && q.w == s.w,
                    "concat: spatial mismatch " + s.str() + " vs " + q.str());
    channels += q.c;
  }
  Shape out{s.n, channels, s.h, s.w};
  Tensor<T> v(out);
  std::vector<int> offsets;
  int off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    for (int n = 0; n < s.n; ++n)
      std::copy(p.value().plane(n, 0), p.value().plane(n, 0) + p.shape().c * s.plane(), v.plane(n, off));
    off += p.shape().c;
  }
  return make_result<T>(std::move(v), parts, [offsets](Node<T>& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& P = *self.parents[k];
      if (!P.requires_grad) continue;
      auto& gp = P.grad_buffer();
      const Shape& q = P.value.shape();
      for (int n = 0; n < q.n; ++n) {
        const T* g = self.grad.plane(n, offsets[k]);
        T* dst = gp.plane(n, 0);
        for (std::size_t i = 0; i < q.c * q.plane(); ++i) dst[i] += g[i];
      }
    }
  });
}

/// Channels [begin, end).
template <class T>
Var<T> slice_channels(const Var<T>& a, int begin, int end) {
  const Shape s = a.shape();
  detail::require(0 <= begin && begin <= end && end <= s.c, "slice_channels: bad range for " + s.str());
  Shape out{s.n, end - begin, s.h, s.w};
  Tensor<T> v(out);
  for (int n = 0; n < s.n; ++n)
    std::copy(a.value().plane(n, begin), a.value().plane(n, begin) + out.c * s.plane(), v.plane(n, 0));
  return make_result<T>(std::move(v), {a}, [begin, out](Node<T>& self) {
    auto& A = *self.parents[0];
    auto& ga = A.grad_buffer();
    for (int n = 0; n < out.n; ++n) {
      const T* g = self.grad.plane(n, 0);
      T* dst = ga.plane(n, begin);
      for (std::size_t i = 0; i < out.c * out.plane(); ++i) dst[i] += g[i];
    }
  });
}

/// Replicates a single-channel field across `channels` channels.
template <class T>
Var<T> repeat_channels(const Var<T>& a, int channels) {
  detail::require(a.shape().c == 1, "repeat_channels: input must have one channel, got " + a.shape().str());
  const Shape s = a.shape();
  Tensor<T> v({s.n, channels, s.h, s.w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < channels; ++c) std::copy(a.value().plane(n, 0), a.value().plane(n, 0) + s.plane(), v.plane(n, c));
  return make_result<T>(std::move(v), {a}, [s, channels](Node<T>& self) {
    auto& ga = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < channels; ++c) {
        const T* g = self.grad.plane(n, c);
        T* dst = ga.plane(n, 0);
        for (std::size_t i = 0; i < s.plane(); ++i) dst[i] += g[i];
      }
  });
}

// ---------------------------------------------------------------------------
// Convolution ("same" padding k/2) via im2col + GEMM.

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>* bias, int stride = 1, int groups = 1) {
  const Shape xs = x.shape();
  const Shape ws = weight.shape();
  const int k = ws.h;
  detail::require(ws.h == ws.w && (k % 2) == 1, "conv2d: kernel must be square and odd, got " + ws.str());
  detail::require(groups >= 1 && xs.c % groups == 0 && ws.n % groups == 0 && ws.c * groups == xs.c,
                  "conv2d: channel mismatch input " + xs.str() + " weight " + ws.str());
  const int pad = k / 2;
  const int ho = (xs.h + 2 * pad - k) / stride + 1;
  const int wo = (xs.w + 2 * pad - k) / stride + 1;
  const int cin_g = xs.c / groups, cout_g = ws.n / groups;
  const int kk = cin_g * k * k;
  const int hw = ho * wo;
  Shape out{xs.n, ws.n, ho, wo};
  Tensor<T> v(out);

  if (auto* counter = detail::active_counter()) {
    counter->macs += static_cast<std::uint64_t>(k) * k * cin_g * ws.n * ho * wo * xs.n;
    counter->conv_calls += 1;
  }

  using Mat = detail::RowMat<T>;
  const bool direct = (k == 1 && stride == 1);
  std::vector<T> cols(direct ? 0 : static_cast<std::size_t>(kk) * hw);
  for (int n = 0; n < xs.n; ++n)
    for (int g = 0; g < groups; ++g) {
      const T* in = x.value().plane(n, g * cin_g);
      const T* colp = in;
      if (!direct) {
        detail::im2col(in, cin_g, xs.h, xs.w, k, stride, pad, ho, wo, cols.data());
        colp = cols.data();
      }
      Eigen::Map<const Mat> C(colp, kk, hw);
      Eigen::Map<const Mat> W(weight.value().data() + static_cast<std::size_t>(g) * cout_g * kk, cout_g, kk);
      Eigen::Map<Mat> O(v.plane(n, g * cout_g), cout_g, hw);
      O.noalias() = W * C;
    }
  if (bias) {
    detail::require(bias->shape().numel() == static_cast<std::size_t>(ws.n), "conv2d: bias size mismatch");
    for (int n = 0; n < xs.n; ++n)
      for (int c = 0; c < ws.n; ++c) {
        T b = bias->value()[c];
        T* p = v.plane(n, c);
        for (int i = 0; i < hw; ++i) p[i] += b;
      }
  }

  std::vector<Var<T>> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  return make_result<T>(std::move(v), inputs, [=](Node<T>& self) {
    auto& X = *self.parents[0];
    auto& Wt = *self.parents[1];
    std::vector<T> colbuf(direct ? 0 : static_cast<std::size_t>(kk) * hw);
    std::vector<T> dcol(static_cast<std::size_t>(kk) * hw);
    for (int n = 0; n < xs.n; ++n)
      for (int g = 0; g < groups; ++g) {
        Eigen::Map<const Mat> G(self.grad.plane(n, g * cout_g), cout_g, hw);
        if (Wt.requires_grad) {
          const T* in = X.value.plane(n, g * cin_g);
          const T* colp = in;
          if (!direct) {
            detail::im2col(in, cin_g, xs.h, xs.w, k, stride, pad, ho, wo, colbuf.data());
            colp = colbuf.data();
          }
          Eigen::Map<const Mat> C(colp, kk, hw);
          Eigen::Map<Mat> GW(Wt.grad_buffer().data() + static_cast<std::size_t>(g) * cout_g * kk, cout_g, kk);
          GW.noalias() += G * C.transpose();
        }
        if (X.requires_grad) {
          Eigen::Map<const Mat> W(Wt.value.data() + static_cast<std::size_t>(g) * cout_g * kk, cout_g, kk);
          T* gx = X.grad_buffer().plane(n, g * cin_g);
          if (direct) {
            Eigen::Map<Mat> GX(gx, kk, hw);
            GX.noalias() += W.transpose() * G;
          } else {
            Eigen::Map<Mat> DC(dcol.data(), kk, hw);
            DC.noalias() = W.transpose() * G;
            detail::col2im(dcol.data(), cin_g, xs.h, xs.w, k, stride, pad, ho, wo, gx);
          }
        }
      }
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      auto& gb = self.parents[2]->grad_buffer();
      for (int n = 0; n < xs.n; ++n)
        for (int c = 0; c < out.c; ++c) {
          const T* g = self.grad.plane(n, c);
          T s = 0;
          for (int i = 0; i < hw; ++i) s += g[i];
          gb[c] += s;
        }
    }
  });
}

// ---------------------------------------------------------------------------
// Resampling.

/// Sub-pixel rearrangement [N, C*r*r, H, W] -> [N, C, H*r, W*r].
template <class T>
Var<T> pixel_shuffle(const Var<T>& a, int r) {
  const Shape s = a.shape();
  detail::require(s.c % (r * r) == 0, "pixel_shuffle: channels not divisible by r^2 in " + s.str());
  const Shape out{s.n, s.c / (r * r), s.h * r, s.w * r};
  Tensor<T> v(out);
  auto map = [&](auto&& f) {
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < out.c; ++c)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j) {
            const int cin = c * r * r + i * r + j;
            for (int y = 0; y < s.h; ++y)
              for (int x = 0; x < s.w; ++x) f(out.c, n, c, cin, y * r + i, x * r + j, y, x);
          }
  };
  const T* src = a.value().data();
  map([&](int, int n, int c, int cin, int oy, int ox, int y, int x) {
    v.at(n, c, oy, ox) = src[a.value().index(n, cin, y, x)];
  });
  return make_result<T>(std::move(v), {a}, [s, r, out](Node<T>& self) {
    auto& ga = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < out.c; ++c)
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < r; ++j) {
            const int cin = c * r * r + i * r + j;
            for (int y = 0; y < s.h; ++y)
              for (int x = 0; x < s.w; ++x) ga.at(n, cin, y, x) += self.grad.at(n, c, y * r + i, x * r + j);
          }
  });
}

/// Non-overlapping k×k average pooling; extents must be divisible by k.
template <class T>
Var<T> avg_pool(const Var<T>& a, int k) {
  const Shape s = a.shape();
  detail::require(s.h % k == 0 && s.w % k == 0, "avg_pool: " + s.str() + " not divisible by " + std::to_string(k));
  const Shape out{s.n, s.c, s.h / k, s.w / k};
  Tensor<T> v(out);
  const T inv = T(1) / static_cast<T>(k * k);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < s.h; ++y)
        for (int x = 0; x < s.w; ++x) v.at(n, c, y / k, x / k) += a.value().at(n, c, y, x) * inv;
  return make_result<T>(std::move(v), {a}, [s, k, inv](Node<T>& self) {
    auto& ga = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < s.h; ++y)
          for (int x = 0; x < s.w; ++x) ga.at(n, c, y, x) += self.grad.at(n, c, y / k, x / k) * inv;
  });
}

/// Bilinear upsampling by an integer factor (half-pixel centers, edge clamp).
template <class T>
Var<T> upsample_bilinear(const Var<T>& a, int factor) {
  const Shape s = a.shape();
  const Shape out{s.n, s.c, s.h * factor, s.w * factor};
  struct Tap {
    int i0, i1;
    T w1;
  };
  auto taps = [factor](int src, int dst) {
    std::vector<Tap> t(dst);
    for (int o = 0; o < dst; ++o) {
      T p = (static_cast<T>(o) + T(0.5)) / static_cast<T>(factor) - T(0.5);
      p = std::clamp(p, T(0), static_cast<T>(src - 1));
      int i0 = static_cast<int>(std::floor(p));
      int i1 = std::min(i0 + 1, src - 1);
      t[o] = {i0, i1, p - static_cast<T>(i0)};
    }
    return t;
  };
  auto ty = taps(s.h, out.h), tx = taps(s.w, out.w);
  Tensor<T> v(out);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x) {
          const auto& a_ = a.value();
          const Tap& py = ty[y];
          const Tap& px = tx[x];
          T top = a_.at(n, c, py.i0, px.i0) * (T(1) - px.w1) + a_.at(n, c, py.i0, px.i1) * px.w1;
          T bot = a_.at(n, c, py.i1, px.i0) * (T(1) - px.w1) + a_.at(n, c, py.i1, px.i1) * px.w1;
          v.at(n, c, y, x) = top * (T(1) - py.w1) + bot * py.w1;
        }
  return make_result<T>(std::move(v), {a}, [s, out, ty, tx](Node<T>& self) {
    auto& ga = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < out.h; ++y)
          for (int x = 0; x < out.w; ++x) {
            const T g = self.grad.at(n, c, y, x);
            const Tap& py = ty[y];
            const Tap& px = tx[x];
            ga.at(n, c, py.i0, px.i0) += g * (T(1) - py.w1) * (T(1) - px.w1);
            ga.at(n, c, py.i0, px.i1) += g * (T(1) - py.w1) * px.w1;
            ga.at(n, c, py.i1, px.i0) += g * py.w1 * (T(1) - px.w1);
            ga.at(n, c, py.i1, px.i1) += g * py.w1 * px.w1;
          }
  });
}

/// Backward bilinear warp: out(p) = src(p + flow(p)), sample coordinates
/// clamped to the image border. flow is [N,2,H,W] in pixels (x, y).
template <class T>
Var<T> warp(const Var<T>& src, const Var<T>& flow) {
  const Shape s = src.shape();
  const Shape fs = flow.shape();
  detail::require(fs.n == s.n && fs.c == 2 && fs.h == s.h && fs.w == s.w,
                  "warp: flow " + fs.str() + " does not match source " + s.str());
  struct Sample {
    int x0, x1, y0, y1;
    T ax, ay;
    bool inx, iny;  // false when the coordinate was clamped
  };
  std::vector<Sample> samples(static_cast<std::size_t>(s.n) * s.plane());
  const T maxx = static_cast<T>(s.w - 1), maxy = static_cast<T>(s.h - 1);
  for (int n = 0; n < s.n; ++n)
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        T sx = static_cast<T>(x) + flow.value().at(n, 0, y, x);
        T sy = static_cast<T>(y) + flow.value().at(n, 1, y, x);
        Sample sm{};
        sm.inx = sx >= 0 && sx <= maxx;
        sm.iny = sy >= 0 && sy <= maxy;
        if (!(sx >= 0)) sx = 0;  // also maps NaN to the border
        if (!(sy >= 0)) sy = 0;
        sx = std::min(sx, maxx);
        sy = std::min(sy, maxy);
        sm.x0 = static_cast<int>(std::floor(sx));
        sm.y0 = static_cast<int>(std::floor(sy));
        sm.x1 = std::min(sm.x0 + 1, s.w - 1);
        sm.y1 = std::min(sm.y0 + 1, s.h - 1);
        sm.ax = sx - static_cast<T>(sm.x0);
        sm.ay = sy - static_cast<T>(sm.y0);
        samples[static_cast<std::size_t>(n) * s.plane() + static_cast<std::size_t>(y) * s.w + x] = sm;
        if (BranchProbe* bp = detail::active_probe()) {
          bp->mix(static_cast<std::uint64_t>(sm.x0) * 131 + static_cast<std::uint64_t>(sm.y0));
          bp->mix(static_cast<std::uint64_t>(sm.inx) * 2 + sm.iny);
        }
      }
  Tensor<T> v(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c) {
      const T* p = src.value().plane(n, c);
      T* o = v.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const Sample& sm = samples[n * s.plane() + i];
        const T v00 = p[sm.y0 * s.w + sm.x0], v01 = p[sm.y0 * s.w + sm.x1];
        const T v10 = p[sm.y1 * s.w + sm.x0], v11 = p[sm.y1 * s.w + sm.x1];
        o[i] = (v00 * (T(1) - sm.ax) + v01 * sm.ax) * (T(1) - sm.ay) + (v10 * (T(1) - sm.ax) + v11 * sm.ax) * sm.ay;
      }
    }
  return make_result<T>(std::move(v), {src, flow}, [s, samples = std::move(samples)](Node<T>& self) {
    auto& S = *self.parents[0];
    auto& F = *self.parents[1];
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        const T* g = self.grad.plane(n, c);
        const T* p = S.value.plane(n, c);
        T* gs = S.requires_grad ? S.grad_buffer().plane(n, c) : nullptr;
        T* gfx = F.requires_grad ? F.grad_buffer().plane(n, 0) : nullptr;
        T* gfy = F.requires_grad ? F.grad_buffer().plane(n, 1) : nullptr;
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const Sample& sm = samples[n * s.plane() + i];
          const T gi = g[i];
          if (gs) {
            gs[sm.y0 * s.w + sm.x0] += gi * (T(1) - sm.ax) * (T(1) - sm.ay);
            gs[sm.y0 * s.w + sm.x1] += gi * sm.ax * (T(1) - sm.ay);
            gs[sm.y1 * s.w + sm.x0] += gi * (T(1) - sm.ax) * sm.ay;
            gs[sm.y1 * s.w + sm.x1] += gi * sm.ax * sm.ay;
          }
          if (gfx) {
            const T v00 = p[sm.y0 * s.w + sm.x0], v01 = p[sm.y0 * s.w + sm.x1];
            const T v10 = p[sm.y1 * s.w + sm.x0], v11 = p[sm.y1 * s.w + sm.x1];
            if (sm.inx) gfx[i] += gi * ((v01 - v00) * (T(1) - sm.ay) + (v11 - v10) * sm.ay);
            if (sm.iny) gfy[i] += gi * ((v10 - v00) * (T(1) - sm.ax) + (v11 - v01) * sm.ax);
          }
        }
      }
  });
}

/// Replicate-pads the bottom/right edges up to (h, w).
template <class T>
Var<T> pad_replicate(const Var<T>& a, int h, int w) {
  const Shape s = a.shape();
  detail::require(h >= s.h && w >= s.w, "pad_replicate: target smaller than input " + s.str());
  if (h == s.h && w == s.w) return a;
  Tensor<T> v({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) v.at(n, c, y, x) = a.value().at(n, c, std::min(y, s.h - 1), std::min(x, s.w - 1));
  return make_result<T>(std::move(v), {a}, [s, h, w](Node<T>& self) {
    auto& ga = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            ga.at(n, c, std::min(y, s.h - 1), std::min(x, s.w - 1)) += self.grad.at(n, c, y, x);
  });
}

/// Crop to (h, w) starting at (y0, x0); top-left by default.
template <class T>
Var<T> crop(const Var<T>& a, int h, int w, int y0 = 0, int x0 = 0) {
  const Shape s = a.shape();
  detail::require(y0 >= 0 && x0 >= 0 && y0 + h <= s.h && x0 + w <= s.w && h > 0 && w > 0,
                  "crop: window outside input " + s.str());
  if (h == s.h && w == s.w) return a;
  Tensor<T> v({s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) v.at(n, c, y, x) = a.value().at(n, c, y + y0, x + x0);
  return make_result<T>(std::move(v), {a}, [s, h, w, y0, x0](Node<T>& self) {
    auto& ga = self.parents[0]->grad_buffer();
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x) ga.at(n, c, y + y0, x + x0) += self.grad.at(n, c, y, x);
  });
}

// ---------------------------------------------------------------------------
// Discretized likelihoods for entropy modelling. Both return per-element bin
// probabilities lower-bounded at `floor` (gradient cut where the bound binds).

/// P(bin of width 1 centred on y) under N(mu, sigma^2).
template <class T>
Var<T> gaussian_likelihood(const Var<T>& y, const Var<T>& mu, const Var<T>& sigma, T floor = T(1e-9)) {
  detail::require(y.shape() == mu.shape() && y.shape() == sigma.shape(),
                  "gaussian_likelihood: shape mismatch " + y.shape().str());
  const std::size_t n = y.value().size();
  Tensor<T> v(y.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const T s = sigma.value()[i];
    const T u = std::abs(y.value()[i] - mu.value()[i]);
    const T p = detail::normal_cdf((T(0.5) - u) / s) - detail::normal_cdf((T(-0.5) - u) / s);
    v[i] = std::max(p, floor);
    if (BranchProbe* bp = detail::active_probe()) bp->mix(i * 8 + (p <= floor));
  }
  return make_result<T>(std::move(v), {y, mu, sigma}, [n, floor](Node<T>& self) {
    auto& Y = *self.parents[0];
    auto& M = *self.parents[1];
    auto& S = *self.parents[2];
    T* gy = Y.requires_grad ? Y.grad_buffer().data() : nullptr;
    T* gm = M.requires_grad ? M.grad_buffer().data() : nullptr;
    T* gs = S.requires_grad ? S.grad_buffer().data() : nullptr;
    for (std::size_t i = 0; i < n; ++i) {
      if (self.value[i] <= floor) continue;
      const T s = S.value[i];
      const T u = Y.value[i] - M.value[i];
      const T a = (u + T(0.5)) / s, b = (u - T(0.5)) / s;
      const T pa = detail::normal_pdf(a), pb = detail::normal_pdf(b);
      const T du = (pa - pb) / s;
      const T ds = (b * pb - a * pa) / s;
      const T g = self.grad[i];
      if (gy) gy[i] += g * du;
      if (gm) gm[i] -= g * du;
      if (gs) gs[i] += g * ds;
    }
  });
}

/// Per-channel mixture of K logistics. logits/means/log_scales are [1,C,1,K].
template <class T>
Var<T> logistic_mixture_likelihood(const Var<T>& z, const Var<T>& logits, const Var<T>& means,
                                   const Var<T>& log_scales, T floor = T(1e-9)) {
  const Shape s = z.shape();
  const Shape ps = logits.shape();
  detail::require(ps.n == 1 && ps.c == s.c && ps.h == 1 && ps.w >= 1 && means.shape() == ps && log_scales.shape() == ps,
                  "logistic_mixture_likelihood: parameter shape " + ps.str() + " for input " + s.str());
  const int K = ps.w;
  std::vector<T> weights(static_cast<std::size_t>(s.c) * K);
  for (int c = 0; c < s.c; ++c) {
    T mx = logits.value()[c * K];
    for (int k = 1; k < K; ++k) mx = std::max(mx, logits.value()[c * K + k]);
    T tot = 0;
    for (int k = 0; k < K; ++k) tot += weights[c * K + k] = std::exp(logits.value()[c * K + k] - mx);
    for (int k = 0; k < K; ++k) weights[c * K + k] /= tot;
  }
  auto bin = [](T x, T m, T sc) {
    const T d = x - m;
    // mass of [d-0.5, d+0.5]; evaluated on the side with the smaller tail for accuracy
    if (d > 0) return detail::logistic((T(0.5) - d) / sc) - detail::logistic((T(-0.5) - d) / sc);
    return detail::logistic((d + T(0.5)) / sc) - detail::logistic((d - T(0.5)) / sc);
  };
  Tensor<T> v(s);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (std::size_t i = 0; i < s.plane(); ++i) {
        const T x = z.value().plane(n, c)[i];
        T p = 0;
        for (int k = 0; k < K; ++k)
          p += weights[c * K + k] * bin(x, means.value()[c * K + k], std::exp(log_scales.value()[c * K + k]));
        v.plane(n, c)[i] = std::max(p, floor);
        if (BranchProbe* bp = detail::active_probe()) bp->mix(i * 8 + (p <= floor));
      }
  return make_result<T>(std::move(v), {z, logits, means, log_scales}, [s, K, weights, floor, bin](Node<T>& self) {
    auto& Z = *self.parents[0];
    auto& L = *self.parents[1];
    auto& M = *self.parents[2];
    auto& S = *self.parents[3];
    auto dlog = [](T x) {
      T l = detail::logistic(x);
      return l * (T(1) - l);
    };
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c)
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const T pv = self.value.plane(n, c)[i];
          if (pv <= floor) continue;
          const T g = self.grad.plane(n, c)[i];
          const T x = Z.value.plane(n, c)[i];
          T dz = 0;
          for (int k = 0; k < K; ++k) {
            const int j = c * K + k;
            const T sc = std::exp(S.value[j]);
            const T a = (x + T(0.5) - M.value[j]) / sc, b = (x - T(0.5) - M.value[j]) / sc;
            const T da = dlog(a), db = dlog(b);
            const T pi = weights[j];
            dz += pi * (da - db) / sc;
            if (M.requires_grad) M.grad_buffer()[j] -= g * pi * (da - db) / sc;
            if (S.requires_grad) S.grad_buffer()[j] += g * pi * (-a * da + b * db);
            if (L.requires_grad) L.grad_buffer()[j] += g * pi * (bin(x, M.value[j], sc) - pv);
          }
          if (Z.requires_grad) Z.grad_buffer().plane(n, c)[i] += g * dz;
        }
  });
}

}  // namespace hytip::nn
