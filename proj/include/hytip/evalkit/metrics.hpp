#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <iostream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/nn/ops.hpp"

namespace hytip::evalkit {

using nn::Tensor;
using nn::Var;

inline constexpr double kPsnrCap = 100.0;

inline void require_same(const nn::Shape& a, const nn::Shape& b, const char* what) {
  if (a != b) throw std::invalid_argument(std::string(what) + ": shapes " + a.str() + " and " + b.str() + " differ");
}

/// 10 log10(1 / MSE) over all pixels and channels, capped at 100 dB.
template <class T>
double psnr_rgb(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "psnr_rgb");
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

/// Number of scales whose coarsest level still fits the 11-tap window.
inline int ms_ssim_scales(int h, int w) {
  const int m = std::min(h, w);
  if (m < kSsimWindow) throw std::invalid_argument("ms_ssim: frame smaller than the 11x11 window");
  int s = 1;
  while (s < 5 && (m >> s) >= kSsimWindow) ++s;
  return s;
}

namespace detail {

template <class T>
Tensor<T> gaussian_kernel(int channels) {
  std::array<double, kSsimWindow> g{};
  double sum = 0;
  for (int i = 0; i < kSsimWindow; ++i) {
    const double x = i - kSsimWindow / 2;
    g[i] = std::exp(-x * x / (2 * kSsimSigma * kSsimSigma));
    sum += g[i];
  }
  Tensor<T> k({channels, 1, kSsimWindow, kSsimWindow});
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < kSsimWindow; ++y)
      for (int x = 0; x < kSsimWindow; ++x) k.at(c, 0, y, x) = static_cast<T>(g[y] * g[x] / (sum * sum));
  return k;
}

/// Valid-region Gaussian filtering, channel by channel.
template <class T>
Var<T> blur(const Var<T>& x, const Var<T>& kernel) {
  const auto s = x.shape();
  const Var<T> full = nn::conv2d(x, kernel, static_cast<const Var<T>*>(nullptr), 1, s.c);
  const int r = kSsimWindow / 2;
  return nn::crop(full, s.h - 2 * r, s.w - 2 * r, r, r);
}

/// Per-channel spatial means, returned as a list of scalars.
template <class T>
std::vector<Var<T>> channel_means(const Var<T>& x) {
  std::vector<Var<T>> out;
  for (int c = 0; c < x.shape().c; ++c) out.push_back(nn::mean(nn::slice_channels(x, c, c + 1)));
  return out;
}

inline std::atomic<bool>& warned() {
  static std::atomic<bool> w{false};
  return w;
}

}  // namespace detail

/// Differentiable MS-SSIM for [0,1] frames, averaged over channels. Uses fewer
/// than five scales on small frames and renormalizes the weights.
template <class T>
Var<T> ms_ssim_var(const Var<T>& a, const Var<T>& b) {
  require_same(a.shape(), b.shape(), "ms_ssim");
  const int channels = a.shape().c;
  const int scales = ms_ssim_scales(a.shape().h, a.shape().w);
  double wsum = 0;
  for (int s = 0; s < scales; ++s) wsum += kMsSsimWeights[s];
  const Var<T> kernel = Var<T>::constant(detail::gaussian_kernel<T>(channels));
  const T c1 = static_cast<T>(0.01 * 0.01), c2 = static_cast<T>(0.03 * 0.03);
  const T eps = static_cast<T>(1e-8);
  std::vector<Var<T>> log_score(channels);
  Var<T> x = a, y = b;
  for (int s = 0; s < scales; ++s) {
    const Var<T> mx = detail::blur(x, kernel), my = detail::blur(y, kernel);
    const Var<T> sxx = nn::sub(detail::blur(nn::mul(x, x), kernel), nn::mul(mx, mx));
    const Var<T> syy = nn::sub(detail::blur(nn::mul(y, y), kernel), nn::mul(my, my));
    const Var<T> sxy = nn::sub(detail::blur(nn::mul(x, y), kernel), nn::mul(mx, my));
    const Var<T> cs_map = nn::div(nn::add_scalar(nn::scale(sxy, T(2)), c2), nn::add_scalar(nn::add(sxx, syy), c2));
    Var<T> term = cs_map;
    if (s == scales - 1) {
      const Var<T> l_map = nn::div(nn::add_scalar(nn::scale(nn::mul(mx, my), T(2)), c1),
                                   nn::add_scalar(nn::add(nn::mul(mx, mx), nn::mul(my, my)), c1));
      term = nn::mul(l_map, cs_map);
    }
    const auto means = detail::channel_means(term);
    const T weight = static_cast<T>(kMsSsimWeights[s] / wsum);
    for (int c = 0; c < channels; ++c) {
      const Var<T> v = nn::scale(nn::log(nn::lower_bound(nn::relu(means[c]), eps)), weight);
      log_score[c] = log_score[c].defined() ? nn::add(log_score[c], v) : v;
    }
    if (s + 1 < scales) {
      x = nn::avg_pool(x, 2);
      y = nn::avg_pool(y, 2);
    }
  }
  Var<T> total;
  for (const auto& l : log_score) {
    const Var<T> e = nn::exp(l);
    total = total.defined() ? nn::add(total, e) : e;
  }
  return nn::scale(total, static_cast<T>(1.0 / channels));
}

/// MS-SSIM score in double precision. Frames under 160 px on a side use fewer
/// scales; a one-time warning is printed when that happens.
template <class T>
double ms_ssim(const Tensor<T>& a, const Tensor<T>& b) {
  require_same(a.shape(), b.shape(), "ms_ssim");
  if (ms_ssim_scales(a.shape().h, a.shape().w) < 5 && !detail::warned().exchange(true))
    std::cerr << "warning: ms_ssim on " << a.shape().h << "x" << a.shape().w << " uses fewer than 5 scales\n";
  nn::NoGradGuard ng;
  Tensor<double> da(a.shape()), db(b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    da[i] = a[i];
    db[i] = b[i];
  }
  return ms_ssim_var(Var<double>::constant(da), Var<double>::constant(db)).value()[0];
}

inline double bpp(double total_bits, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("bpp: non-positive frame size");
  return total_bits / (static_cast<double>(width) * height);
}

/// One coded frame's measurements.
struct FrameRecord {
  std::string dataset;
  std::string sequence;
  int frame = 0;
  int lambda_idx = 0;
  double bpp = 0;
  double psnr_rgb = 0;
  double ms_ssim = 0;
};

struct RDPoint {
  std::string dataset;
  std::string sequence;  // empty when aggregated over several sequences
  int lambda_idx = 0;
  double bpp = 0;
  double psnr_rgb = 0;
  double ms_ssim = 0;
  std::size_t frames = 0;
};

/// Unweighted mean over frames (not over sequences).
inline RDPoint dataset_rd_point(const std::vector<FrameRecord>& frames) {
  if (frames.empty()) throw std::invalid_argument("dataset_rd_point: no frames");
  RDPoint p;
  p.dataset = frames.front().dataset;
  p.sequence = frames.front().sequence;
  p.lambda_idx = frames.front().lambda_idx;
  for (const auto& f : frames) {
    if (f.sequence != p.sequence) p.sequence.clear();
    p.bpp += f.bpp;
    p.psnr_rgb += f.psnr_rgb;
    p.ms_ssim += f.ms_ssim;
  }
  const double n = static_cast<double>(frames.size());
  p.bpp /= n;
  p.psnr_rgb /= n;
  p.ms_ssim /= n;
  p.frames = frames.size();
  return p;
}

/// RD points per (dataset, lambda index), one per rate point.
inline std::vector<RDPoint> dataset_curve(const std::vector<FrameRecord>& frames) {
  std::map<std::pair<std::string, int>, std::vector<FrameRecord>> groups;
  for (const auto& f : frames) groups[{f.dataset, f.lambda_idx}].push_back(f);
  std::vector<RDPoint> out;
  for (const auto& [key, g] : groups) out.push_back(dataset_rd_point(g));
  return out;
}

}  // namespace hytip::evalkit
