#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hytip/evalkit/metrics.hpp"

namespace hytip::evalkit {

enum class QualityAxis { kPsnr, kMsSsim };

inline QualityAxis parse_quality_axis(const std::string& s) {
  if (s == "psnr") return QualityAxis::kPsnr;
  if (s == "ms_ssim" || s == "ms-ssim") return QualityAxis::kMsSsim;
  throw std::invalid_argument("unknown quality axis '" + s + "' (psnr, ms_ssim)");
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch-Carlson slopes).
class Pchip {
 public:
  Pchip(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw std::invalid_argument("pchip: need at least two points");
    for (std::size_t i = 1; i < n; ++i)
      if (!(x_[i] > x_[i - 1])) throw std::invalid_argument("pchip: abscissae must be strictly increasing");
    std::vector<double> h(n - 1), delta(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      h[i] = x_[i + 1] - x_[i];
      delta[i] = (y_[i + 1] - y_[i]) / h[i];
    }
    d_.assign(n, 0.0);
    if (n == 2) {
      d_[0] = d_[1] = delta[0];
      return;
    }
    for (std::size_t k = 1; k + 1 < n; ++k) {
      if (delta[k - 1] * delta[k] <= 0) continue;
      const double w1 = 2 * h[k] + h[k - 1], w2 = h[k] + 2 * h[k - 1];
      d_[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
    }
    d_[0] = end_slope(h[0], h[1], delta[0], delta[1]);
    d_[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
  }

  double operator()(double x) const {
    const std::size_t i = segment(x);
    const double h = x_[i + 1] - x_[i], t = (x - x_[i]) / h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * y_[i] + (t3 - 2 * t2 + t) * h * d_[i] + (-2 * t3 + 3 * t2) * y_[i + 1] +
           (t3 - t2) * h * d_[i + 1];
  }

  /// Exact integral over [a, b] within the data range.
  double integral(double a, double b) const {
    if (a > b) return -integral(b, a);
    double total = 0;
    for (std::size_t i = 0; i + 1 < x_.size(); ++i) {
      const double lo = std::max(a, x_[i]), hi = std::min(b, x_[i + 1]);
      if (hi > lo) total += segment_integral(i, lo, hi);
    }
    return total;
  }

  double front() const { return x_.front(); }
  double back() const { return x_.back(); }

 private:
  static double end_slope(double h0, double h1, double d0, double d1) {
    double d = ((2 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if (d * d0 <= 0) return 0.0;
    if (d0 * d1 <= 0 && std::abs(d) > std::abs(3 * d0)) d = 3 * d0;
    return d;
  }

  std::size_t segment(double x) const {
    if (x <= x_.front()) return 0;
    if (x >= x_.back()) return x_.size() - 2;
    return static_cast<std::size_t>(std::upper_bound(x_.begin(), x_.end(), x) - x_.begin()) - 1;
  }

  // Antiderivative of the Hermite basis in t, scaled by h.
  double segment_integral(std::size_t i, double lo, double hi) const {
    const double h = x_[i + 1] - x_[i];
    auto prim = [&](double x) {
      const double t = (x - x_[i]) / h, t2 = t * t, t3 = t2 * t, t4 = t3 * t;
      return h * ((t4 / 2 - t3 + t) * y_[i] + (t4 / 4 - 2 * t3 / 3 + t2 / 2) * h * d_[i] + (-t4 / 2 + t3) * y_[i + 1] +
                  (t4 / 4 - t3 / 3) * h * d_[i + 1]);
    };
    return prim(hi) - prim(lo);
  }

  std::vector<double> x_, y_, d_;
};

inline double quality_of(const RDPoint& p, QualityAxis axis) {
  return axis == QualityAxis::kPsnr ? p.psnr_rgb : p.ms_ssim;
}

/// Bjontegaard delta rate in percent: log10 rate interpolated against quality
/// and averaged over the shared quality interval. Negative means the test
/// curve needs fewer bits.
inline double bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test,
                      QualityAxis axis = QualityAxis::kPsnr) {
  if (anchor.size() < 4 || test.size() < 4) throw std::invalid_argument("bd_rate: need at least 4 points per curve");
  auto curve = [axis](const std::vector<RDPoint>& pts, const char* name) {
    std::vector<std::pair<double, double>> qr;
    for (const auto& p : pts) {
      if (!(p.bpp > 0)) throw std::invalid_argument(std::string("bd_rate: non-positive rate in ") + name + " curve");
      qr.emplace_back(quality_of(p, axis), std::log10(p.bpp));
    }
    std::sort(qr.begin(), qr.end());
    std::vector<double> q, r;
    for (const auto& [a, b] : qr) {
      q.push_back(a);
      r.push_back(b);
    }
    return Pchip(q, r);
  };
  const Pchip a = curve(anchor, "anchor"), t = curve(test, "test");
  const double lo = std::max(a.front(), t.front()), hi = std::min(a.back(), t.back());
  if (!(hi > lo)) throw std::invalid_argument("bd_rate: quality ranges do not overlap");
  const double diff = (t.integral(lo, hi) - a.integral(lo, hi)) / (hi - lo);
  return (std::pow(10.0, diff) - 1.0) * 100.0;
}

}  // namespace hytip::evalkit
