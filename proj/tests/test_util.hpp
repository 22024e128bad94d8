#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "hytip/nn/autograd.hpp"

namespace hytip::testutil {

inline nn::Tensor<double> random_tensor(nn::Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  nn::Tensor<double> t(s);
  std::uniform_real_distribution<double> d(lo, hi);
  for (auto& v : t.span()) v = d(rng);
  return t;
}

/// Central-difference derivative of f with respect to element i of x.
inline double central_difference(const std::function<double()>& f, double& x, double h = 1e-4) {
  const double keep = x;
  x = keep + h;
  const double up = f();
  x = keep - h;
  const double down = f();
  x = keep;
  return (up - down) / (2 * h);
}

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace hytip::testutil
