#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/entropy/range_coder.hpp"
#include "hytip/nn/layers.hpp"

namespace hytip::entropy {

using nn::Param;
using nn::Tensor;
using nn::Var;

// ---------------------------------------------------------------------------
// Quantization.

enum class QuantMode {
  kNoise,  // additive U[-0.5, 0.5): differentiable training surrogate
  kRound,  // nearest integer, ties to even
  kMixed,  // rate from the noisy latent, synthesis from the rounded one
};

/// Quantizes `x - center` and adds `center` back. In noise mode the offset is
/// drawn from rng; otherwise the gradient passes straight through the rounding.
template <class T>
Var<T> quantize(const Var<T>& x, QuantMode mode, std::mt19937_64* rng, const Var<T>* center = nullptr) {
  if (mode == QuantMode::kNoise) {
    if (!rng) throw std::invalid_argument("quantize: noise mode needs an rng");
    Tensor<T> u(x.shape());
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    for (auto& v : u.span()) v = static_cast<T>(d(*rng));
    return nn::add(x, Var<T>::constant(std::move(u)));
  }
  if (!center) return nn::round_ste(x);
  return nn::add(nn::round_ste(nn::sub(x, *center)), *center);
}

// ---------------------------------------------------------------------------
// Discrete tables with an escape symbol for values outside the table.

/// Cumulative 16-bit table over values [offset, offset + width) plus one
/// trailing escape symbol that carries the tail mass.
struct QuantizedTable {
  int offset = 0;
  std::vector<std::uint32_t> cdf;  // width + 2 entries

  int width() const { return static_cast<int>(cdf.size()) - 2; }
  int escape() const { return width(); }

  /// Ideal code length of value v under this table (escape suffix included).
  double bits(int v) const;
};

/// Converts a pmf over `width` in-range values plus tail mass to a 16-bit CDF
/// where every symbol keeps a nonzero frequency.
inline std::vector<std::uint32_t> pmf_to_cdf(const std::vector<double>& pmf, double tail) {
  const std::size_t n = pmf.size() + 1;
  if (n > kTotal / 2) throw std::invalid_argument("pmf_to_cdf: table too wide");
  std::vector<std::int64_t> freq(n);
  std::vector<double> frac(n);
  std::int64_t total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double scaled = std::max(i + 1 < n ? pmf[i] : tail, 0.0) * kTotal;
    freq[i] = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::floor(scaled)));
    frac[i] = scaled - std::floor(scaled);
    total += freq[i];
  }
  // Spread the rounding correction one count at a time: surplus goes to the
  // largest remainders, deficits come out of the largest frequencies.
  std::int64_t diff = static_cast<std::int64_t>(kTotal) - total;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  if (diff > 0) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t k = 0; diff > 0; k = (k + 1) % n, --diff) ++freq[order[k]];
  } else if (diff < 0) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return freq[a] > freq[b]; });
    while (diff < 0) {
      bool moved = false;
      for (std::size_t k = 0; k < n && diff < 0 && freq[order[k]] > 1; ++k, ++diff, moved = true) --freq[order[k]];
      if (!moved) throw std::logic_error("pmf_to_cdf: cannot normalize");
    }
  }
  std::vector<std::uint32_t> cdf(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) cdf[i + 1] = cdf[i] + static_cast<std::uint32_t>(freq[i]);
  return cdf;
}

namespace detail {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }
inline double logistic(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

/// Exp-Golomb (order 0) bit count for m >= 0.
inline int exp_golomb_bits(std::uint32_t m) {
  int k = 0;
  while ((m + 1) >> (k + 1)) ++k;
  return 2 * k + 1;
}

}  // namespace detail

inline double QuantizedTable::bits(int v) const {
  const int s = v - offset;
  auto sym_bits = [&](int i) { return -std::log2(static_cast<double>(cdf[i + 1] - cdf[i]) / kTotal); };
  if (s >= 0 && s < width()) return sym_bits(s);
  const std::uint32_t mag = s < 0 ? static_cast<std::uint32_t>(-s - 1) : static_cast<std::uint32_t>(s - width());
  return sym_bits(escape()) + 1 + detail::exp_golomb_bits(mag);
}

/// Mass of the unit bin centred on integer offset u under N(0, sigma^2).
inline double gaussian_bin(double u, double sigma) {
  const double a = std::abs(u);
  return detail::normal_cdf((0.5 - a) / sigma) - detail::normal_cdf((-0.5 - a) / sigma);
}

inline constexpr double kScaleBound = 0.11;
inline constexpr int kMaxHalfWidth = 1024;

/// Table for mean-removed Gaussian symbols with standard deviation sigma.
inline QuantizedTable gaussian_table(double sigma) {
  sigma = std::max(sigma, kScaleBound);
  const int half = std::clamp(static_cast<int>(std::ceil(sigma * 7.0)) + 1, 1, kMaxHalfWidth);
  std::vector<double> pmf(2 * half + 1);
  double mass = 0;
  for (int i = -half; i <= half; ++i) mass += pmf[i + half] = gaussian_bin(i, sigma);
  return {-half, pmf_to_cdf(pmf, std::max(0.0, 1.0 - mass))};
}

// ---------------------------------------------------------------------------
// Symbol-level payload coding shared by encoder and decoder.

class PayloadWriter {
 public:
  void put(int v, const QuantizedTable& t) {
    const int s = v - t.offset;
    if (s >= 0 && s < t.width()) {
      enc_.encode_symbol(s, t.cdf);
      return;
    }
    enc_.encode_symbol(t.escape(), t.cdf);
    const bool below = s < 0;
    const std::uint32_t mag = below ? static_cast<std::uint32_t>(-s - 1) : static_cast<std::uint32_t>(s - t.width());
    enc_.encode_bits(below ? 1u : 0u, 1);
    put_exp_golomb(mag);
  }

  std::vector<std::uint8_t> finish() { return enc_.finish(); }

 private:
  void put_exp_golomb(std::uint32_t m) {
    if (m > (1u << 30)) throw std::out_of_range("payload: escaped magnitude too large");
    const std::uint32_t v = m + 1;
    int k = 0;
    while (v >> (k + 1)) ++k;
    enc_.encode_bits(0, k);
    enc_.encode_bits(v, k + 1);
  }

  RangeEncoder enc_;
};

class PayloadReader {
 public:
  explicit PayloadReader(std::span<const std::uint8_t> bytes) : dec_(bytes) {}

  int get(const QuantizedTable& t) {
    const int s = dec_.decode_symbol(t.cdf);
    if (s < t.width()) return s + t.offset;
    const bool below = dec_.decode_bits(1) != 0;
    int k = 0;
    while (dec_.decode_bits(1) == 0) {
      if (++k > 30) throw CorruptStream("payload: malformed escape code");
    }
    const std::uint32_t v = (1u << k) | (k ? dec_.decode_bits(k) : 0u);
    const auto mag = static_cast<std::int64_t>(v) - 1;
    const std::int64_t value = below ? static_cast<std::int64_t>(t.offset) - 1 - mag
                                     : static_cast<std::int64_t>(t.offset) + t.width() + mag;
    if (value < -(1 << 30) || value > (1 << 30)) throw CorruptStream("payload: escaped value out of range");
    return static_cast<int>(value);
  }

  std::size_t position() const { return dec_.position(); }

 private:
  RangeDecoder dec_;
};

// ---------------------------------------------------------------------------
// Learned density models.

/// Per-channel mixture of logistics for hyper-latents, learned jointly.
template <class T>
class FactorizedPrior {
 public:
  static constexpr int kComponents = 3;

  FactorizedPrior() = default;
  explicit FactorizedPrior(int channels) : channels_(channels) {
    Tensor<T> logits({1, channels, 1, kComponents});
    Tensor<T> means({1, channels, 1, kComponents});
    Tensor<T> scales({1, channels, 1, kComponents});
    for (int c = 0; c < channels; ++c)
      for (int k = 0; k < kComponents; ++k) {
        means[c * kComponents + k] = static_cast<T>(1.5 * (k - 1));
        scales[c * kComponents + k] = static_cast<T>(std::log(1.5));
      }
    logits_ = Param<T>(std::move(logits));
    means_ = Param<T>(std::move(means));
    log_scales_ = Param<T>(std::move(scales));
  }

  int channels() const { return channels_; }

  Var<T> likelihood(const Var<T>& z) const {
    return nn::logistic_mixture_likelihood(z, logits_.var(), means_.var(), log_scales_.var());
  }

  /// Exact bin probability in double precision, no floor.
  double probability(int channel, double v) const {
    double w[kComponents];
    double mx = -1e300, tot = 0, p = 0;
    for (int k = 0; k < kComponents; ++k) mx = std::max(mx, static_cast<double>(logits_.value()[channel * kComponents + k]));
    for (int k = 0; k < kComponents; ++k) tot += w[k] = std::exp(logits_.value()[channel * kComponents + k] - mx);
    for (int k = 0; k < kComponents; ++k) {
      const double m = means_.value()[channel * kComponents + k];
      const double s = std::exp(static_cast<double>(log_scales_.value()[channel * kComponents + k]));
      const double d = v - m;
      const double bin = d > 0 ? detail::logistic((0.5 - d) / s) - detail::logistic((-0.5 - d) / s)
                               : detail::logistic((d + 0.5) / s) - detail::logistic((d - 0.5) / s);
      p += w[k] / tot * bin;
    }
    return p;
  }

  QuantizedTable table(int channel) const {
    double lo = 1e300, hi = -1e300;
    for (int k = 0; k < kComponents; ++k) {
      const double m = means_.value()[channel * kComponents + k];
      const double s = std::exp(static_cast<double>(log_scales_.value()[channel * kComponents + k]));
      lo = std::min(lo, m - 24.0 * s);
      hi = std::max(hi, m + 24.0 * s);
    }
    int first = static_cast<int>(std::floor(lo));
    int last = static_cast<int>(std::ceil(hi));
    if (last - first + 1 > 2 * kMaxHalfWidth + 1) {
      const int mid = (first + last) / 2;
      first = mid - kMaxHalfWidth;
      last = mid + kMaxHalfWidth;
    }
    std::vector<double> pmf(last - first + 1);
    double mass = 0;
    for (int v = first; v <= last; ++v) mass += pmf[v - first] = probability(channel, v);
    return {first, pmf_to_cdf(pmf, std::max(0.0, 1.0 - mass))};
  }

  void collect(nn::ParamList<T>& out, const std::string& name, const std::string& group) {
    out.push_back({name + ".logits", group, &logits_});
    out.push_back({name + ".means", group, &means_});
    out.push_back({name + ".log_scales", group, &log_scales_});
  }

 private:
  int channels_ = 0;
  Param<T> logits_, means_, log_scales_;
};

/// sigma = max(softplus(raw), 0.11).
template <class T>
Var<T> bounded_scale(const Var<T>& raw) {
  return nn::lower_bound(nn::softplus(raw), static_cast<T>(kScaleBound));
}

/// Sum of -log2 p over a tensor of likelihoods (differentiable).
template <class T>
Var<T> bits_from_likelihoods(const Var<T>& p) {
  return nn::scale(nn::sum(nn::log(p)), static_cast<T>(-1.0 / std::log(2.0)));
}

// ---------------------------------------------------------------------------
// Non-differentiable rate estimates in double precision.

/// Ideal bits for mean-removed Gaussian symbols. Throws on a zero-probability symbol.
template <class T>
double gaussian_rate_bits(const Tensor<T>& symbols, const Tensor<T>& sigma) {
  if (symbols.shape() != sigma.shape()) throw std::invalid_argument("gaussian_rate_bits: shape mismatch");
  double bits = 0;
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    const double p = gaussian_bin(symbols[i], std::max(static_cast<double>(sigma[i]), kScaleBound));
    if (!(p > 0)) throw std::domain_error("gaussian_rate_bits: zero-probability symbol");
    bits -= std::log2(p);
  }
  return bits;
}

template <class T>
double factorized_rate_bits(const Tensor<T>& z, const FactorizedPrior<T>& prior) {
  double bits = 0;
  for (int n = 0; n < z.n(); ++n)
    for (int c = 0; c < z.c(); ++c)
      for (std::size_t i = 0; i < z.shape().plane(); ++i) {
        const double p = prior.probability(c, z.plane(n, c)[i]);
        if (!(p > 0)) throw std::domain_error("factorized_rate_bits: zero-probability symbol");
        bits -= std::log2(p);
      }
  return bits;
}

/// One symbol with probability p costs -log2 p bits.
inline double rate_bits(std::span<const double> probabilities) {
  double bits = 0;
  for (double p : probabilities) {
    if (!(p > 0)) throw std::domain_error("rate_bits: zero-probability symbol");
    bits -= std::log2(p);
  }
  return bits;
}

}  // namespace hytip::entropy
