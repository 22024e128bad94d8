#pragma once

#include <array>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/nn/layers.hpp"

namespace hytip::trainer {

using nn::Param;
using nn::Tensor;
using nn::Var;

enum class Distortion { kMSE, kMSSSIM };

/// Lambda range and the anchors the gain vectors are trained at.
struct RateControl {
  double lambda_min = 227.0;
  double lambda_max = 2032.0;
  Distortion metric = Distortion::kMSE;
  static constexpr int kAnchors = 4;

  static RateControl psnr() { return {227.0, 2032.0, Distortion::kMSE}; }
  static RateControl ms_ssim() { return {7.0, 46.0, Distortion::kMSSSIM}; }

  void validate() const {
    if (!(lambda_min > 0) || !(lambda_max >= lambda_min))
      throw std::invalid_argument("rate control: need 0 < lambda_min <= lambda_max");
  }

  /// Anchor i of kAnchors, log-spaced over the range.
  double anchor(int i) const {
    if (kAnchors == 1 || lambda_max == lambda_min) return lambda_min;
    const double t = static_cast<double>(i) / (kAnchors - 1);
    return std::exp(std::log(lambda_min) + t * (std::log(lambda_max) - std::log(lambda_min)));
  }
};

/// Log-uniform sample in [lambda_min, lambda_max].
inline double sample_lambda(const RateControl& rc, std::mt19937_64& rng) {
  rc.validate();
  std::uniform_real_distribution<double> u(std::log(rc.lambda_min), std::log(rc.lambda_max));
  return std::min(rc.lambda_max, std::max(rc.lambda_min, std::exp(u(rng))));
}

enum class GainStage { kEnc, kDec, kRecon, kTcm };

inline const char* to_string(GainStage s) {
  switch (s) {
    case GainStage::kEnc: return "enc";
    case GainStage::kDec: return "dec";
    case GainStage::kRecon: return "recon";
    case GainStage::kTcm: return "tcm";
  }
  return "?";
}

/// Per-channel gain vectors at the rate-control anchors, stored as log-gains so
/// they stay strictly positive. Between anchors the log-gains are interpolated
/// linearly in log(lambda), i.e. geometrically.
template <class T>
class GainBank {
 public:
  GainBank() = default;
  GainBank(int channels, const RateControl& rc) : channels_(channels), rc_(rc) {
    for (auto& p : log_gain_) p = Param<T>(Tensor<T>({1, channels, 1, 1}));
  }

  int channels() const { return channels_; }

  /// Sets anchor i to exp(log_gain) on every channel.
  void fill(int anchor, double log_gain) {
    for (auto& v : log_gain_[anchor].value().span()) v = static_cast<T>(log_gain);
  }

  /// Anchor pair and weight of the upper anchor for lambda.
  std::pair<int, double> locate(double lambda) const {
    const double lo = rc_.anchor(0), hi = rc_.anchor(RateControl::kAnchors - 1);
    const double tol = 1e-9 * hi;
    if (!(lambda >= lo - tol && lambda <= hi + tol))
      throw std::out_of_range("gain: lambda " + std::to_string(lambda) + " outside [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
    for (int i = 0; i < RateControl::kAnchors; ++i)
      if (std::abs(lambda - rc_.anchor(i)) <= tol) return {i, 0.0};
    int i = 0;
    while (i + 2 < RateControl::kAnchors && lambda > rc_.anchor(i + 1)) ++i;
    const double w = (std::log(lambda) - std::log(rc_.anchor(i))) / (std::log(rc_.anchor(i + 1)) - std::log(rc_.anchor(i)));
    return {i, w};
  }

  /// Gain vector [1,C,1,1] for lambda (differentiable in the anchors).
  Var<T> vector(double lambda) const {
    const auto [i, w] = locate(lambda);
    if (w == 0.0) return nn::exp(log_gain_[i].var());
    return nn::exp(nn::add(nn::scale(log_gain_[i].var(), static_cast<T>(1.0 - w)),
                           nn::scale(log_gain_[i + 1].var(), static_cast<T>(w))));
  }

  Var<T> apply(const Var<T>& x, double lambda) const {
    if (x.shape().c != channels_)
      throw std::invalid_argument("gain: " + std::to_string(channels_) + " channels, input " + x.shape().str());
    return nn::mul(x, vector(lambda));
  }

  void collect(nn::ParamList<T>& out, const std::string& name, const std::string& group) {
    for (int i = 0; i < RateControl::kAnchors; ++i)
      out.push_back({name + ".anchor" + std::to_string(i), group, &log_gain_[i]});
  }

  const RateControl& rate_control() const { return rc_; }

 private:
  int channels_ = 0;
  RateControl rc_;
  std::array<Param<T>, RateControl::kAnchors> log_gain_;
};

/// Encoder/decoder gain pair around a quantized latent. The decoder side is
/// initialised to the reciprocal of the encoder side so that their product is
/// the identity; the encoder side grows with lambda so higher lambdas quantize
/// more finely.
template <class T>
struct LatentGains {
  GainBank<T> enc, dec;

  LatentGains() = default;
  LatentGains(int channels, const RateControl& rc, double log_span = std::log(3.0))
      : enc(channels, rc), dec(channels, rc) {
    for (int i = 0; i < RateControl::kAnchors; ++i) {
      const double t = static_cast<double>(i) / (RateControl::kAnchors - 1) - 0.5;
      enc.fill(i, t * log_span);
      dec.fill(i, -t * log_span);
    }
  }

  void collect(nn::ParamList<T>& out, const std::string& name) {
    enc.collect(out, name + ".s_enc", "gains");
    dec.collect(out, name + ".s_dec", "gains");
  }
};

}  // namespace hytip::trainer
