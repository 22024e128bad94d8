#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "hytip/entropy/density.hpp"

namespace hytip::entropy {

/// Quantized latents plus their rate, from one pass through a hyperprior.
template <class T>
struct LatentResult {
  Var<T> y_hat;   // what the synthesis transform sees
  Var<T> z_hat;
  Var<T> bits_y;  // scalar
  Var<T> bits_z;  // scalar
  Var<T> mu, sigma;
};

/// Symbols of one coded latent pair, as they travel through the payload.
template <class T>
struct LatentSymbols {
  Tensor<T> z;        // integer valued
  Tensor<T> y;        // integer valued, mean removed
  Tensor<T> mu;       // decoder-side mean
  Tensor<T> sigma;    // decoder-side scale
  Tensor<T> y_hat;    // y + mu, exactly as the decoder rebuilds it
  double estimated_bits = 0;  // ideal code length under the 16-bit tables
};

/// Hyper-analysis y -> z at half the latent resolution, a factorized prior on
/// z, and a hyper-synthesis producing the mean and scale of a conditional
/// Gaussian on y. An optional conditioning tensor at latent resolution joins
/// the parameter network.
template <class T>
class Hyperprior {
 public:
  Hyperprior() = default;
  Hyperprior(int y_channels, int z_channels, int width, int cond_channels, std::mt19937_64& rng)
      : cy_(y_channels), cz_(z_channels), width_(width), cond_(cond_channels),
        ha1_(y_channels, width, 3, 1, rng), ha2_(width, z_channels, 3, 2, rng),
        hs1_(z_channels, 4 * width, 3, 1, rng), hs2_(width + cond_channels, width, 3, 1, rng),
        hs3_(width, 2 * y_channels, 3, 1, rng), prior_(z_channels) {}

  int y_channels() const { return cy_; }
  int z_channels() const { return cz_; }
  int cond_channels() const { return cond_; }

  Var<T> analyse(const Var<T>& y) const { return ha2_(nn::leaky_relu(ha1_(y))); }

  std::pair<Var<T>, Var<T>> params(const Var<T>& z_hat, const Var<T>* cond) const {
    if ((cond != nullptr) != (cond_ > 0))
      throw std::invalid_argument("hyperprior: conditioning features " + std::string(cond ? "given" : "missing"));
    Var<T> h = nn::leaky_relu(nn::pixel_shuffle(hs1_(z_hat), 2));
    if (cond) h = nn::concat<T>({h, *cond});
    const Var<T> p = hs3_(nn::leaky_relu(hs2_(h)));
    return {nn::slice_channels(p, 0, cy_), bounded_scale(nn::slice_channels(p, cy_, 2 * cy_))};
  }

  /// Training or evaluation pass.
  LatentResult<T> forward(const Var<T>& y, QuantMode mode, std::mt19937_64* rng, const Var<T>* cond = nullptr) const {
    check_latent(y);
    LatentResult<T> r;
    const Var<T> z = analyse(y);
    const Var<T> z_rate = mode == QuantMode::kRound ? quantize(z, QuantMode::kRound, nullptr) : quantize(z, QuantMode::kNoise, rng);
    r.z_hat = mode == QuantMode::kMixed ? quantize(z, QuantMode::kRound, nullptr) : z_rate;
    r.bits_z = bits_from_likelihoods(prior_.likelihood(z_rate));
    std::tie(r.mu, r.sigma) = params(r.z_hat, cond);
    const Var<T> y_rate = mode == QuantMode::kRound ? quantize(y, QuantMode::kRound, nullptr, &r.mu)
                                                    : quantize(y, QuantMode::kNoise, rng);
    r.y_hat = mode == QuantMode::kMixed ? quantize(y, QuantMode::kRound, nullptr, &r.mu) : y_rate;
    r.bits_y = bits_from_likelihoods(nn::gaussian_likelihood(y_rate, r.mu, r.sigma));
    return r;
  }

  /// Rounds y against the decoder-side parameters and writes z then y.
  LatentSymbols<T> encode(const Var<T>& y, PayloadWriter& w, const Var<T>* cond = nullptr) const {
    check_latent(y);
    nn::NoGradGuard ng;
    LatentSymbols<T> s;
    s.z = round_tensor(analyse(y).value());
    for (int c = 0; c < s.z.c(); ++c) {
      const auto table = prior_.table(c);
      for (std::size_t i = 0; i < s.z.shape().plane(); ++i) {
        const int v = static_cast<int>(s.z.plane(0, c)[i]);
        w.put(v, table);
        s.estimated_bits += table.bits(v);
      }
    }
    const auto [mu, sigma] = params(Var<T>::constant(s.z), cond);
    s.mu = mu.value();
    s.sigma = sigma.value();
    s.y = Tensor<T>(y.shape());
    for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] = std::nearbyint(y.value()[i] - s.mu[i]);
    for (std::size_t i = 0; i < s.y.size(); ++i) {
      const int v = static_cast<int>(s.y[i]);
      const auto table = gaussian_table(s.sigma[i]);
      w.put(v, table);
      s.estimated_bits += table.bits(v);
    }
    s.y_hat = dequantize(s.y, s.mu);
    return s;
  }

  /// Inverse of encode for a latent of shape y_shape.
  LatentSymbols<T> decode(nn::Shape y_shape, PayloadReader& r, const Var<T>* cond = nullptr) const {
    nn::NoGradGuard ng;
    LatentSymbols<T> s;
    s.z = Tensor<T>({1, cz_, y_shape.h / 2, y_shape.w / 2});
    for (int c = 0; c < s.z.c(); ++c) {
      const auto table = prior_.table(c);
      for (std::size_t i = 0; i < s.z.shape().plane(); ++i) s.z.plane(0, c)[i] = static_cast<T>(r.get(table));
    }
    const auto [mu, sigma] = params(Var<T>::constant(s.z), cond);
    s.mu = mu.value();
    s.sigma = sigma.value();
    s.y = Tensor<T>(y_shape);
    for (std::size_t i = 0; i < s.y.size(); ++i) s.y[i] = static_cast<T>(r.get(gaussian_table(s.sigma[i])));
    s.y_hat = dequantize(s.y, s.mu);
    return s;
  }

  const FactorizedPrior<T>& prior() const { return prior_; }

  void collect(nn::ParamList<T>& out, const std::string& name, const std::string& group) {
    ha1_.collect(out, name + ".ha1", group);
    ha2_.collect(out, name + ".ha2", group);
    hs1_.collect(out, name + ".hs1", group);
    hs2_.collect(out, name + ".hs2", group);
    hs3_.collect(out, name + ".hs3", group);
    prior_.collect(out, name + ".prior", group);
  }

  /// Layer table. Latent resolution is 1/latent_div of the frame.
  void layers(std::vector<nn::LayerInfo>& out, const std::string& name, int latent_div) const {
    out.push_back(ha1_.info(name + ".ha1", latent_div));
    out.push_back(ha2_.info(name + ".ha2", latent_div));
    out.push_back(hs1_.info(name + ".hs1", 2 * latent_div));
    out.push_back(hs2_.info(name + ".hs2", latent_div));
    out.push_back(hs3_.info(name + ".hs3", latent_div));
  }

  static Tensor<T> dequantize(const Tensor<T>& symbols, const Tensor<T>& mu) {
    Tensor<T> out(symbols.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = symbols[i] + mu[i];
    return out;
  }

 private:
  void check_latent(const Var<T>& y) const {
    const auto s = y.shape();
    if (s.n != 1 || s.c != cy_ || s.h % 2 || s.w % 2)
      throw std::invalid_argument("hyperprior: latent " + s.str() + " needs " + std::to_string(cy_) +
                                  " channels and even extents");
  }

  static Tensor<T> round_tensor(const Tensor<T>& t) {
    Tensor<T> out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::nearbyint(t[i]);
    return out;
  }

  int cy_ = 0, cz_ = 0, width_ = 0, cond_ = 0;
  nn::Conv2d<T> ha1_, ha2_, hs1_, hs2_, hs3_;
  FactorizedPrior<T> prior_;
};

}  // namespace hytip::entropy
