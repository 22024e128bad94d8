#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/nn/ops.hpp"

namespace hytip::nn {

template <class T>
struct NamedParam {
  std::string name;   // unique, dotted path
  std::string group;  // trainable-set tag used by the training schedule
  Param<T>* param;
};

template <class T>
using ParamList = std::vector<NamedParam<T>>;

/// Static description of one layer, used by complexity accounting.
struct LayerInfo {
  std::string name;
  std::string kind;  // "conv" or "fc"
  int cin = 0;
  int cout = 0;
  int kernel = 1;
  int stride = 1;
  int groups = 1;
  // Input resolution relative to the coded frame, as a divisor (1, 2, 4, ...).
  int in_div = 1;
};

template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int cin, int cout, int kernel, int stride, std::mt19937_64& rng, bool zero_init = false)
      : cin_(cin), cout_(cout), kernel_(kernel), stride_(stride) {
    if (cin <= 0 || cout <= 0 || kernel <= 0 || stride <= 0)
      throw std::invalid_argument("Conv2d: non-positive geometry");
    Tensor<T> w({cout, cin, kernel, kernel});
    if (!zero_init) {
      // Kaiming-uniform for leaky ReLU(0.1).
      const double bound = std::sqrt(6.0 / ((1.0 + 0.01) * cin * kernel * kernel));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (auto& v : w.span()) v = static_cast<T>(dist(rng));
    }
    weight_ = Param<T>(std::move(w));
    bias_ = Param<T>(Tensor<T>({1, cout, 1, 1}));
  }

  Var<T> operator()(const Var<T>& x) const {
    Var<T> b = bias_.var();
    return conv2d(x, weight_.var(), &b, stride_);
  }

  void collect(ParamList<T>& out, const std::string& name, const std::string& group) {
    out.push_back({name + ".weight", group, &weight_});
    out.push_back({name + ".bias", group, &bias_});
  }

  LayerInfo info(const std::string& name, int in_div) const {
    return {name, "conv", cin_, cout_, kernel_, stride_, 1, in_div};
  }

  int in_channels() const { return cin_; }
  int out_channels() const { return cout_; }
  int stride() const { return stride_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }

 private:
  int cin_ = 0, cout_ = 0, kernel_ = 1, stride_ = 1;
  Param<T> weight_;
  Param<T> bias_;
};

/// Adam with bias correction. State is kept per parameter in list order.
template <class T>
class Adam {
 public:
  struct Moments {
    Tensor<T> m, v;
  };

  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  std::int64_t steps() const { return t_; }

  /// Applies one update to every trainable parameter that holds a gradient.
  /// Gradients are rescaled when their global norm exceeds clip_norm (> 0).
  void step(ParamList<T>& params, double clip_norm = 0.0) {
    if (state_.size() != params.size()) state_.resize(params.size());
    double scale = 1.0;
    if (clip_norm > 0) {
      double sq = 0;
      for (auto& np : params)
        if (np.param->trainable() && np.param->has_grad())
          for (T g : np.param->grad().span()) sq += static_cast<double>(g) * g;
      const double norm = std::sqrt(sq);
      if (norm > clip_norm) scale = clip_norm / norm;
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = *params[i].param;
      if (!p.trainable() || !p.has_grad()) continue;
      auto& st = state_[i];
      if (st.m.shape() != p.value().shape()) {
        st.m = Tensor<T>(p.value().shape());
        st.v = Tensor<T>(p.value().shape());
      }
      auto& val = p.value();
      const auto& g = p.grad();
      for (std::size_t j = 0; j < val.size(); ++j) {
        const double gj = static_cast<double>(g[j]) * scale;
        const double m = beta1_ * st.m[j] + (1.0 - beta1_) * gj;
        const double v = beta2_ * st.v[j] + (1.0 - beta2_) * gj * gj;
        st.m[j] = static_cast<T>(m);
        st.v[j] = static_cast<T>(v);
        val[j] -= static_cast<T>(lr_ * (m / c1) / (std::sqrt(v / c2) + eps_));
      }
    }
  }

  std::vector<Moments>& state() { return state_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Moments> state_;
};

template <class T>
void zero_grad(ParamList<T>& params) {
  for (auto& np : params) np.param->zero_grad();
}

template <class T>
std::size_t count_elements(const ParamList<T>& params) {
  std::size_t n = 0;
  for (const auto& np : params) n += np.param->value().size();
  return n;
}

}  // namespace hytip::nn
