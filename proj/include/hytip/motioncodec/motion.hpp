#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/entropy/hyperprior.hpp"
#include "hytip/tempbuf/buffer.hpp"
#include "hytip/trainer/gain.hpp"

namespace hytip::motioncodec {

using nn::Conv2d;
using nn::LayerInfo;
using nn::Tensor;
using nn::Var;

struct MotionNetworkSpec {
  int pyramid_levels = 3;
  int lk_iterations = 2;
  int refine_channels = 16;
  int base_channels = 32;
  int latent_channels = 32;
  int hyper_channels = 16;
  int prior_channels = 16;
  int adjust_channels = 8;
  int implicit_channels = 2;  // F^f width, from the buffer config

  void validate() const {
    for (int v : {pyramid_levels, lk_iterations, refine_channels, base_channels, latent_channels, hyper_channels,
                  prior_channels, adjust_channels})
      if (v <= 0) throw std::invalid_argument("motion network spec: all widths must be positive");
    if (implicit_channels < 0) throw std::invalid_argument("motion network spec: negative implicit width");
  }
};

/// Backward warp of a frame or feature bank. Flow is given at frame
/// resolution; for a bank at 1/k resolution it is pooled and divided by k.
template <class T>
Var<T> warp_any(const Var<T>& src, const Var<T>& flow) {
  const int k = flow.shape().h / src.shape().h;
  if (k < 1 || flow.shape().h != k * src.shape().h || flow.shape().w != k * src.shape().w)
    throw std::invalid_argument("warp: flow " + flow.shape().str() + " incompatible with " + src.shape().str());
  if (k == 1) return nn::warp(src, flow);
  return nn::warp(src, nn::scale(nn::avg_pool(flow, k), static_cast<T>(1.0 / k)));
}

/// Coarse-to-fine motion estimator: a differentiable Lucas-Kanade update per
/// pyramid level, followed by a learned residual refinement whose last layer
/// starts at zero.
template <class T>
class MotionEstimator {
 public:
  MotionEstimator() = default;
  MotionEstimator(const MotionNetworkSpec& s, std::mt19937_64& rng)
      : levels_(s.pyramid_levels), iterations_(s.lk_iterations),
        r1_(8, s.refine_channels, 3, 1, rng), r2_(s.refine_channels, s.refine_channels, 3, 1, rng),
        r3_(s.refine_channels, 2, 3, 1, rng, true) {
    Tensor<T> g({2, 1, 3, 3});
    g.at(0, 0, 1, 0) = T(-0.5);
    g.at(0, 0, 1, 2) = T(0.5);
    g.at(1, 0, 0, 1) = T(-0.5);
    g.at(1, 0, 2, 1) = T(0.5);
    grad_kernel_ = g;
    box_kernel_ = Tensor<T>({5, 1, 5, 5}, T(1.0 / 25));
  }

  /// Flow f such that warp(prev, f) approximates cur.
  Var<T> operator()(const Var<T>& cur, const Var<T>& prev) const {
    if (cur.shape() != prev.shape() || cur.shape().c != 3)
      throw std::invalid_argument("estimate_flow: frames " + cur.shape().str() + " and " + prev.shape().str() +
                                  " must match");
    const int div = 1 << (levels_ - 1);
    if (cur.shape().h % div || cur.shape().w % div)
      throw std::invalid_argument("estimate_flow: frame size must be divisible by " + std::to_string(div));
    const Var<T> g1 = nn::mean_channels(cur), g0 = nn::mean_channels(prev);
    Var<T> flow;
    for (int l = levels_ - 1; l >= 0; --l) {
      const int k = 1 << l;
      const Var<T> c = k == 1 ? g1 : nn::avg_pool(g1, k);
      const Var<T> p = k == 1 ? g0 : nn::avg_pool(g0, k);
      if (!flow.defined())
        flow = Var<T>::constant(Tensor<T>({1, 2, c.shape().h, c.shape().w}));
      else
        flow = nn::scale(nn::upsample_bilinear(flow, 2), T(2));
      for (int it = 0; it < iterations_; ++it) flow = nn::add(flow, lk_step(c, p, flow));
    }
    const Var<T> in = nn::concat<T>({cur, nn::warp(prev, flow), nn::scale(flow, T(0.25))});
    return nn::add(flow, r3_(nn::leaky_relu(r2_(nn::leaky_relu(r1_(in))))));
  }

  void collect(nn::ParamList<T>& out, const std::string& name, const std::string& group) {
    r1_.collect(out, name + ".refine1", group);
    r2_.collect(out, name + ".refine2", group);
    r3_.collect(out, name + ".refine3", group);
  }

  void layers(std::vector<LayerInfo>& out, const std::string& name) const {
    for (int l = levels_ - 1; l >= 0; --l)
      for (int it = 0; it < iterations_; ++it) {
        const std::string tag = name + ".lk" + std::to_string(l) + "_" + std::to_string(it);
        out.push_back({tag + ".grad", "conv", 1, 2, 3, 1, 1, 1 << l});
        out.push_back({tag + ".box", "conv", 5, 5, 5, 1, 5, 1 << l});
      }
    out.push_back(r1_.info(name + ".refine1", 1));
    out.push_back(r2_.info(name + ".refine2", 1));
    out.push_back(r3_.info(name + ".refine3", 1));
  }

 private:
  static constexpr double kRegularizer = 1e-5;
  static constexpr double kMaxStep = 2.0;

  Var<T> lk_step(const Var<T>& cur, const Var<T>& prev, const Var<T>& flow) const {
    const Var<T> w = nn::warp(prev, flow);
    const Var<T> e = nn::sub(w, cur);
    const Var<T> g = nn::conv2d(w, Var<T>::constant(grad_kernel_), static_cast<const Var<T>*>(nullptr));
    const Var<T> ix = nn::slice_channels(g, 0, 1), iy = nn::slice_channels(g, 1, 2);
    const Var<T> sums = nn::conv2d(
        nn::concat<T>({nn::mul(ix, ix), nn::mul(ix, iy), nn::mul(iy, iy), nn::mul(ix, e), nn::mul(iy, e)}),
        Var<T>::constant(box_kernel_), static_cast<const Var<T>*>(nullptr), 1, 5);
    const Var<T> a = nn::add_scalar(nn::slice_channels(sums, 0, 1), static_cast<T>(kRegularizer));
    const Var<T> b = nn::slice_channels(sums, 1, 2);
    const Var<T> c = nn::add_scalar(nn::slice_channels(sums, 2, 3), static_cast<T>(kRegularizer));
    const Var<T> p = nn::slice_channels(sums, 3, 4), q = nn::slice_channels(sums, 4, 5);
    const Var<T> det = nn::sub(nn::mul(a, c), nn::mul(b, b));
    const Var<T> dx = nn::div(nn::sub(nn::mul(b, q), nn::mul(c, p)), det);
    const Var<T> dy = nn::div(nn::sub(nn::mul(b, p), nn::mul(a, q)), det);
    const T m = static_cast<T>(kMaxStep);
    auto limit = [m](const Var<T>& d) { return nn::scale(nn::tanh(nn::scale(d, T(1) / m)), m); };
    return nn::concat<T>({limit(dx), limit(dy)});
  }

  int levels_ = 3, iterations_ = 2;
  Conv2d<T> r1_, r2_, r3_;
  Tensor<T> grad_kernel_, box_kernel_;
};

/// Buffered motion priors handed to the motion codec.
template <class T>
struct MotionPriors {
  const Var<T>* flow = nullptr;      // f̂_{t-1}
  const Var<T>* features = nullptr;  // F^f_{t-1}
};

template <class T>
struct MotionLatents {
  Var<T> y, z;
};

template <class T>
struct MotionDecoded {
  Var<T> flow;      // f̂_t
  Var<T> features;  // F^f_t, undefined when the config keeps no motion bank
};

/// Motion codec: codes f_t conditioned on the buffered flow and/or motion
/// feature bank, without motion compensation of those priors.
template <class T>
class MotionCodec {
 public:
  MotionCodec() = default;
  MotionCodec(const MotionNetworkSpec& s, const tempbuf::BufferConfig& buf, const trainer::RateControl& rc,
              bool entropy_conditioning, std::mt19937_64& rng)
      : spec_(s), explicit_(buf.motion_explicit), implicit_(buf.motion_implicit.channels) {
    s.validate();
    if (buf.motion_implicit.enabled() && buf.motion_implicit.scale != 0.25)
      throw std::invalid_argument("motion codec: the motion feature bank lives at 1/4 resolution");
    const int n = s.base_channels, np = s.prior_channels;
    if (implicit_ > 0) adjust_ = Conv2d<T>(implicit_, s.adjust_channels, 3, 1, rng);
    prior_ = Conv2d<T>((explicit_ ? 2 : 0) + (implicit_ > 0 ? s.adjust_channels : 0), np, 3, 1, rng);
    e1_ = Conv2d<T>(2, n, 5, 2, rng);
    e2_ = Conv2d<T>(n, n, 3, 2, rng);
    e3_ = Conv2d<T>(n + np, n, 3, 1, rng);
    e4_ = Conv2d<T>(n, n, 3, 2, rng);
    e5_ = Conv2d<T>(n, s.latent_channels, 3, 2, rng);
    d1_ = Conv2d<T>(s.latent_channels, 4 * n, 3, 1, rng);
    d2_ = Conv2d<T>(n, 4 * n, 3, 1, rng);
    d3_ = Conv2d<T>(n + np, n, 3, 1, rng);
    if (implicit_ > 0) feat_ = Conv2d<T>(n, implicit_, 3, 1, rng);
    d4_ = Conv2d<T>(n, 4 * n, 3, 1, rng);
    d5_ = Conv2d<T>(n, 8, 3, 1, rng);
    hyper_ = entropy::Hyperprior<T>(s.latent_channels, s.hyper_channels, n, entropy_conditioning ? np : 0, rng);
    gains_ = trainer::LatentGains<T>(s.latent_channels, rc);
  }

  bool conditioned() const { return hyper_.cond_channels() > 0; }
  const entropy::Hyperprior<T>& hyper() const { return hyper_; }
  const trainer::LatentGains<T>& gains() const { return gains_; }

  /// Prior context at 1/4 resolution; also reports which priors were read.
  Var<T> context(const MotionPriors<T>& p, int h, int w, tempbuf::BufferReads* reads = nullptr) const {
    if (explicit_ != (p.flow != nullptr))
      throw std::invalid_argument(explicit_ ? "motion codec: config buffers the previous flow but none was given"
                                            : "motion codec: previous flow given to a config without an explicit motion buffer");
    if ((implicit_ > 0) != (p.features != nullptr))
      throw std::invalid_argument(implicit_ > 0 ? "motion codec: motion feature bank missing"
                                                : "motion codec: motion feature bank given to an explicit-only config");
    std::vector<Var<T>> parts;
    if (p.flow) {
      if (p.flow->shape() != nn::Shape{1, 2, h, w})
        throw std::invalid_argument("motion codec: previous flow has shape " + p.flow->shape().str());
      parts.push_back(nn::scale(nn::avg_pool(*p.flow, 4), T(0.25)));
      if (reads) reads->flow = true;
    }
    if (p.features) {
      if (p.features->shape() != nn::Shape{1, implicit_, h / 4, w / 4})
        throw std::invalid_argument("motion codec: motion feature bank has shape " + p.features->shape().str());
      parts.push_back(nn::leaky_relu(adjust_(*p.features)));
      if (reads) reads->motion_features = true;
    }
    return nn::leaky_relu(prior_(parts.size() == 1 ? parts[0] : nn::concat<T>(parts)));
  }

  MotionLatents<T> encode(const Var<T>& flow, const Var<T>& ctx, double lambda) const {
    check_frame(flow, 2);
    Var<T> h = nn::leaky_relu(e2_(nn::leaky_relu(e1_(flow))));
    if (h.shape().h != ctx.shape().h || h.shape().w != ctx.shape().w)
      throw std::invalid_argument("motion codec: context " + ctx.shape().str() + " does not match trunk " + h.shape().str());
    h = nn::leaky_relu(e3_(nn::concat<T>({h, ctx})));
    const Var<T> y = gains_.enc.apply(e5_(nn::leaky_relu(e4_(h))), lambda);
    return {y, hyper_.analyse(y)};
  }

  /// detach_bank cuts the graph in front of the feature conv, so truncated
  /// training still reaches that conv through the next frame's loss.
  MotionDecoded<T> decode(const Var<T>& y_hat, const Var<T>& ctx, double lambda, bool detach_bank = false) const {
    Var<T> h = nn::leaky_relu(nn::pixel_shuffle(d1_(gains_.dec.apply(y_hat, lambda)), 2));
    h = nn::leaky_relu(nn::pixel_shuffle(d2_(h), 2));
    if (h.shape().h != ctx.shape().h || h.shape().w != ctx.shape().w)
      throw std::invalid_argument("motion decode: latent " + y_hat.shape().str() + " does not match context " +
                                  ctx.shape().str());
    const Var<T> trunk = nn::leaky_relu(d3_(nn::concat<T>({h, ctx})));
    MotionDecoded<T> out;
    if (implicit_ > 0) out.features = feat_(detach_bank ? trunk.detach() : trunk);
    out.flow = nn::pixel_shuffle(d5_(nn::leaky_relu(nn::pixel_shuffle(d4_(trunk), 2))), 2);
    return out;
  }

  /// Conditioning for the entropy model at latent resolution.
  Var<T> entropy_condition(const Var<T>& ctx) const { return nn::avg_pool(ctx, 4); }

  void collect(nn::ParamList<T>& out, const std::string& name) {
    const std::string g = "motion_codec";
    if (implicit_ > 0) adjust_.collect(out, name + ".adjust", g);
    prior_.collect(out, name + ".prior", g);
    for (auto [c, n] : std::initializer_list<std::pair<Conv2d<T>*, const char*>>{
             {&e1_, "e1"}, {&e2_, "e2"}, {&e3_, "e3"}, {&e4_, "e4"}, {&e5_, "e5"},
             {&d1_, "d1"}, {&d2_, "d2"}, {&d3_, "d3"}, {&d4_, "d4"}, {&d5_, "d5"}})
      c->collect(out, name + "." + n, g);
    if (implicit_ > 0) feat_.collect(out, name + ".feature", "feature_conv");
    hyper_.collect(out, name + ".hyper", g);
    gains_.collect(out, name);
  }

  /// Layer table split into encoder-only, shared, and decoder-only parts.
  void layers(std::vector<LayerInfo>& enc_only, std::vector<LayerInfo>& shared, const std::string& name) const {
    if (implicit_ > 0) shared.push_back(adjust_.info(name + ".adjust", 4));
    shared.push_back(prior_.info(name + ".prior", 4));
    enc_only.push_back(e1_.info(name + ".e1", 1));
    enc_only.push_back(e2_.info(name + ".e2", 2));
    enc_only.push_back(e3_.info(name + ".e3", 4));
    enc_only.push_back(e4_.info(name + ".e4", 4));
    enc_only.push_back(e5_.info(name + ".e5", 8));
    std::vector<LayerInfo> hyper;
    hyper_.layers(hyper, name + ".hyper", 16);
    enc_only.push_back(hyper[0]);
    enc_only.push_back(hyper[1]);
    shared.insert(shared.end(), hyper.begin() + 2, hyper.end());
    shared.push_back(d1_.info(name + ".d1", 16));
    shared.push_back(d2_.info(name + ".d2", 8));
    shared.push_back(d3_.info(name + ".d3", 4));
    if (implicit_ > 0) shared.push_back(feat_.info(name + ".feature", 4));
    shared.push_back(d4_.info(name + ".d4", 4));
    shared.push_back(d5_.info(name + ".d5", 2));
  }

 private:
  static void check_frame(const Var<T>& v, int channels) {
    const auto s = v.shape();
    if (s.n != 1 || s.c != channels || s.h % 16 || s.w % 16)
      throw std::invalid_argument("motion codec: input " + s.str() + " must have " + std::to_string(channels) +
                                  " channels and extents divisible by 16");
  }

  MotionNetworkSpec spec_;
  bool explicit_ = true;
  int implicit_ = 0;
  Conv2d<T> adjust_, prior_, e1_, e2_, e3_, e4_, e5_, d1_, d2_, d3_, feat_, d4_, d5_;
  entropy::Hyperprior<T> hyper_;
  trainer::LatentGains<T> gains_;
};

}  // namespace hytip::motioncodec
