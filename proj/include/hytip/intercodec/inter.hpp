#pragma once

#include <array>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/entropy/hyperprior.hpp"
#include "hytip/motioncodec/motion.hpp"
#include "hytip/tempbuf/buffer.hpp"
#include "hytip/trainer/gain.hpp"

namespace hytip::intercodec {

using nn::Conv2d;
using nn::LayerInfo;
using nn::Tensor;
using nn::Var;

struct InterNetworkSpec {
  std::array<int, 3> context_channels{16, 24, 32};
  int width = 32;
  int latent_channels = 48;
  int hyper_channels = 24;
  int mask_channels = 16;
  int implicit_channels = 2;       // F width, from the buffer config
  bool mask_uses_current_flow = false;
  bool refine_prediction = true;   // learned correction on top of the warped frame

  void validate() const {
    for (int v : {context_channels[0], context_channels[1], context_channels[2], width, latent_channels,
                  hyper_channels, mask_channels})
      if (v <= 0) throw std::invalid_argument("inter network spec: all widths must be positive");
    if (implicit_channels < 0) throw std::invalid_argument("inter network spec: negative implicit width");
  }
};

template <class T>
struct MultiScaleContext {
  Var<T> c1, c2, c3;  // full, 1/2 and 1/4 resolution
};

template <class T>
struct Prediction {
  Var<T> x_c;          // pixel-domain temporal predictor in [0,1]
  Var<T> warped;       // warp(x̂_{t-1}, f̂_t) before refinement; undefined without an explicit frame
  MultiScaleContext<T> ctx;
};

/// x_t - m ⊙ x_c.
template <class T>
Var<T> masked_residual(const Var<T>& x, const Var<T>& x_c, const Var<T>& m) {
  if (x.shape() != x_c.shape() || x.shape() != m.shape())
    throw std::invalid_argument("masked_residual: shapes " + x.shape().str() + ", " + x_c.shape().str() + ", " +
                                m.shape().str());
  return nn::sub(x, nn::mul(m, x_c));
}

/// Temporal context mining: features from the buffered frame and/or feature
/// bank, warped at three scales with the decoded flow and fused coarse to fine.
template <class T>
class TemporalContextMiner {
 public:
  TemporalContextMiner() = default;
  TemporalContextMiner(const InterNetworkSpec& s, bool use_frame, int bank_channels, const trainer::RateControl& rc,
                       std::mt19937_64& rng)
      : use_frame_(use_frame), bank_(bank_channels), refine_(s.refine_prediction) {
    const auto [c1, c2, c3] = s.context_channels;
    if (use_frame_) from_frame_ = Conv2d<T>(3, c1, 3, 1, rng);
    if (bank_ > 0) from_bank_ = Conv2d<T>(bank_, c1, 3, 1, rng);
    l1_ = Conv2d<T>(c1, c1, 3, 1, rng);
    l2_ = Conv2d<T>(c1, c2, 3, 2, rng);
    l3_ = Conv2d<T>(c2, c3, 3, 2, rng);
    f3_ = Conv2d<T>(c3, c3, 3, 1, rng);
    up3_ = Conv2d<T>(c3, 4 * c2, 3, 1, rng);
    f2_ = Conv2d<T>(2 * c2, c2, 3, 1, rng);
    up2_ = Conv2d<T>(c2, 4 * c1, 3, 1, rng);
    f1_ = Conv2d<T>(2 * c1, c1, 3, 1, rng);
    // With a buffered frame the head corrects the warped frame and starts at
    // zero; without one it has to synthesize the predictor itself.
    head_ = Conv2d<T>(c1, 3, 3, 1, rng, use_frame_);
    gain_ = trainer::GainBank<T>(c1, rc);
  }

  Prediction<T> operator()(const tempbuf::BufferState<T>& buf, const Var<T>& flow, double lambda,
                           tempbuf::BufferReads* reads = nullptr) const {
    const int h = flow.shape().h, w = flow.shape().w;
    Var<T> l1;
    Prediction<T> out;
    if (use_frame_) {
      if (!buf.decoded_frame.defined()) throw std::invalid_argument("context mining: decoded frame missing from buffer");
      if (buf.decoded_frame.shape() != nn::Shape{1, 3, h, w})
        throw std::invalid_argument("context mining: buffered frame " + buf.decoded_frame.shape().str() +
                                    " does not match flow " + flow.shape().str());
      l1 = from_frame_(buf.decoded_frame);
      out.warped = nn::warp(buf.decoded_frame, flow);
      if (reads) reads->frame = true;
    }
    if (bank_ > 0) {
      if (!buf.inter_features.defined()) throw std::invalid_argument("context mining: feature bank missing from buffer");
      if (buf.inter_features.shape() != nn::Shape{1, bank_, h, w})
        throw std::invalid_argument("context mining: feature bank " + buf.inter_features.shape().str());
      const Var<T> f = from_bank_(buf.inter_features);
      l1 = l1.defined() ? nn::add(l1, f) : f;
      if (reads) reads->inter_features = true;
    }
    l1 = l1_(nn::leaky_relu(l1));
    const Var<T> l2 = nn::leaky_relu(l2_(l1));
    const Var<T> l3 = nn::leaky_relu(l3_(l2));
    const Var<T> w1 = motioncodec::warp_any(l1, flow);
    const Var<T> w2 = motioncodec::warp_any(l2, flow);
    const Var<T> w3 = motioncodec::warp_any(l3, flow);
    out.ctx.c3 = nn::leaky_relu(f3_(w3));
    out.ctx.c2 = nn::leaky_relu(f2_(nn::concat<T>({w2, nn::pixel_shuffle(up3_(out.ctx.c3), 2)})));
    out.ctx.c1 = gain_.apply(f1_(nn::concat<T>({w1, nn::pixel_shuffle(up2_(out.ctx.c2), 2)})), lambda);
    if (use_frame_)
      out.x_c = refine_ ? nn::clamp(nn::add(out.warped, head_(out.ctx.c1)), T(0), T(1)) : nn::clamp(out.warped, T(0), T(1));
    else
      out.x_c = nn::clamp(nn::add_scalar(head_(out.ctx.c1), T(0.5)), T(0), T(1));
    return out;
  }

  void collect(nn::ParamList<T>& out, const std::string& name) {
    const std::string g = "tcm";
    if (use_frame_) from_frame_.collect(out, name + ".from_frame", g);
    if (bank_ > 0) from_bank_.collect(out, name + ".from_bank", g);
    for (auto [c, n] : std::initializer_list<std::pair<Conv2d<T>*, const char*>>{
             {&l1_, "l1"}, {&l2_, "l2"}, {&l3_, "l3"}, {&f3_, "f3"}, {&up3_, "up3"},
             {&f2_, "f2"}, {&up2_, "up2"}, {&f1_, "f1"}, {&head_, "head"}})
      c->collect(out, name + "." + n, g);
    gain_.collect(out, name + ".s_tcm", "gains");
  }

  void layers(std::vector<LayerInfo>& out, const std::string& name) const {
    if (use_frame_) out.push_back(from_frame_.info(name + ".from_frame", 1));
    if (bank_ > 0) out.push_back(from_bank_.info(name + ".from_bank", 1));
    out.push_back(l1_.info(name + ".l1", 1));
    out.push_back(l2_.info(name + ".l2", 1));
    out.push_back(l3_.info(name + ".l3", 2));
    out.push_back(f3_.info(name + ".f3", 4));
    out.push_back(up3_.info(name + ".up3", 4));
    out.push_back(f2_.info(name + ".f2", 2));
    out.push_back(up2_.info(name + ".up2", 2));
    out.push_back(f1_.info(name + ".f1", 1));
    if (use_frame_ ? refine_ : true) out.push_back(head_.info(name + ".head", 1));
  }

 private:
  bool use_frame_ = true;
  int bank_ = 0;
  bool refine_ = true;
  Conv2d<T> from_frame_, from_bank_, l1_, l2_, l3_, f3_, up3_, f2_, up2_, f1_, head_;
  trainer::GainBank<T> gain_;
};

/// Pixel-wise soft mask from a flow and the predictor, shared by the three
/// colour channels.
template <class T>
class MaskGenerator {
 public:
  MaskGenerator() = default;
  MaskGenerator(int channels, std::mt19937_64& rng)
      : m1_(5, channels, 3, 1, rng), m2_(channels, 1, 3, 1, rng, true) {}

  Var<T> operator()(const Var<T>& flow, const Var<T>& x_c) const {
    if (flow.shape().h != x_c.shape().h || flow.shape().w != x_c.shape().w || flow.shape().c != 2 || x_c.shape().c != 3)
      throw std::invalid_argument("generate_mask: flow " + flow.shape().str() + " and predictor " + x_c.shape().str() +
                                  " do not match");
    const Var<T> m = nn::sigmoid(m2_(nn::leaky_relu(m1_(nn::concat<T>({flow, x_c})))));
    return nn::repeat_channels(m, 3);
  }

  void collect(nn::ParamList<T>& out, const std::string& name) {
    m1_.collect(out, name + ".m1", "mask");
    m2_.collect(out, name + ".m2", "mask");
  }

  void layers(std::vector<LayerInfo>& out, const std::string& name) const {
    out.push_back(m1_.info(name + ".m1", 1));
    out.push_back(m2_.info(name + ".m2", 1));
  }

 private:
  Conv2d<T> m1_, m2_;
};

template <class T>
struct InterLatents {
  Var<T> y, z;
};

template <class T>
struct InterDecoded {
  Var<T> frame;     // x̂_t
  Var<T> features;  // F_t, undefined without an inter feature bank
  Var<T> dec_out;   // decoder output before adding m ⊙ x_c
};

/// Masked conditional residual codec. Encoder and decoder both see the
/// multi-scale context; the decoder adds m ⊙ x_c back and emits F_t from its
/// trunk.
template <class T>
class InterCodec {
 public:
  InterCodec() = default;
  InterCodec(const InterNetworkSpec& s, int bank_channels, const trainer::RateControl& rc, bool entropy_conditioning,
             std::mt19937_64& rng)
      : spec_(s), bank_(bank_channels) {
    s.validate();
    const int n = s.width;
    const auto [c1, c2, c3] = s.context_channels;
    e1_ = Conv2d<T>(3 + c1, n, 3, 1, rng);
    e2_ = Conv2d<T>(n, n, 3, 2, rng);
    e3_ = Conv2d<T>(n + c2, n, 3, 1, rng);
    e4_ = Conv2d<T>(n, n, 3, 2, rng);
    e5_ = Conv2d<T>(n + c3, n, 3, 1, rng);
    e6_ = Conv2d<T>(n, n, 3, 2, rng);
    e7_ = Conv2d<T>(n, s.latent_channels, 3, 2, rng);
    d1_ = Conv2d<T>(s.latent_channels, 4 * n, 3, 1, rng);
    d2_ = Conv2d<T>(n, 4 * n, 3, 1, rng);
    d3_ = Conv2d<T>(n + c3, 4 * n, 3, 1, rng);
    d4_ = Conv2d<T>(n + c2, 4 * n, 3, 1, rng);
    d5_ = Conv2d<T>(n + c1, n, 3, 1, rng);
    if (bank_ > 0) feat_ = Conv2d<T>(n, bank_, 3, 1, rng);
    out_ = Conv2d<T>(n, 3, 3, 1, rng);
    hyper_ = entropy::Hyperprior<T>(s.latent_channels, s.hyper_channels, n, entropy_conditioning ? c3 : 0, rng);
    gains_ = trainer::LatentGains<T>(s.latent_channels, rc);
    recon_ = trainer::GainBank<T>(n, rc);
  }

  bool conditioned() const { return hyper_.cond_channels() > 0; }
  const entropy::Hyperprior<T>& hyper() const { return hyper_; }
  const trainer::LatentGains<T>& gains() const { return gains_; }

  InterLatents<T> encode(const Var<T>& residual, const MultiScaleContext<T>& ctx, double lambda) const {
    check_context(residual, ctx);
    Var<T> h = nn::leaky_relu(e1_(nn::concat<T>({residual, ctx.c1})));
    h = nn::leaky_relu(e2_(h));
    h = nn::leaky_relu(e3_(nn::concat<T>({h, ctx.c2})));
    h = nn::leaky_relu(e4_(h));
    h = nn::leaky_relu(e5_(nn::concat<T>({h, ctx.c3})));
    const Var<T> y = gains_.enc.apply(e7_(nn::leaky_relu(e6_(h))), lambda);
    return {y, hyper_.analyse(y)};
  }

  InterDecoded<T> decode(const Var<T>& y_hat, const MultiScaleContext<T>& ctx, const Var<T>& m, const Var<T>& x_c,
                         double lambda, bool detach_bank = false) const {
    check_context(x_c, ctx);
    if (m.shape() != x_c.shape()) throw std::invalid_argument("inter decode: mask " + m.shape().str());
    const int hy = x_c.shape().h / 16, wy = x_c.shape().w / 16;
    if (y_hat.shape() != nn::Shape{1, spec_.latent_channels, hy, wy})
      throw std::invalid_argument("inter decode: latent " + y_hat.shape().str() + " for frame " + x_c.shape().str());
    Var<T> h = nn::leaky_relu(nn::pixel_shuffle(d1_(gains_.dec.apply(y_hat, lambda)), 2));
    h = nn::leaky_relu(nn::pixel_shuffle(d2_(h), 2));
    h = nn::leaky_relu(nn::pixel_shuffle(d3_(nn::concat<T>({h, ctx.c3})), 2));
    h = nn::leaky_relu(nn::pixel_shuffle(d4_(nn::concat<T>({h, ctx.c2})), 2));
    const Var<T> trunk = recon_.apply(nn::leaky_relu(d5_(nn::concat<T>({h, ctx.c1}))), lambda);
    InterDecoded<T> out;
    if (bank_ > 0) out.features = feat_(detach_bank ? trunk.detach() : trunk);
    out.dec_out = out_(trunk);
    out.frame = nn::clamp(nn::add(out.dec_out, nn::mul(m, x_c)), T(0), T(1));
    return out;
  }

  Var<T> entropy_condition(const MultiScaleContext<T>& ctx) const { return nn::avg_pool(ctx.c3, 4); }

  void collect(nn::ParamList<T>& out, const std::string& name) {
    const std::string g = "inter_codec";
    for (auto [c, n] : std::initializer_list<std::pair<Conv2d<T>*, const char*>>{
             {&e1_, "e1"}, {&e2_, "e2"}, {&e3_, "e3"}, {&e4_, "e4"}, {&e5_, "e5"}, {&e6_, "e6"}, {&e7_, "e7"},
             {&d1_, "d1"}, {&d2_, "d2"}, {&d3_, "d3"}, {&d4_, "d4"}, {&d5_, "d5"}, {&out_, "out"}})
      c->collect(out, name + "." + n, g);
    if (bank_ > 0) feat_.collect(out, name + ".feature", "feature_conv");
    hyper_.collect(out, name + ".hyper", g);
    gains_.collect(out, name);
    recon_.collect(out, name + ".s_recon", "gains");
  }

  void layers(std::vector<LayerInfo>& enc_only, std::vector<LayerInfo>& shared, const std::string& name) const {
    enc_only.push_back(e1_.info(name + ".e1", 1));
    enc_only.push_back(e2_.info(name + ".e2", 1));
    enc_only.push_back(e3_.info(name + ".e3", 2));
    enc_only.push_back(e4_.info(name + ".e4", 2));
    enc_only.push_back(e5_.info(name + ".e5", 4));
    enc_only.push_back(e6_.info(name + ".e6", 4));
    enc_only.push_back(e7_.info(name + ".e7", 8));
    std::vector<LayerInfo> hyper;
    hyper_.layers(hyper, name + ".hyper", 16);
    enc_only.push_back(hyper[0]);
    enc_only.push_back(hyper[1]);
    shared.insert(shared.end(), hyper.begin() + 2, hyper.end());
    shared.push_back(d1_.info(name + ".d1", 16));
    shared.push_back(d2_.info(name + ".d2", 8));
    shared.push_back(d3_.info(name + ".d3", 4));
    shared.push_back(d4_.info(name + ".d4", 2));
    shared.push_back(d5_.info(name + ".d5", 1));
    if (bank_ > 0) shared.push_back(feat_.info(name + ".feature", 1));
    shared.push_back(out_.info(name + ".out", 1));
  }

 private:
  void check_context(const Var<T>& x, const MultiScaleContext<T>& ctx) const {
    const int h = x.shape().h, w = x.shape().w;
    const auto [c1, c2, c3] = spec_.context_channels;
    auto check = [&](const Var<T>& c, int ch, int div, const char* name) {
      if (c.shape() != nn::Shape{1, ch, h / div, w / div})
        throw std::invalid_argument(std::string("inter codec: context ") + name + " has shape " + c.shape().str() +
                                    ", expected " + nn::Shape{1, ch, h / div, w / div}.str());
    };
    if (h % 16 || w % 16) throw std::invalid_argument("inter codec: frame extents must be divisible by 16");
    check(ctx.c1, c1, 1, "C1");
    check(ctx.c2, c2, 2, "C2");
    check(ctx.c3, c3, 4, "C3");
  }

  InterNetworkSpec spec_;
  int bank_ = 0;
  Conv2d<T> e1_, e2_, e3_, e4_, e5_, e6_, e7_, d1_, d2_, d3_, d4_, d5_, feat_, out_;
  entropy::Hyperprior<T> hyper_;
  trainer::LatentGains<T> gains_;
  trainer::GainBank<T> recon_;
};

struct IntraNetworkSpec {
  int width = 32;
  int latent_channels = 48;
  int hyper_channels = 24;
};

/// Stand-alone hyperprior image codec used for intra frames.
template <class T>
class IntraCodec {
 public:
  IntraCodec() = default;
  IntraCodec(const IntraNetworkSpec& s, const trainer::RateControl& rc, std::mt19937_64& rng) : spec_(s) {
    const int n = s.width;
    e1_ = Conv2d<T>(3, n, 5, 2, rng);
    e2_ = Conv2d<T>(n, n, 3, 2, rng);
    e3_ = Conv2d<T>(n, n, 3, 2, rng);
    e4_ = Conv2d<T>(n, s.latent_channels, 3, 2, rng);
    d1_ = Conv2d<T>(s.latent_channels, 4 * n, 3, 1, rng);
    d2_ = Conv2d<T>(n, 4 * n, 3, 1, rng);
    d3_ = Conv2d<T>(n, 4 * n, 3, 1, rng);
    d4_ = Conv2d<T>(n, 12, 3, 1, rng);
    hyper_ = entropy::Hyperprior<T>(s.latent_channels, s.hyper_channels, n, 0, rng);
    gains_ = trainer::LatentGains<T>(s.latent_channels, rc);
  }

  const entropy::Hyperprior<T>& hyper() const { return hyper_; }

  Var<T> encode(const Var<T>& x, double lambda) const {
    if (x.shape().c != 3 || x.shape().h % 16 || x.shape().w % 16)
      throw std::invalid_argument("intra codec: frame " + x.shape().str() + " must be RGB with extents divisible by 16");
    Var<T> h = nn::leaky_relu(e1_(nn::add_scalar(x, T(-0.5))));
    h = nn::leaky_relu(e3_(nn::leaky_relu(e2_(h))));
    return gains_.enc.apply(e4_(h), lambda);
  }

  Var<T> decode(const Var<T>& y_hat, double lambda) const {
    Var<T> h = nn::leaky_relu(nn::pixel_shuffle(d1_(gains_.dec.apply(y_hat, lambda)), 2));
    h = nn::leaky_relu(nn::pixel_shuffle(d2_(h), 2));
    h = nn::leaky_relu(nn::pixel_shuffle(d3_(h), 2));
    return nn::clamp(nn::add_scalar(nn::pixel_shuffle(d4_(h), 2), T(0.5)), T(0), T(1));
  }

  void collect(nn::ParamList<T>& out, const std::string& name) {
    for (auto [c, n] : std::initializer_list<std::pair<Conv2d<T>*, const char*>>{
             {&e1_, "e1"}, {&e2_, "e2"}, {&e3_, "e3"}, {&e4_, "e4"}, {&d1_, "d1"}, {&d2_, "d2"}, {&d3_, "d3"}, {&d4_, "d4"}})
      c->collect(out, name + "." + n, "intra");
    hyper_.collect(out, name + ".hyper", "intra");
    gains_.enc.collect(out, name + ".s_enc", "intra");
    gains_.dec.collect(out, name + ".s_dec", "intra");
  }

  void layers(std::vector<LayerInfo>& enc_only, std::vector<LayerInfo>& shared, const std::string& name) const {
    enc_only.push_back(e1_.info(name + ".e1", 1));
    enc_only.push_back(e2_.info(name + ".e2", 2));
    enc_only.push_back(e3_.info(name + ".e3", 4));
    enc_only.push_back(e4_.info(name + ".e4", 8));
    std::vector<LayerInfo> hyper;
    hyper_.layers(hyper, name + ".hyper", 16);
    enc_only.push_back(hyper[0]);
    enc_only.push_back(hyper[1]);
    shared.insert(shared.end(), hyper.begin() + 2, hyper.end());
    shared.push_back(d1_.info(name + ".d1", 16));
    shared.push_back(d2_.info(name + ".d2", 8));
    shared.push_back(d3_.info(name + ".d3", 4));
    shared.push_back(d4_.info(name + ".d4", 2));
  }

 private:
  IntraNetworkSpec spec_;
  Conv2d<T> e1_, e2_, e3_, e4_, d1_, d2_, d3_, d4_;
  entropy::Hyperprior<T> hyper_;
  trainer::LatentGains<T> gains_;
};

}  // namespace hytip::intercodec
