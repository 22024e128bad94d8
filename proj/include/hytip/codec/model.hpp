#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/entropy/bitstream.hpp"
#include "hytip/entropy/hyperprior.hpp"
#include "hytip/evalkit/gop.hpp"
#include "hytip/evalkit/metrics.hpp"
#include "hytip/intercodec/inter.hpp"
#include "hytip/motioncodec/motion.hpp"
#include "hytip/tempbuf/buffer.hpp"
#include "hytip/trainer/gain.hpp"

namespace hytip::codec {

using entropy::QuantMode;
using nn::Tensor;
using nn::Var;

/// Frames are padded to this multiple before coding (latents at 1/16,
/// hyper-latents at 1/32).
inline constexpr int kPadMultiple = 32;

inline int padded(int v) { return (v + kPadMultiple - 1) / kPadMultiple * kPadMultiple; }

struct ModelConfig {
  tempbuf::BufferConfig buffer;
  motioncodec::MotionNetworkSpec motion;
  intercodec::InterNetworkSpec inter;
  intercodec::IntraNetworkSpec intra;
  trainer::RateControl rate = trainer::RateControl::psnr();
  bool entropy_conditioning = false;

  /// Default toy widths.
  static ModelConfig defaults() {
    ModelConfig c;
    c.buffer = tempbuf::BufferConfig::parse("2+0.125", "3+2", 0.75);
    c.sync();
    return c;
  }

  /// Narrow preset for smoke training and acceptance runs.
  static ModelConfig tiny() {
    ModelConfig c = defaults();
    c.motion.refine_channels = 8;
    c.motion.base_channels = 16;
    c.motion.latent_channels = 16;
    c.motion.hyper_channels = 8;
    c.motion.prior_channels = 8;
    c.motion.adjust_channels = 4;
    c.inter.context_channels = {8, 12, 16};
    c.inter.width = 16;
    c.inter.latent_channels = 24;
    c.inter.hyper_channels = 12;
    c.inter.mask_channels = 8;
    c.intra.width = 16;
    c.intra.latent_channels = 24;
    c.intra.hyper_channels = 12;
    return c;
  }

  /// Copies the bank widths from the buffer config into the network specs.
  void sync() {
    motion.implicit_channels = buffer.motion_implicit.channels;
    inter.implicit_channels = buffer.inter_implicit.channels;
  }

  void validate() const {
    buffer.validate();
    motion.validate();
    inter.validate();
    rate.validate();
    if (motion.implicit_channels != buffer.motion_implicit.channels ||
        inter.implicit_channels != buffer.inter_implicit.channels)
      throw std::invalid_argument("model config: network bank widths disagree with the buffer config");
    if (buffer.inter_implicit.enabled() && buffer.inter_implicit.scale != 1.0)
      throw std::invalid_argument("model config: the inter feature bank is kept at full resolution");
    if (buffer.motion_implicit.enabled() && buffer.motion_implicit.scale != 0.25)
      throw std::invalid_argument("model config: the motion feature bank is kept at 1/4 resolution");
    for (int v : {intra.width, intra.latent_channels, intra.hyper_channels})
      if (v <= 0) throw std::invalid_argument("model config: intra widths must be positive");
  }
};

enum class LossKind { kMotionWarp, kPrediction, kRd, kRdMixed };

inline const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::kMotionWarp: return "motion-warp";
    case LossKind::kPrediction: return "prediction";
    case LossKind::kRd: return "rd";
    case LossKind::kRdMixed: return "rd-mixed";
  }
  return "?";
}

inline LossKind parse_loss(const std::string& s) {
  for (auto k : {LossKind::kMotionWarp, LossKind::kPrediction, LossKind::kRd, LossKind::kRdMixed})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown loss '" + s + "' (motion-warp, prediction, rd, rd-mixed)");
}

/// Rate plus weighted distortion; rejects non-finite or negative terms.
template <class T>
Var<T> rd_loss(const Var<T>& rate_bpp, const Var<T>& distortion, double lambda) {
  const double r = rate_bpp.value()[0], d = distortion.value()[0];
  if (!std::isfinite(r) || !std::isfinite(d) || !std::isfinite(lambda))
    throw std::domain_error("rd_loss: non-finite input (R=" + std::to_string(r) + ", D=" + std::to_string(d) + ")");
  if (r < 0 || d < 0 || !(lambda > 0)) throw std::domain_error("rd_loss: need R >= 0, D >= 0, lambda > 0");
  return nn::add(rate_bpp, nn::scale(distortion, static_cast<T>(lambda)));
}

inline double rd_loss(double rate_bpp, double distortion, double lambda) {
  if (!std::isfinite(rate_bpp) || !std::isfinite(distortion) || !std::isfinite(lambda))
    throw std::domain_error("rd_loss: non-finite input");
  if (rate_bpp < 0 || distortion < 0 || !(lambda > 0)) throw std::domain_error("rd_loss: need R >= 0, D >= 0, lambda > 0");
  return rate_bpp + lambda * distortion;
}

template <class T>
Var<T> distortion(const Var<T>& a, const Var<T>& b, trainer::Distortion metric) {
  if (metric == trainer::Distortion::kMSE) return nn::mse(a, b);
  return nn::add_scalar(nn::scale(evalkit::ms_ssim_var(a, b), T(-1)), T(1));
}

struct ForwardOptions {
  LossKind loss = LossKind::kRd;
  QuantMode quant = QuantMode::kNoise;
  bool epa = false;              // keep the graph across frames
  bool implicit_refs = true;     // false: feature banks held at zero
  std::mt19937_64* rng = nullptr;
};

struct FrameStats {
  double loss = 0;
  double bpp = 0;
  double bpp_motion = 0;
  double d_warp = 0;
  double d_pred = 0;
  double d_recon = 0;
};

template <class T>
struct ClipResult {
  Var<T> loss;                       // mean over the P frames
  std::vector<Var<T>> frame_losses;  // per P frame
  std::vector<Var<T>> recon;         // x̂_t per P frame (cropped), when produced
  std::vector<Var<T>> predictors;    // x_c per P frame (cropped), when produced
  std::vector<FrameStats> stats;
  tempbuf::BufferReads reads;
};

template <class T>
struct IntraResult {
  Var<T> loss;
  Var<T> recon;
  double bpp = 0;
  double d = 0;
};

/// Per-frame coding report.
struct CodedFrame {
  entropy::FrameType type = entropy::FrameType::kIntra;
  double estimated_bits = 0;
  std::size_t actual_bits = 0;
};

struct CodedSequence {
  entropy::Bitstream stream;
  std::vector<Tensor<float>> recon;  // encoder-side reconstructions
  std::vector<CodedFrame> frames;
};

/// The full P-frame model (motion estimation, motion codec, context mining,
/// mask and inter codec) plus the intra codec.
template <class T>
class Model {
 public:
  Model() = default;
  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const auto& b = cfg_.buffer;
    me_ = motioncodec::MotionEstimator<T>(cfg_.motion, rng);
    motion_ = motioncodec::MotionCodec<T>(cfg_.motion, b, cfg_.rate, cfg_.entropy_conditioning, rng);
    tcm_ = intercodec::TemporalContextMiner<T>(cfg_.inter, b.inter_explicit, b.inter_implicit.channels, cfg_.rate, rng);
    mask_ = intercodec::MaskGenerator<T>(cfg_.inter.mask_channels, rng);
    inter_ = intercodec::InterCodec<T>(cfg_.inter, b.inter_implicit.channels, cfg_.rate, cfg_.entropy_conditioning, rng);
    intra_ = intercodec::IntraCodec<T>(cfg_.intra, cfg_.rate, rng);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return cfg_; }

  /// Named parameters. Groups: me, motion_codec, tcm, mask, inter_codec,
  /// feature_conv, gains, intra.
  nn::ParamList<T> parameters() {
    nn::ParamList<T> out;
    me_.collect(out, "me", "me");
    motion_.collect(out, "motion");
    tcm_.collect(out, "tcm");
    mask_.collect(out, "mask");
    inter_.collect(out, "inter");
    intra_.collect(out, "intra");
    return out;
  }

  // ---------------------------------------------------------------- training

  /// Training/evaluation pass over a clip. frames[0] is the reference the
  /// P-chain starts from; frames 1.. are coded as P frames.
  ClipResult<T> forward_clip(const std::vector<Var<T>>& frames, double lambda, const ForwardOptions& opt) const {
    if (frames.size() < 2) throw std::invalid_argument("forward_clip: need a reference and at least one P frame");
    const int h = frames[0].shape().h, w = frames[0].shape().w;
    const int hp = padded(h), wp = padded(w);
    const double pixels = static_cast<double>(h) * w;
    const auto metric = cfg_.rate.metric;
    ClipResult<T> res;
    auto state = initial_state(nn::pad_replicate(frames[0], hp, wp));
    Var<T> total;
    for (std::size_t t = 1; t < frames.size(); ++t) {
      if (frames[t].shape() != frames[0].shape()) throw std::invalid_argument("forward_clip: frame sizes differ");
      const Var<T> x = nn::pad_replicate(frames[t], hp, wp);
      FrameStats st;
      // Motion.
      const Var<T> flow = me_(x, state.decoded_frame);
      const Var<T> mctx = motion_context(state, hp, wp, &res.reads);
      const auto mlat = motion_.encode(flow, mctx, lambda);
      const Var<T> mcond = motion_.conditioned() ? motion_.entropy_condition(mctx) : Var<T>();
      const auto mq = motion_.hyper().forward(mlat.y, opt.quant, opt.rng, mcond.defined() ? &mcond : nullptr);
      const auto mdec = motion_.decode(mq.y_hat, mctx, lambda, !opt.epa);
      const Var<T> bits_motion = nn::add(mq.bits_y, mq.bits_z);
      st.bpp_motion = bits_motion.value()[0] / pixels;

      Var<T> loss, next_frame;
      Var<T> inter_bank;
      if (opt.loss == LossKind::kMotionWarp) {
        const Var<T> warped = nn::crop(nn::warp(state.decoded_frame, mdec.flow), h, w);
        const Var<T> d = distortion(warped, frames[t], metric);
        const Var<T> rate = nn::scale(bits_motion, static_cast<T>(1.0 / pixels));
        loss = rd_loss(rate, d, lambda);
        st.d_warp = d.value()[0];
        st.bpp = st.bpp_motion;
        next_frame = x;
      } else {
        const auto pred = tcm_(state, mdec.flow, lambda, &res.reads);
        const Var<T> xc = nn::crop(pred.x_c, h, w);
        const Var<T> d_pred = distortion(xc, frames[t], metric);
        st.d_pred = d_pred.value()[0];
        res.predictors.push_back(xc);
        if (opt.loss == LossKind::kPrediction) {
          loss = nn::scale(d_pred, static_cast<T>(lambda));
          st.bpp = st.bpp_motion;
          next_frame = x;
        } else {
          const Var<T> m = mask_(mask_flow(state, mdec.flow), pred.x_c);
          const auto ilat = inter_.encode(intercodec::masked_residual(x, pred.x_c, m), pred.ctx, lambda);
          const Var<T> icond = inter_.conditioned() ? inter_.entropy_condition(pred.ctx) : Var<T>();
          const auto iq = inter_.hyper().forward(ilat.y, opt.quant, opt.rng, icond.defined() ? &icond : nullptr);
          const auto idec = inter_.decode(iq.y_hat, pred.ctx, m, pred.x_c, lambda, !opt.epa);
          const Var<T> recon = nn::crop(idec.frame, h, w);
          const Var<T> d_recon = distortion(recon, frames[t], metric);
          const Var<T> bits = nn::add(bits_motion, nn::add(iq.bits_y, iq.bits_z));
          const Var<T> rate = nn::scale(bits, static_cast<T>(1.0 / pixels));
          const Var<T> d = opt.loss == LossKind::kRd ? d_recon : nn::scale(nn::add(d_pred, d_recon), T(0.5));
          loss = rd_loss(rate, d, lambda);
          st.d_recon = d_recon.value()[0];
          st.bpp = rate.value()[0];
          res.recon.push_back(recon);
          next_frame = idec.frame;
          inter_bank = idec.features;
        }
      }
      st.loss = loss.value()[0];
      res.stats.push_back(st);
      res.frame_losses.push_back(loss);
      total = total.defined() ? nn::add(total, loss) : loss;

      tempbuf::FrameOutputs<T> out{next_frame, mdec.flow, {}, {}};
      if (cfg_.buffer.inter_implicit.enabled())
        out.inter_features = inter_bank.defined() && opt.implicit_refs ? inter_bank : zeros_like_bank(state.inter_features);
      if (cfg_.buffer.motion_implicit.enabled())
        out.motion_features = opt.implicit_refs ? mdec.features : zeros_like_bank(state.motion_features);
      state = tempbuf::advance(cfg_.buffer, state, out);
      if (!opt.epa) state = truncated(state);
    }
    res.loss = nn::scale(total, static_cast<T>(1.0 / (frames.size() - 1)));
    return res;
  }

  IntraResult<T> forward_intra(const Var<T>& frame, double lambda, QuantMode mode, std::mt19937_64* rng) const {
    const int h = frame.shape().h, w = frame.shape().w;
    const Var<T> x = nn::pad_replicate(frame, padded(h), padded(w));
    const auto q = intra_.hyper().forward(intra_.encode(x, lambda), mode, rng);
    IntraResult<T> r;
    r.recon = nn::crop(intra_.decode(q.y_hat, lambda), h, w);
    const Var<T> rate = nn::scale(nn::add(q.bits_y, q.bits_z), static_cast<T>(1.0 / (static_cast<double>(h) * w)));
    const Var<T> d = distortion(r.recon, frame, cfg_.rate.metric);
    r.loss = rd_loss(rate, d, lambda);
    r.bpp = rate.value()[0];
    r.d = d.value()[0];
    return r;
  }

  // ----------------------------------------------------------------- coding

  /// Entropy-codes a sequence. Optional debug_csv receives per-P-frame
  /// summaries of x_c, the mask and the contexts.
  CodedSequence encode_sequence(const std::vector<Tensor<T>>& frames, int lambda_idx, int intra_period,
                                const std::vector<int>& scene_cuts = {}, std::ostream* debug_csv = nullptr) const {
    if (frames.empty()) throw std::invalid_argument("encode: no frames");
    if (frames.size() > 0xFFFF) throw std::invalid_argument("encode: at most 65535 frames");
    if (intra_period < 1 || intra_period > 255) throw std::invalid_argument("encode: intra period must be in [1, 255]");
    const double lambda = lambda_for(lambda_idx);
    const int h = frames[0].h(), w = frames[0].w();
    if (h > 0xFFFF || w > 0xFFFF) throw std::invalid_argument("encode: frame too large for the container");
    const int hp = padded(h), wp = padded(w);
    nn::NoGradGuard ng;
    CodedSequence out;
    out.stream.header = {static_cast<std::uint16_t>(w), static_cast<std::uint16_t>(h),
                         static_cast<std::uint8_t>(intra_period), static_cast<std::uint8_t>(lambda_idx)};
    const auto types = evalkit::gop_schedule(static_cast<int>(frames.size()), intra_period, scene_cuts);
    if (debug_csv) *debug_csv << "frame,xc_mean,xc_psnr,mask_mean,mask_min,mask_max,c1_mean_abs,c2_mean_abs,c3_mean_abs\n";
    tempbuf::BufferState<T> state;
    for (std::size_t t = 0; t < frames.size(); ++t) {
      if (frames[t].shape() != frames[0].shape()) throw std::invalid_argument("encode: frame sizes differ");
      const Var<T> x = nn::pad_replicate(Var<T>::constant(frames[t]), hp, wp);
      entropy::FrameRecord rec;
      rec.type = types[t];
      CodedFrame cf;
      cf.type = types[t];
      Var<T> recon;
      if (types[t] == entropy::FrameType::kIntra) {
        entropy::PayloadWriter pw;
        const auto s = intra_.hyper().encode(intra_.encode(x, lambda), pw);
        rec.inter = pw.finish();
        cf.estimated_bits = s.estimated_bits;
        recon = intra_.decode(Var<T>::constant(s.y_hat), lambda);
        state = initial_state(recon);
      } else {
        const Var<T> flow = me_(x, state.decoded_frame);
        const Var<T> mctx = motion_context(state, hp, wp, nullptr);
        const Var<T> mcond = motion_.conditioned() ? motion_.entropy_condition(mctx) : Var<T>();
        entropy::PayloadWriter mw;
        const auto ms = motion_.hyper().encode(motion_.encode(flow, mctx, lambda).y, mw, mcond.defined() ? &mcond : nullptr);
        rec.motion = mw.finish();
        const auto mdec = motion_.decode(Var<T>::constant(ms.y_hat), mctx, lambda);
        const auto pred = tcm_(state, mdec.flow, lambda);
        const Var<T> m = mask_(mask_flow(state, mdec.flow), pred.x_c);
        const Var<T> icond = inter_.conditioned() ? inter_.entropy_condition(pred.ctx) : Var<T>();
        entropy::PayloadWriter iw;
        const auto is = inter_.hyper().encode(
            inter_.encode(intercodec::masked_residual(x, pred.x_c, m), pred.ctx, lambda).y, iw,
            icond.defined() ? &icond : nullptr);
        rec.inter = iw.finish();
        cf.estimated_bits = ms.estimated_bits + is.estimated_bits;
        const auto idec = inter_.decode(Var<T>::constant(is.y_hat), pred.ctx, m, pred.x_c, lambda);
        recon = idec.frame;
        if (debug_csv) dump_debug(*debug_csv, static_cast<int>(t), x, pred, m, h, w);
        state = tempbuf::advance(cfg_.buffer, state, {idec.frame, mdec.flow, idec.features, mdec.features});
      }
      cf.actual_bits = 8 * (rec.motion.size() + rec.inter.size());
      out.frames.push_back(cf);
      out.stream.frames.push_back(std::move(rec));
      out.recon.push_back(nn::crop(recon, h, w).value());
    }
    return out;
  }

  /// Reconstructs frames from the bitstream alone.
  std::vector<Tensor<T>> decode_sequence(const entropy::Bitstream& bs) const {
    const int h = bs.header.height, w = bs.header.width;
    if (h <= 0 || w <= 0) throw std::invalid_argument("decode: empty frame size in header");
    const int hp = padded(h), wp = padded(w);
    const double lambda = lambda_for(bs.header.lambda_index);
    nn::NoGradGuard ng;
    std::vector<Tensor<T>> out;
    tempbuf::BufferState<T> state;
    const nn::Shape my{1, cfg_.motion.latent_channels, hp / 16, wp / 16};
    const nn::Shape iy{1, cfg_.inter.latent_channels, hp / 16, wp / 16};
    const nn::Shape ay{1, cfg_.intra.latent_channels, hp / 16, wp / 16};
    for (std::size_t t = 0; t < bs.frames.size(); ++t) {
      const auto& rec = bs.frames[t];
      Var<T> recon;
      if (rec.type == entropy::FrameType::kIntra) {
        entropy::PayloadReader pr(rec.inter);
        const auto s = intra_.hyper().decode(ay, pr);
        recon = intra_.decode(Var<T>::constant(s.y_hat), lambda);
        state = initial_state(recon);
      } else {
        if (state.empty()) throw entropy::CorruptStream("decode: P frame " + std::to_string(t) + " before any I frame");
        const Var<T> mctx = motion_context(state, hp, wp, nullptr);
        const Var<T> mcond = motion_.conditioned() ? motion_.entropy_condition(mctx) : Var<T>();
        entropy::PayloadReader mr(rec.motion);
        const auto ms = motion_.hyper().decode(my, mr, mcond.defined() ? &mcond : nullptr);
        const auto mdec = motion_.decode(Var<T>::constant(ms.y_hat), mctx, lambda);
        const auto pred = tcm_(state, mdec.flow, lambda);
        const Var<T> m = mask_(mask_flow(state, mdec.flow), pred.x_c);
        const Var<T> icond = inter_.conditioned() ? inter_.entropy_condition(pred.ctx) : Var<T>();
        entropy::PayloadReader ir(rec.inter);
        const auto is = inter_.hyper().decode(iy, ir, icond.defined() ? &icond : nullptr);
        const auto idec = inter_.decode(Var<T>::constant(is.y_hat), pred.ctx, m, pred.x_c, lambda);
        recon = idec.frame;
        state = tempbuf::advance(cfg_.buffer, state, {idec.frame, mdec.flow, idec.features, mdec.features});
      }
      out.push_back(nn::crop(recon, h, w).value());
    }
    return out;
  }

  double lambda_for(int lambda_idx) const {
    if (lambda_idx < 0 || lambda_idx >= trainer::RateControl::kAnchors)
      throw std::out_of_range("lambda index " + std::to_string(lambda_idx) + " outside [0, " +
                              std::to_string(trainer::RateControl::kAnchors - 1) + "]");
    return cfg_.rate.anchor(lambda_idx);
  }

  // ------------------------------------------------------------- complexity

  /// Layers executed when encoding one P frame (closed loop, so the decoder
  /// path is included) and when decoding one.
  void p_frame_layers(std::vector<nn::LayerInfo>& enc, std::vector<nn::LayerInfo>& dec) const {
    std::vector<nn::LayerInfo> me, m_enc, m_shared, tcm, mask, i_enc, i_shared;
    me_.layers(me, "me");
    motion_.layers(m_enc, m_shared, "motion");
    tcm_.layers(tcm, "tcm");
    mask_.layers(mask, "mask");
    inter_.layers(i_enc, i_shared, "inter");
    for (const auto* part : {&me, &m_enc, &m_shared, &tcm, &mask, &i_enc, &i_shared})
      enc.insert(enc.end(), part->begin(), part->end());
    for (const auto* part : {&m_shared, &tcm, &mask, &i_shared}) dec.insert(dec.end(), part->begin(), part->end());
  }

  void intra_layers(std::vector<nn::LayerInfo>& enc, std::vector<nn::LayerInfo>& dec) const {
    std::vector<nn::LayerInfo> e, shared;
    intra_.layers(e, shared, "intra");
    enc.insert(enc.end(), e.begin(), e.end());
    enc.insert(enc.end(), shared.begin(), shared.end());
    dec.insert(dec.end(), shared.begin(), shared.end());
  }

  // Direct access for tests and tooling.
  const motioncodec::MotionEstimator<T>& estimator() const { return me_; }
  const motioncodec::MotionCodec<T>& motion_codec() const { return motion_; }
  const intercodec::TemporalContextMiner<T>& context_miner() const { return tcm_; }
  const intercodec::MaskGenerator<T>& mask_generator() const { return mask_; }
  const intercodec::InterCodec<T>& inter_codec() const { return inter_; }
  const intercodec::IntraCodec<T>& intra_codec() const { return intra_; }

 private:
  tempbuf::BufferState<T> initial_state(const Var<T>& frame) const {
    return tempbuf::reset_at_intra(cfg_.buffer, frame);
  }

  static Var<T> zeros_like_bank(const Var<T>& v) { return Var<T>::constant(Tensor<T>(v.shape())); }

  // Cuts the frame and flow references. The banks were produced from a
  // detached trunk, so they only link back to the feature convs.
  static tempbuf::BufferState<T> truncated(const tempbuf::BufferState<T>& s) {
    return {s.decoded_frame.detach(), s.decoded_flow.detach(), s.inter_features, s.motion_features};
  }

  Var<T> motion_context(const tempbuf::BufferState<T>& s, int h, int w, tempbuf::BufferReads* reads) const {
    motioncodec::MotionPriors<T> p;
    if (cfg_.buffer.motion_explicit) p.flow = &s.decoded_flow;
    if (cfg_.buffer.motion_implicit.enabled()) p.features = &s.motion_features;
    return motion_.context(p, h, w, reads);
  }

  const Var<T>& mask_flow(const tempbuf::BufferState<T>& s, const Var<T>& current) const {
    return cfg_.inter.mask_uses_current_flow ? current : s.decoded_flow;
  }

  static double mean_abs(const Tensor<T>& t) {
    double s = 0;
    for (T v : t.span()) s += std::abs(static_cast<double>(v));
    return s / static_cast<double>(t.size());
  }

  void dump_debug(std::ostream& os, int t, const Var<T>& x, const intercodec::Prediction<T>& pred, const Var<T>& m,
                  int h, int w) const {
    const auto& mv = m.value();
    double mean = 0, lo = 1, hi = 0;
    for (T v : mv.span()) {
      mean += v;
      lo = std::min(lo, static_cast<double>(v));
      hi = std::max(hi, static_cast<double>(v));
    }
    mean /= static_cast<double>(mv.size());
    const auto xc = nn::crop(pred.x_c, h, w).value();
    double xc_mean = 0;
    for (T v : xc.span()) xc_mean += v;
    xc_mean /= static_cast<double>(xc.size());
    os << t << ',' << xc_mean << ',' << evalkit::psnr_rgb(xc, nn::crop(x, h, w).value()) << ',' << mean << ',' << lo
       << ',' << hi << ',' << mean_abs(pred.ctx.c1.value()) << ',' << mean_abs(pred.ctx.c2.value()) << ','
       << mean_abs(pred.ctx.c3.value()) << '\n';
  }

  ModelConfig cfg_;
  motioncodec::MotionEstimator<T> me_;
  motioncodec::MotionCodec<T> motion_;
  intercodec::TemporalContextMiner<T> tcm_;
  intercodec::MaskGenerator<T> mask_;
  intercodec::InterCodec<T> inter_;
  intercodec::IntraCodec<T> intra_;
};

}  // namespace hytip::codec
