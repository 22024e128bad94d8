#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "hytip/codec/model.hpp"
#include "hytip/pixelio/sequence.hpp"

using namespace hytip;
using codec::ForwardOptions;
using codec::LossKind;
using codec::Model;
using codec::ModelConfig;
using nn::Tensor;
using nn::Var;

namespace {

std::vector<Var<float>> clip(const pixelio::RawSequence& s, std::size_t n) {
  std::vector<Var<float>> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(Var<float>::constant(s.frames[i]));
  return out;
}

ModelConfig tiny_with(const std::string& motion, const std::string& inter) {
  auto c = ModelConfig::tiny();
  c.buffer = tempbuf::BufferConfig::parse(motion, inter);
  c.sync();
  return c;
}

}  // namespace

TEST(RdLoss, Arithmetic) {
  EXPECT_DOUBLE_EQ(codec::rd_loss(0.1, 0.0, 500.0), 0.1);
  EXPECT_NEAR(codec::rd_loss(0.1, 0.001, 2032.0), 2.132, 1e-12);
  EXPECT_THROW(codec::rd_loss(std::nan(""), 0.0, 500.0), std::domain_error);
  EXPECT_THROW(codec::rd_loss(0.1, INFINITY, 500.0), std::domain_error);
}

TEST(Model, ClipForwardProducesFiniteLoss) {
  Model<float> m(ModelConfig::tiny(), 1);
  const auto seq = pixelio::synth_sequence("global-translation:dx=1,dy=0", 3, 64, 64, 2);
  std::mt19937_64 rng(3);
  ForwardOptions opt;
  opt.rng = &rng;
  for (auto k : {LossKind::kMotionWarp, LossKind::kPrediction, LossKind::kRd, LossKind::kRdMixed}) {
    opt.loss = k;
    const auto r = m.forward_clip(clip(seq, 3), 500.0, opt);
    EXPECT_TRUE(std::isfinite(r.loss.value()[0])) << codec::to_string(k);
    EXPECT_EQ(r.stats.size(), 2u);
  }
}

TEST(Model, RdMixedAveragesPredictionAndReconstruction) {
  Model<double> m(ModelConfig::tiny(), 4);
  const auto seq = pixelio::synth_sequence("global-translation:dx=1,dy=1", 2, 32, 32, 2);
  std::vector<Var<double>> frames;
  for (const auto& f : seq.frames) {
    Tensor<double> t(f.shape());
    for (std::size_t i = 0; i < f.size(); ++i) t[i] = f[i];
    frames.push_back(Var<double>::constant(t));
  }
  ForwardOptions opt;
  opt.quant = entropy::QuantMode::kRound;
  opt.loss = LossKind::kRdMixed;
  const auto r = m.forward_clip(frames, 800.0, opt);
  const auto& s = r.stats[0];
  EXPECT_NEAR(s.loss, s.bpp + 800.0 * (s.d_pred + s.d_recon) / 2, 1e-9);
}

TEST(Model, BufferStrategiesReadTheirFields) {
  const auto seq = pixelio::synth_sequence("global-translation:dx=1,dy=0", 2, 32, 32, 5);
  struct Case {
    const char* motion;
    const char* inter;
    tempbuf::BufferReads expect;
  };
  const Case cases[] = {
      {"2+0", "3+0", {true, true, false, false}},
      {"0+4", "0+5", {false, false, true, true}},
      {"2+0.125", "3+2", {true, true, true, true}},
  };
  for (const auto& c : cases) {
    Model<float> m(tiny_with(c.motion, c.inter), 2);
    std::mt19937_64 rng(1);
    ForwardOptions opt;
    opt.rng = &rng;
    const auto r = m.forward_clip(clip(seq, 2), 500.0, opt);
    EXPECT_EQ(r.reads, c.expect) << c.motion << " / " << c.inter;
  }
}

TEST(Model, EpaControlsGradientThroughReconstructions) {
  Model<float> m(ModelConfig::tiny(), 9);
  const auto seq = pixelio::synth_sequence("global-translation:dx=1,dy=0", 5, 32, 32, 6);
  for (bool epa : {true, false}) {
    std::mt19937_64 rng(2);
    ForwardOptions opt;
    opt.rng = &rng;
    opt.epa = epa;
    const auto r = m.forward_clip(clip(seq, 5), 500.0, opt);
    ASSERT_EQ(r.frame_losses.size(), 4u);
    r.recon[0].retain_grad();
    nn::backward(r.frame_losses[3]);
    const auto& g = r.recon[0].grad();
    double norm = 0;
    for (float v : g.span()) norm += std::abs(v);
    if (epa)
      EXPECT_GT(norm, 0.0);
    else
      EXPECT_EQ(norm, 0.0);
    auto params = m.parameters();
    nn::zero_grad(params);
  }
}

TEST(Model, EncodeDecodeBitExact) {
  Model<float> m(ModelConfig::tiny(), 7);
  const auto seq = pixelio::synth_sequence("global-translation:dx=1,dy=0", 6, 64, 64, 8);
  std::ostringstream dbg;
  const auto coded = m.encode_sequence(seq.frames, 2, 4, {}, &dbg);
  ASSERT_EQ(coded.frames.size(), 6u);
  EXPECT_EQ(coded.stream.frames[0].type, entropy::FrameType::kIntra);
  EXPECT_EQ(coded.stream.frames[4].type, entropy::FrameType::kIntra);
  EXPECT_EQ(coded.stream.frames[1].type, entropy::FrameType::kInter);
  const auto parsed = entropy::Bitstream::parse(coded.stream.serialize());
  const auto dec = m.decode_sequence(parsed);
  ASSERT_EQ(dec.size(), 6u);
  for (std::size_t t = 0; t < dec.size(); ++t) EXPECT_EQ(dec[t], coded.recon[t]) << "frame " << t;
  for (const auto& f : coded.frames)
    EXPECT_LE(std::abs(static_cast<double>(f.actual_bits) - f.estimated_bits), 0.02 * f.estimated_bits + 64);
  EXPECT_NE(dbg.str().find("mask_mean"), std::string::npos);
}

TEST(Model, LayerTablesCoverEncoderAndDecoder) {
  Model<float> m(ModelConfig::defaults(), 1);
  std::vector<nn::LayerInfo> enc, dec;
  m.p_frame_layers(enc, dec);
  EXPECT_GT(enc.size(), dec.size());
  EXPECT_THROW(m.lambda_for(4), std::out_of_range);
}
