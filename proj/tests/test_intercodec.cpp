#include <gtest/gtest.h>

#include <random>

#include "hytip/intercodec/inter.hpp"

using namespace hytip;
using namespace hytip::intercodec;
using nn::Tensor;
using nn::Var;

namespace {

Var<float> random_var(nn::Shape s, std::mt19937_64& rng, float lo = 0.0f, float hi = 1.0f) {
  Tensor<float> t(s);
  std::uniform_real_distribution<float> d(lo, hi);
  for (auto& v : t.span()) v = d(rng);
  return Var<float>::constant(t);
}

tempbuf::BufferState<float> state(const tempbuf::BufferConfig& c, std::mt19937_64& rng, int h, int w) {
  auto s = tempbuf::reset_at_intra(c, random_var({1, 3, h, w}, rng));
  if (s.inter_features.defined()) s.inter_features = random_var(s.inter_features.shape(), rng, -1, 1);
  return s;
}

}  // namespace

TEST(MaskedResidual, MatchesElementwiseFormula) {
  std::mt19937_64 rng(1);
  const auto x = random_var({1, 3, 4, 4}, rng), xc = random_var({1, 3, 4, 4}, rng), m = random_var({1, 3, 4, 4}, rng);
  const auto r = masked_residual(x, xc, m);
  for (std::size_t i = 0; i < r.value().size(); ++i)
    EXPECT_NEAR(r.value()[i], x.value()[i] - m.value()[i] * xc.value()[i], 1e-6);
  EXPECT_THROW(masked_residual(x, random_var({1, 3, 4, 8}, rng), m), std::invalid_argument);
}

TEST(MaskGenerator, SharedAcrossColourAndHalfAtInit) {
  std::mt19937_64 rng(2);
  MaskGenerator<float> gen(16, rng);
  const auto m = gen(random_var({1, 2, 16, 16}, rng, -2, 2), random_var({1, 3, 16, 16}, rng));
  ASSERT_EQ(m.shape(), (nn::Shape{1, 3, 16, 16}));
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      EXPECT_FLOAT_EQ(m.value().at(0, 0, y, x), 0.5f);
      EXPECT_EQ(m.value().at(0, 1, y, x), m.value().at(0, 0, y, x));
      EXPECT_EQ(m.value().at(0, 2, y, x), m.value().at(0, 0, y, x));
    }
  EXPECT_THROW(gen(random_var({1, 2, 8, 8}, rng), random_var({1, 3, 16, 16}, rng)), std::invalid_argument);
}

TEST(ContextMiner, ExplicitPredictorStartsAtWarpedFrame) {
  std::mt19937_64 rng(3);
  const auto buf = tempbuf::BufferConfig::parse("2+0.125", "3+2");
  TemporalContextMiner<float> tcm(InterNetworkSpec{}, true, 2, trainer::RateControl::psnr(), rng);
  const auto s = state(buf, rng, 32, 32);
  const auto flow = random_var({1, 2, 32, 32}, rng, -1.5f, 1.5f);
  tempbuf::BufferReads reads;
  const auto p = tcm(s, flow, 227.0, &reads);
  EXPECT_TRUE(reads.frame);
  EXPECT_TRUE(reads.inter_features);
  EXPECT_EQ(p.ctx.c1.shape(), (nn::Shape{1, 16, 32, 32}));
  EXPECT_EQ(p.ctx.c2.shape(), (nn::Shape{1, 24, 16, 16}));
  EXPECT_EQ(p.ctx.c3.shape(), (nn::Shape{1, 32, 8, 8}));
  const auto warped = nn::warp(s.decoded_frame, flow);
  for (std::size_t i = 0; i < warped.value().size(); ++i) EXPECT_NEAR(p.x_c.value()[i], warped.value()[i], 1e-6);
}

TEST(ContextMiner, ImplicitOnlyNeedsNoFrame) {
  std::mt19937_64 rng(4);
  const auto buf = tempbuf::BufferConfig::parse("0+4", "0+5");
  TemporalContextMiner<float> tcm(InterNetworkSpec{}, false, 5, trainer::RateControl::psnr(), rng);
  auto s = state(buf, rng, 32, 32);
  tempbuf::BufferReads reads;
  const auto p = tcm(s, random_var({1, 2, 32, 32}, rng), 500.0, &reads);
  EXPECT_FALSE(reads.frame);
  EXPECT_TRUE(reads.inter_features);
  EXPECT_FALSE(p.warped.defined());
  for (float v : p.x_c.value().span()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  s.inter_features = Var<float>();
  EXPECT_THROW(tcm(s, random_var({1, 2, 32, 32}, rng), 500.0), std::invalid_argument);
}

TEST(InterCodec, ShapesAndFeatureTap) {
  std::mt19937_64 rng(5);
  const auto rc = trainer::RateControl::psnr();
  InterNetworkSpec spec;
  TemporalContextMiner<float> tcm(spec, true, 2, rc, rng);
  InterCodec<float> codec(spec, 2, rc, false, rng);
  const auto s = state(tempbuf::BufferConfig{}, rng, 64, 64);
  const auto p = tcm(s, random_var({1, 2, 64, 64}, rng, -1, 1), 800.0);
  const auto x = random_var({1, 3, 64, 64}, rng);
  const auto m = Var<float>::constant(Tensor<float>({1, 3, 64, 64}, 1.0f));
  const auto lat = codec.encode(masked_residual(x, p.x_c, m), p.ctx, 800.0);
  EXPECT_EQ(lat.y.shape(), (nn::Shape{1, 48, 4, 4}));
  EXPECT_EQ(lat.z.shape(), (nn::Shape{1, 24, 2, 2}));
  const auto dec = codec.decode(lat.y, p.ctx, m, p.x_c, 800.0);
  EXPECT_EQ(dec.frame.shape(), x.shape());
  EXPECT_EQ(dec.features.shape(), (nn::Shape{1, 2, 64, 64}));
  for (float v : dec.frame.value().span()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  auto bad = p.ctx;
  bad.c2 = bad.c3;
  EXPECT_THROW(codec.encode(x, bad, 800.0), std::invalid_argument);
  EXPECT_THROW(codec.decode(lat.y, p.ctx, m, p.x_c, 3000.0), std::out_of_range);
}

TEST(IntraCodec, RoundTripShapes) {
  std::mt19937_64 rng(6);
  IntraCodec<float> intra(IntraNetworkSpec{}, trainer::RateControl::psnr(), rng);
  const auto x = random_var({1, 3, 32, 48}, rng);
  const auto y = intra.encode(x, 227.0);
  EXPECT_EQ(y.shape(), (nn::Shape{1, 48, 2, 3}));
  EXPECT_EQ(intra.decode(y, 227.0).shape(), x.shape());
  EXPECT_THROW(intra.encode(random_var({1, 3, 20, 32}, rng), 227.0), std::invalid_argument);
}
