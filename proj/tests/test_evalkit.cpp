#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hytip/codec/analysis.hpp"
#include "hytip/evalkit/bdrate.hpp"
#include "hytip/evalkit/gop.hpp"
#include "hand_count.hpp"

using namespace hytip;
using namespace hytip::evalkit;
using nn::Tensor;

namespace {

Tensor<double> filled(int h, int w, double v) {
  Tensor<double> t({1, 3, h, w});
  for (auto& x : t.span()) x = v;
  return t;
}

// Same pattern as tests/oracles/ms_ssim_reference.py.
std::pair<Tensor<double>, Tensor<double>> oracle_pattern(int h, int w) {
  Tensor<double> a({1, 3, h, w}), b({1, 3, h, w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double v = 0.5 + 0.4 * std::sin(0.3 * x + c) * std::cos(0.2 * y - c);
        a.at(0, c, y, x) = v;
        b.at(0, c, y, x) = std::clamp(v + 0.05 * std::cos(0.7 * x + 0.3 * y), 0.0, 1.0);
      }
  return {a, b};
}

std::vector<RDPoint> curve(const std::vector<double>& bpp, const std::vector<double>& psnr) {
  std::vector<RDPoint> out;
  for (std::size_t i = 0; i < bpp.size(); ++i) {
    RDPoint p;
    p.lambda_idx = static_cast<int>(i);
    p.bpp = bpp[i];
    p.psnr_rgb = psnr[i];
    p.ms_ssim = 0.9 + 0.01 * static_cast<double>(i);
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST(Psnr, KnownValuesAndCap) {
  EXPECT_DOUBLE_EQ(psnr_rgb(filled(8, 8, 0.5), filled(8, 8, 0.5)), 100.0);
  // Uniform error 0.1 -> MSE 0.01 -> 20 dB.
  EXPECT_NEAR(psnr_rgb(filled(8, 8, 0.5), filled(8, 8, 0.6)), 20.0, 1e-9);
  auto a = filled(4, 4, 0.0), b = filled(4, 4, 0.0);
  b[0] = 1.0;  // one of 48 samples off by 1
  EXPECT_NEAR(psnr_rgb(a, b), 10.0 * std::log10(48.0), 1e-9);
  EXPECT_THROW(psnr_rgb(filled(4, 4, 0), filled(4, 8, 0)), std::invalid_argument);
}

TEST(MsSsim, MatchesReferenceImplementation) {
  // Values from tests/oracles/ms_ssim_reference.py.
  const auto [a, b] = oracle_pattern(48, 64);
  EXPECT_NEAR(ms_ssim(a, b), 0.982971728165, 1e-9);
  const auto [c, d] = oracle_pattern(176, 176);
  EXPECT_NEAR(ms_ssim(c, d), 0.989076397782, 1e-9);
}

TEST(MsSsim, IdentitySymmetryAndScaleCount) {
  const auto [a, b] = oracle_pattern(48, 64);
  EXPECT_NEAR(ms_ssim(a, a), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(ms_ssim(a, b), ms_ssim(b, a));
  EXPECT_EQ(ms_ssim_scales(48, 64), 3);
  EXPECT_EQ(ms_ssim_scales(176, 176), 5);
  EXPECT_EQ(ms_ssim_scales(11, 40), 1);
  EXPECT_THROW(ms_ssim_scales(10, 40), std::invalid_argument);
  // Inverted checkerboard: the fine-scale negative correlation is clipped to
  // ~0; the coarse scale sees two uniform grays and scores 1.
  Tensor<double> cb({1, 3, 32, 32}), inv({1, 3, 32, 32});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        cb.at(0, c, y, x) = (x + y) % 2;
        inv.at(0, c, y, x) = 1 - (x + y) % 2;
      }
  EXPECT_LT(ms_ssim(cb, inv), 0.1);
  EXPECT_GT(ms_ssim(cb, inv), 0.0);
}

TEST(Rate, BitsPerPixel) {
  EXPECT_DOUBLE_EQ(bpp(1920.0 * 1024 * 0.05, 1920, 1024), 0.05);
  EXPECT_THROW(bpp(1.0, 0, 4), std::invalid_argument);
}

TEST(RdPoint, FlatMeanOverFrames) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<FrameRecord> frames;
  // Two sequences of different lengths: the flat frame mean differs from the
  // mean of per-sequence means.
  for (int i = 0; i < 10; ++i) frames.push_back({"uvg", "a", i, 2, u(rng), 30 + u(rng), 0.9 + 0.1 * u(rng)});
  for (int i = 0; i < 3; ++i) frames.push_back({"uvg", "b", i, 2, 5 + u(rng), 40 + u(rng), 0.5 * u(rng)});
  double sb = 0, sp = 0, sm = 0;
  for (const auto& f : frames) {
    sb += f.bpp;
    sp += f.psnr_rgb;
    sm += f.ms_ssim;
  }
  const auto p = dataset_rd_point(frames);
  EXPECT_NEAR(p.bpp, sb / 13, 1e-12);
  EXPECT_NEAR(p.psnr_rgb, sp / 13, 1e-12);
  EXPECT_NEAR(p.ms_ssim, sm / 13, 1e-12);
  EXPECT_EQ(p.frames, 13u);
  EXPECT_TRUE(p.sequence.empty());
  EXPECT_THROW(dataset_rd_point({}), std::invalid_argument);
  frames.push_back({"uvg", "a", 0, 3, 1, 1, 1});
  EXPECT_EQ(dataset_curve(frames).size(), 2u);
}

TEST(Gop, IntraPeriodAndSceneCuts) {
  EXPECT_EQ(intra_indices(gop_schedule(96, 32)), (std::vector<int>{0, 32, 64}));
  EXPECT_EQ(intra_indices(gop_schedule(96, 32, {50})), (std::vector<int>{0, 32, 50, 82}));
  EXPECT_EQ(gop_schedule(1, 32), std::vector<FrameType>{FrameType::kIntra});
  EXPECT_EQ(gop_schedule(96, 32).size(), 96u);
  EXPECT_THROW(gop_schedule(10, 32, {10}), std::invalid_argument);
  EXPECT_THROW(gop_schedule(0, 32), std::invalid_argument);
}

TEST(BdRate, IdentityAndConstantOffset) {
  const auto a = curve({0.05, 0.1, 0.2, 0.4}, {30, 33, 36, 39});
  EXPECT_NEAR(bd_rate(a, a), 0.0, 1e-12);
  auto t = a;
  for (auto& p : t) p.bpp *= 0.9;
  EXPECT_NEAR(bd_rate(a, t), -10.0, 0.01);
  auto worse = a;
  for (auto& p : worse) p.bpp *= 1.2;
  EXPECT_GT(bd_rate(a, worse), 0.0);
  EXPECT_NEAR(bd_rate(a, t, QualityAxis::kMsSsim), -10.0, 0.01);
}

TEST(BdRate, CrossingCurvesMatchDenseOracle) {
  // Oracle: tests/oracles/bd_rate_reference.py (scipy PCHIP, 10^4-point
  // trapezoid).
  const auto a = curve({0.05, 0.10, 0.20, 0.40, 0.80}, {30.0, 32.6, 35.1, 37.3, 39.2});
  const auto t = curve({0.04, 0.09, 0.21, 0.45, 0.95}, {29.5, 32.4, 35.3, 37.6, 39.8});
  const double oracle = -2.626672236;
  EXPECT_NEAR(bd_rate(a, t), oracle, std::abs(oracle) * 5e-4);
}

TEST(BdRate, Rejections) {
  const auto a = curve({0.05, 0.1, 0.2, 0.4}, {30, 33, 36, 39});
  EXPECT_THROW(bd_rate(a, curve({0.1, 0.2, 0.3}, {30, 31, 32})), std::invalid_argument);
  EXPECT_THROW(bd_rate(a, curve({0.1, 0.2, 0.3, 0.4}, {40, 41, 42, 43})), std::invalid_argument);
  EXPECT_THROW(bd_rate(a, curve({0.1, 0.0, 0.3, 0.4}, {30, 31, 32, 33})), std::invalid_argument);
}

TEST(Complexity, SingleLayerGoldenValues) {
  LayerInfo l{"c", "conv", 16, 32, 3, 1, 1, 1};
  EXPECT_DOUBLE_EQ(kmacs_per_pixel(count_macs({l}, 64, 64), 64, 64), 4.608);
  l.stride = 2;
  EXPECT_DOUBLE_EQ(kmacs_per_pixel(count_macs({l}, 64, 64), 64, 64), 1.152);
  EXPECT_EQ(count_macs({LayerInfo{"f", "fc", 100, 10}}, 64, 64), 1000u);
  EXPECT_THROW(count_macs({LayerInfo{"x", "lstm", 1, 1}}, 8, 8), std::invalid_argument);
}

TEST(Complexity, DefaultModelMatchesHandCount) {
  const int S = 256;
  const auto hc = testutil::hand_count_default(S);
  const std::uint64_t enc = hc.enc, dec = hc.dec;
  codec::Model<float> m(codec::ModelConfig::defaults(), 1);
  std::vector<LayerInfo> e, d;
  m.p_frame_layers(e, d);
  EXPECT_EQ(e.size(), hc.layers);
  EXPECT_EQ(count_macs(e, S, S), enc);
  EXPECT_EQ(count_macs(d, S, S), dec);

  const auto rep = codec::model_complexity(m, S, S);
  EXPECT_DOUBLE_EQ(rep.enc_kmacs_per_pixel, enc / double(S * S) / 1000.0);
  EXPECT_GT(rep.enc_kmacs_per_pixel, rep.dec_kmacs_per_pixel);
  EXPECT_DOUBLE_EQ(rep.buffer_system, 7.875);
}

TEST(Complexity, ParameterCount) {
  nn::Param<float> a(Tensor<float>({2, 3, 4, 5})), b(Tensor<float>({1, 10, 1, 1}));
  nn::ParamList<float> ps{{"a", "x", &a}, {"b", "intra", &b}};
  EXPECT_DOUBLE_EQ(count_params(ps), 130e-6);
  EXPECT_DOUBLE_EQ(count_params(ps, "intra"), 120e-6);
  codec::Model<float> m(codec::ModelConfig::defaults(), 1);
  std::size_t n = 0;
  for (const auto& np : m.parameters()) n += np.param->value().size();
  const auto rep = codec::model_complexity(m, 64, 64);
  EXPECT_NEAR(rep.params_millions + rep.intra_params_millions, n / 1e6, 1e-12);
}
