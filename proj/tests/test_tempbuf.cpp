#include <gtest/gtest.h>

#include "hytip/tempbuf/buffer.hpp"

using namespace hytip;
using namespace hytip::tempbuf;
using nn::Tensor;
using nn::Var;

namespace {

double motion_maps(const std::string& m) { return BufferConfig::parse(m, "3+0").motion_equivalents(); }
double inter_maps(const std::string& i) { return BufferConfig::parse("2+0", i).inter_equivalents(); }

Var<float> filled(nn::Shape s, float v) { return Var<float>::constant(Tensor<float>(s, v)); }

}  // namespace

TEST(BufferAccounting, TableValues) {
  EXPECT_EQ(motion_maps("2+0"), 2.0);
  EXPECT_EQ(inter_maps("3+0"), 3.0);
  EXPECT_EQ(motion_maps("0+4"), 4.0);
  EXPECT_EQ(motion_maps("0+2.125"), 2.125);
  EXPECT_EQ(motion_maps("2+4"), 6.0);
  EXPECT_EQ(motion_maps("2+0.125"), 2.125);
  EXPECT_EQ(inter_maps("0+51"), 51.0);
  EXPECT_EQ(inter_maps("0+5"), 5.0);
  EXPECT_EQ(inter_maps("3+48"), 51.0);
  EXPECT_EQ(inter_maps("3+2"), 5.0);
}

TEST(BufferAccounting, HybridChannelsAndScale) {
  const auto c = BufferConfig::parse("2+0.125", "3+2");
  EXPECT_EQ(c.motion_implicit.channels, 2);
  EXPECT_EQ(c.motion_implicit.scale, 0.25);
  EXPECT_EQ(c.inter_implicit.channels, 2);
  EXPECT_EQ(c.inter_implicit.scale, 1.0);
  EXPECT_EQ(buffer_equivalents(c, false), 7.125);
  EXPECT_EQ(c.motion_notation(), "2+0.125");
  EXPECT_EQ(c.inter_notation(), "3+2");
  const auto d = BufferConfig::parse("0+4@1", "3+0");
  EXPECT_EQ(d.motion_implicit.channels, 4);
  EXPECT_EQ(d.motion_notation(), "0+4@1/1");
}

TEST(BufferAccounting, SystemTotalAddsEntropyTerm) {
  auto c = BufferConfig::parse("2+0.125", "3+2", 0.75);
  EXPECT_EQ(system_buffer_total(c), 7.875);
  EXPECT_GE(buffer_equivalents(c, true), buffer_equivalents(c, false));
  c.entropy_extra = 0;
  EXPECT_EQ(system_buffer_total(c), buffer_equivalents(c, false));
}

TEST(BufferAccounting, RejectsInvalidConfigs) {
  EXPECT_THROW(BufferConfig::parse("0+0", "3+2"), std::invalid_argument);
  EXPECT_THROW(BufferConfig::parse("2+0", "0+0"), std::invalid_argument);
  EXPECT_THROW(BufferConfig::parse("1+0", "3+0"), std::invalid_argument);
  EXPECT_THROW(BufferConfig::parse("2+0.1", "3+0"), std::invalid_argument);
  EXPECT_THROW(BufferConfig::parse("2+1@1/3", "3+0"), std::invalid_argument);
  EXPECT_THROW(BufferConfig::parse("2", "3+0"), std::invalid_argument);
}

TEST(BufferState, AdvanceFiltersByConfig) {
  const auto explicit_only = BufferConfig::parse("2+0", "3+0");
  BufferState<float> s0 = reset_at_intra(explicit_only, filled({1, 3, 16, 16}, 0.5f));
  FrameOutputs<float> out{filled({1, 3, 16, 16}, 0.25f), filled({1, 2, 16, 16}, 1.0f), {}, {}};
  const auto s1 = advance(explicit_only, s0, out);
  EXPECT_EQ(s1.decoded_frame.value()[0], 0.25f);
  EXPECT_FALSE(s1.inter_features.defined());
  EXPECT_FALSE(s1.motion_features.defined());
  EXPECT_EQ(s0.decoded_frame.value()[0], 0.5f);  // previous state untouched
  const auto s2 = advance(explicit_only, s0, out);
  EXPECT_EQ(s2.decoded_frame.value(), s1.decoded_frame.value());

  out.inter_features = filled({1, 2, 16, 16}, 0.0f);
  EXPECT_THROW(advance(explicit_only, s0, out), std::invalid_argument);
}

TEST(BufferState, HybridRequiresBanks) {
  const auto hybrid = BufferConfig::parse("2+0.125", "3+2");
  const auto s0 = reset_at_intra(hybrid, filled({1, 3, 16, 16}, 0.5f));
  FrameOutputs<float> out{filled({1, 3, 16, 16}, 0.2f), filled({1, 2, 16, 16}, 0.0f), {},
                          filled({1, 2, 4, 4}, 0.0f)};
  try {
    advance(hybrid, s0, out);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("inter feature bank"), std::string::npos);
  }
  out.inter_features = filled({1, 2, 8, 8}, 0.0f);
  EXPECT_THROW(advance(hybrid, s0, out), std::invalid_argument);
  out.inter_features = filled({1, 2, 16, 16}, 0.0f);
  EXPECT_NO_THROW(advance(hybrid, s0, out));
}

TEST(BufferState, ResetZeroesFlowAndBanks) {
  const auto hybrid = BufferConfig::parse("2+0.125", "3+2");
  const auto s = reset_at_intra(hybrid, filled({1, 3, 32, 64}, 0.7f));
  EXPECT_EQ(s.decoded_flow.shape(), (nn::Shape{1, 2, 32, 64}));
  EXPECT_EQ(s.inter_features.shape(), (nn::Shape{1, 2, 32, 64}));
  EXPECT_EQ(s.motion_features.shape(), (nn::Shape{1, 2, 8, 16}));
  for (const auto* v : {&s.decoded_flow, &s.inter_features, &s.motion_features})
    for (float x : v->value().span()) EXPECT_EQ(x, 0.0f);
  EXPECT_EQ(s.decoded_frame.value()[5], 0.7f);
}
