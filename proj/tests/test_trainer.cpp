#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hytip/trainer/gradcheck.hpp"
#include "hytip/trainer/train.hpp"

using namespace hytip;
using trainer::PhaseSpec;

namespace {

std::string temp_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("hytip_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

trainer::TrainOptions quick() {
  trainer::TrainOptions o;
  o.steps_per_epoch = 3;
  o.batch = 1;
  o.eval_clips = 2;
  o.epoch_factor = 0.01;
  return o;
}

std::vector<nn::Tensor<float>> weights(codec::Model<float>& m) {
  std::vector<nn::Tensor<float>> w;
  for (const auto& np : m.parameters()) w.push_back(np.param->value());
  return w;
}

bool bit_equal(const nn::Tensor<float>& a, const nn::Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

int index_of(const std::vector<PhaseSpec>& s, const std::string& name) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i].name == name) return static_cast<int>(i);
  return -1;
}

}  // namespace

TEST(Schedule, DefaultOrderFollowsTheTable) {
  const auto s = trainer::default_schedule();
  for (const auto& p : s) EXPECT_NO_THROW(p.validate()) << p.name;
  const std::vector<std::string> order{"motion-coding",       "motion-compensation", "inter-coding",
                                       "fine-tune-explicit",  "feature-generation",  "epa-1",
                                       "variable-rate-gains", "long-sequence-7f",    "long-sequence-10f"};
  int prev = -1;
  for (const auto& n : order) {
    const int i = index_of(s, n);
    ASSERT_GE(i, 0) << n;
    EXPECT_GT(i, prev) << n;
    prev = i;
  }
  EXPECT_EQ(s.front().name, "intra");
  EXPECT_EQ(s[index_of(s, "motion-coding")].loss, codec::LossKind::kMotionWarp);
  EXPECT_EQ(s[index_of(s, "motion-compensation")].loss, codec::LossKind::kPrediction);
  EXPECT_EQ(s[index_of(s, "motion-compensation-rd")].loss, codec::LossKind::kRdMixed);
  EXPECT_EQ(s[index_of(s, "long-sequence-10f")].n_frames, 10);
  EXPECT_DOUBLE_EQ(s[index_of(s, "long-sequence-10f")].lr, 1e-6);
  EXPECT_EQ(s[index_of(s, "inter-coding")].n_frames, 2);
  // The explicit-reference rows hold the banks at zero and never train the
  // feature convs; every EPA row keeps the graph.
  for (const auto& p : s) {
    if (index_of(s, p.name) < index_of(s, "feature-generation")) {
      EXPECT_FALSE(p.implicit_refs) << p.name;
      EXPECT_EQ(p.trainable.count("feature_conv"), 0u) << p.name;
    }
    if (p.name.find("epa") != std::string::npos) EXPECT_TRUE(p.epa) << p.name;
    if (p.name.find("long") != std::string::npos) EXPECT_TRUE(p.trainable.count("gains")) << p.name;
  }
  EXPECT_EQ(s[index_of(s, "variable-rate-gains")].trainable, std::set<std::string>{"gains"});
}

TEST(Schedule, PhaseValidation) {
  PhaseSpec p;
  p.name = "x";
  p.trainable = {"tcm"};
  EXPECT_NO_THROW(p.validate());
  auto bad = p;
  bad.n_frames = 1;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = p;
  bad.trainable.clear();
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = p;
  bad.lr = 0;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  bad = p;
  bad.trainable = {"decoder"};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(Schedule, JsonRoundTripAndUnknownKeys) {
  const auto s = trainer::default_schedule();
  const auto back = trainer::schedule_from_json(trainer::schedule_to_json(s));
  ASSERT_EQ(back.size(), s.size());
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(trainer::to_json(back[i]), trainer::to_json(s[i]));
  auto j = trainer::schedule_to_json(s);
  j[1]["learning_rate"] = 1e-3;
  EXPECT_THROW(trainer::schedule_from_json(j), std::invalid_argument);
}

TEST(Trainer, FreezeContractKeepsOtherGroupsBitIdentical) {
  codec::Model<float> m(codec::ModelConfig::tiny(), 3);
  const auto data = trainer::make_training_pool(2, 4, 32, 5);
  auto before = weights(m);
  const auto phase = trainer::default_schedule()[1];  // motion coding
  std::mt19937_64 rng(1);
  trainer::run_phase(m, phase, data, quick(), rng);
  const auto after = weights(m);
  const auto params = m.parameters();
  int changed = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (phase.trainable.count(params[i].group))
      changed += !bit_equal(before[i], after[i]);
    else
      EXPECT_TRUE(bit_equal(before[i], after[i])) << params[i].name;
    EXPECT_TRUE(params[i].param->trainable()) << "trainable flag not restored: " << params[i].name;
  }
  EXPECT_GT(changed, 0);
}

TEST(Trainer, SmokePhaseReducesLoss) {
  codec::Model<float> m(codec::ModelConfig::tiny(), 4);
  const auto data = trainer::make_training_pool(4, 4, 32, 6);
  PhaseSpec p = trainer::default_schedule()[3];  // inter-frame coding, 2 frames
  p.epochs = 1;
  auto o = quick();
  o.epoch_factor = 1;
  o.steps_per_epoch = 500;
  std::mt19937_64 rng(2);
  const auto r = trainer::run_phase(m, p, data, o, rng);
  EXPECT_EQ(r.steps, 500);
  EXPECT_LE(r.final_loss, 0.7 * r.initial_loss) << r.initial_loss << " -> " << r.final_loss;
}

TEST(Trainer, NonFiniteLossAbortsAndRestores) {
  codec::Model<float> m(codec::ModelConfig::tiny(), 5);
  auto data = trainer::make_training_pool(2, 4, 32, 7);
  for (auto& f : data.sequences[1].frames) f[0] = std::nanf("");
  const auto before = weights(m);
  auto o = quick();
  o.eval_clips = 1;  // evaluation reads only the clean sequence
  o.steps_per_epoch = 50;
  std::mt19937_64 rng(3);
  EXPECT_THROW(trainer::run_phase(m, trainer::default_schedule()[3], data, o, rng), trainer::NonFiniteLoss);
  const auto after = weights(m);
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_TRUE(bit_equal(before[i], after[i]));
  for (const auto& np : m.parameters()) EXPECT_TRUE(np.param->trainable());
}

TEST(Trainer, DeskEpochsScaleDownAndKeepOneEpoch) {
  trainer::TrainOptions o;
  PhaseSpec p;
  p.epochs = 50;
  EXPECT_EQ(trainer::desk_epochs(p, o), 7);
  p.epochs = 8;
  EXPECT_EQ(trainer::desk_epochs(p, o), 1);
  p.epochs = 2;
  EXPECT_EQ(trainer::desk_epochs(p, o), 1);
}

TEST(Trainer, SkipsPhasesWithoutParameters) {
  auto cfg = codec::ModelConfig::tiny();
  cfg.buffer = tempbuf::BufferConfig::parse("2+0", "3+0", 0.75);
  cfg.sync();
  codec::Model<float> m(cfg, 1);
  const auto data = trainer::make_training_pool(2, 4, 32, 1);
  const auto s = trainer::default_schedule();
  std::vector<PhaseSpec> sub{s[index_of(s, "feature-generation")]};
  const auto reps = trainer::run_schedule(m, sub, data, quick());
  ASSERT_EQ(reps.size(), 1u);
  EXPECT_TRUE(reps[0].skipped);
  std::mt19937_64 rng(1);
  EXPECT_THROW(trainer::run_phase(m, sub[0], data, quick(), rng), std::invalid_argument);
}

TEST(Checkpoint, RoundTripAndBadMagic) {
  const auto dir = temp_dir("ckpt");
  codec::Model<float> m(codec::ModelConfig::tiny(), 8);
  const std::string path = dir + "/a.hyck";
  trainer::save_checkpoint(path, m, {{"next_phase", 3}});
  EXPECT_FALSE(std::filesystem::exists(path + ".tmp"));
  nlohmann::json meta;
  auto back = trainer::load_checkpoint<float>(path, &meta);
  EXPECT_EQ(trainer::resume_phase(meta), 3u);
  EXPECT_EQ(codec::to_json(back.config()), codec::to_json(m.config()));
  const auto a = weights(m), b = weights(back);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_equal(a[i], b[i]));

  std::ofstream(dir + "/bad.hyck") << "NOPE and some bytes";
  EXPECT_THROW(trainer::load_checkpoint<float>(dir + "/bad.hyck"), std::runtime_error);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, ResumeGivesIdenticalWeights) {
  const auto s = trainer::default_schedule();
  std::vector<PhaseSpec> sched{s[0], s[1], s[3]};
  const auto data = trainer::make_training_pool(2, 4, 32, 9);
  auto o = quick();

  const auto dir_a = temp_dir("resume_a");
  codec::Model<float> full(codec::ModelConfig::tiny(), 10);
  o.checkpoint_dir = dir_a;
  trainer::run_schedule(full, sched, data, o);
  EXPECT_TRUE(std::filesystem::exists(dir_a + "/phase_02.hyck"));

  const auto dir_b = temp_dir("resume_b");
  codec::Model<float> part(codec::ModelConfig::tiny(), 10);
  o.checkpoint_dir = dir_b;
  o.stop_after = 1;
  trainer::run_schedule(part, sched, data, o);
  ASSERT_TRUE(std::filesystem::exists(dir_b + "/latest.hyck"));
  EXPECT_FALSE(std::filesystem::exists(dir_b + "/phase_01.hyck"));

  nlohmann::json meta;
  auto resumed = trainer::load_checkpoint<float>(dir_b + "/latest.hyck", &meta);
  o.stop_after = -1;
  trainer::run_schedule(resumed, sched, data, o, trainer::resume_phase(meta));
  const auto a = weights(full), b = weights(resumed);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(bit_equal(a[i], b[i]));
  std::filesystem::remove_all(dir_a);
  std::filesystem::remove_all(dir_b);
}

TEST(GradCheck, FullPipelineMatchesFiniteDifferences) {
  const auto r = trainer::gradient_check(codec::ModelConfig::tiny());
  EXPECT_GE(r.entries.size(), 50u);
  EXPECT_EQ(r.paths_covered, (std::vector<std::string>{"motion", "mask", "inter", "entropy"}));
  for (const auto& e : r.entries)
    EXPECT_LT(e.rel_error, 1e-3) << e.name << "[" << e.index << "] analytic " << e.analytic << " numeric " << e.numeric;
}

TEST(GradCheck, BranchProbeSeesKinks) {
  nn::BranchProbe a, b, c;
  auto run = [](nn::BranchProbe& p, double v) {
    nn::BranchScope scope(p);
    nn::Tensor<double> t({1, 1, 1, 2}, {v, 1.0});
    nn::leaky_relu(nn::Var<double>::constant(t));
  };
  run(a, 0.5);
  run(b, 0.25);
  run(c, -0.25);
  EXPECT_EQ(a.hash, b.hash);
  EXPECT_NE(a.hash, c.hash);
}
