#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/codec/model.hpp"
#include "hytip/pixelio/sequence.hpp"
#include "hytip/trainer/checkpoint.hpp"
#include "hytip/trainer/schedule.hpp"

namespace hytip::trainer {

struct TrainOptions {
  std::uint64_t seed = 1;
  double epoch_factor = 1.0 / 8.0;  // desk-scale epochs = ceil(epochs * factor)
  int steps_per_epoch = 40;
  // Desk runs take far fewer steps than the full schedule, so the listed
  // per-phase learning rates are multiplied by this.
  double lr_scale = 10.0;
  int batch = 2;
  double clip_norm = 0.0;
  int eval_clips = 4;
  std::string checkpoint_dir;  // empty: no checkpoints
  int stop_after = -1;         // stop once this many phases have run (testing)
  std::function<void(const std::string&)> log;
};

/// Synthetic clips the trainer draws from.
struct TrainingData {
  std::vector<pixelio::RawSequence> sequences;

  int max_frames() const {
    int m = 0;
    for (const auto& s : sequences) m = std::max(m, static_cast<int>(s.size()));
    return m;
  }
};

/// Mixed translation, rotation and noise clips with random parameters.
inline TrainingData make_training_pool(int n_sequences, int n_frames, int size, std::uint64_t seed) {
  if (n_sequences < 1) throw std::invalid_argument("training pool: need at least one sequence");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> shift(-2.0, 2.0), turn(-0.03, 0.03), noise(0.005, 0.02);
  TrainingData d;
  for (int i = 0; i < n_sequences; ++i) {
    pixelio::SynthSpec spec;
    switch (i % 4) {
      case 0:
      case 1:
        spec.pattern = "global-translation";
        spec.dx = shift(rng);
        spec.dy = shift(rng);
        break;
      case 2:
        spec.pattern = "rotating-texture";
        spec.omega = turn(rng);
        break;
      default:
        spec.pattern = "noise-overlay";
        spec.dx = shift(rng);
        spec.dy = shift(rng);
        spec.sigma = noise(rng);
        break;
    }
    d.sequences.push_back(pixelio::synth_sequence(spec, n_frames, size, size, rng()));
  }
  return d;
}

struct PhaseReport {
  std::string name;
  int steps = 0;
  double initial_loss = 0;  // fixed evaluation batch, before the phase
  double final_loss = 0;    // same batch, after
  std::vector<double> epoch_loss;  // mean training loss per epoch
  double seconds = 0;
  bool skipped = false;  // no parameter of this model is in the trainable set

  double ratio() const { return final_loss / initial_loss; }
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline int desk_epochs(const PhaseSpec& p, const TrainOptions& o) {
  return std::max(1, static_cast<int>(std::ceil(p.epochs * o.epoch_factor - 1e-9)));
}

namespace detail {

using Var = nn::Var<float>;

inline std::vector<Var> clip_vars(const pixelio::RawSequence& s, int start, int n) {
  std::vector<Var> out;
  for (int t = start; t < start + n; ++t) out.push_back(Var::constant(s.frames[t]));
  return out;
}

/// Loss of one clip under the phase's objective.
inline Var phase_loss(const codec::Model<float>& model, const PhaseSpec& p, const std::vector<Var>& clip,
                      double lambda, std::mt19937_64& rng) {
  if (p.intra) return model.forward_intra(clip[0], lambda, entropy::QuantMode::kNoise, &rng).loss;
  codec::ForwardOptions o;
  o.loss = p.loss;
  o.epa = p.epa;
  o.implicit_refs = p.implicit_refs;
  o.rng = &rng;
  return model.forward_clip(clip, lambda, o).loss;
}

inline std::vector<nn::Tensor<float>> snapshot(const nn::ParamList<float>& ps) {
  std::vector<nn::Tensor<float>> s;
  s.reserve(ps.size());
  for (const auto& np : ps) s.push_back(np.param->value());
  return s;
}

inline void restore(nn::ParamList<float>& ps, const std::vector<nn::Tensor<float>>& s) {
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i].param->value() = s[i];
}

inline void set_all_trainable(nn::ParamList<float>& ps) {
  for (auto& np : ps) np.param->set_trainable(true);
}

}  // namespace detail

/// Mean phase loss over a fixed set of clips at the four anchor lambdas, with
/// a fixed noise seed, so values before and after a phase are comparable.
inline double evaluation_loss(const codec::Model<float>& model, const PhaseSpec& p, const TrainingData& data,
                              int clips) {
  nn::NoGradGuard ng;
  std::mt19937_64 rng(0x5eed);
  double sum = 0;
  for (int i = 0; i < clips; ++i) {
    const auto& s = data.sequences[i % data.sequences.size()];
    const auto clip = detail::clip_vars(s, 0, p.n_frames);
    const double lambda = model.config().rate.anchor(i % RateControl::kAnchors);
    sum += detail::phase_loss(model, p, clip, lambda, rng).value()[0];
  }
  return sum / clips;
}

/// Trains the phase's module groups and leaves every other parameter
/// untouched. A non-finite loss restores the last epoch's weights and throws.
inline PhaseReport run_phase(codec::Model<float>& model, const PhaseSpec& phase, const TrainingData& data,
                             const TrainOptions& opt, std::mt19937_64& rng) {
  phase.validate();
  if (data.sequences.empty()) throw std::invalid_argument("run_phase: empty training pool");
  if (data.max_frames() < phase.n_frames)
    throw std::invalid_argument("run_phase: pool clips shorter than " + std::to_string(phase.n_frames) + " frames");
  if (opt.steps_per_epoch < 1 || opt.batch < 1 || opt.eval_clips < 1)
    throw std::invalid_argument("run_phase: steps, batch and eval clips must be positive");
  const auto t0 = std::chrono::steady_clock::now();
  auto params = model.parameters();
  bool any = false;
  for (auto& np : params) {
    const bool on = phase.trainable.count(np.group) > 0;
    np.param->set_trainable(on);
    any = any || on;
  }
  if (!any) {
    detail::set_all_trainable(params);
    throw std::invalid_argument("run_phase '" + phase.name + "': no parameters in the trainable set");
  }
  nn::zero_grad(params);

  PhaseReport rep;
  rep.name = phase.name;
  rep.initial_loss = evaluation_loss(model, phase, data, opt.eval_clips);
  auto last_good = detail::snapshot(params);
  nn::Adam<float> adam(phase.lr * opt.lr_scale);
  std::uniform_int_distribution<std::size_t> pick_seq(0, data.sequences.size() - 1);
  const int epochs = desk_epochs(phase, opt);

  auto abort = [&](const std::string& what) {
    detail::restore(params, last_good);
    nn::zero_grad(params);
    detail::set_all_trainable(params);
    std::ostringstream os;
    os << "phase '" << phase.name << "': " << what << " at step " << rep.steps << "; weights restored to the last good epoch";
    throw NonFiniteLoss(os.str());
  };

  for (int e = 0; e < epochs; ++e) {
    double acc = 0;
    for (int s = 0; s < opt.steps_per_epoch; ++s) {
      for (int b = 0; b < opt.batch; ++b) {
        const auto& seq = data.sequences[pick_seq(rng)];
        std::uniform_int_distribution<int> pick_start(0, static_cast<int>(seq.size()) - phase.n_frames);
        const auto clip = detail::clip_vars(seq, pick_start(rng), phase.n_frames);
        const double lambda = sample_lambda(model.config().rate, rng);
        detail::Var loss;
        try {
          loss = detail::phase_loss(model, phase, clip, lambda, rng);
        } catch (const std::domain_error& e) {
          abort(e.what());
        }
        const double v = loss.value()[0];
        if (!std::isfinite(v)) abort("non-finite loss");
        acc += v;
        nn::backward(loss, 1.0f / static_cast<float>(opt.batch));
      }
      adam.step(params, opt.clip_norm);
      nn::zero_grad(params);
      ++rep.steps;
    }
    for (const auto& np : params)
      for (float v : np.param->value().span())
        if (!std::isfinite(v)) abort("non-finite weight in " + np.name);
    last_good = detail::snapshot(params);
    rep.epoch_loss.push_back(acc / (opt.steps_per_epoch * opt.batch));
    if (opt.log) {
      std::ostringstream os;
      os << phase.name << " epoch " << e + 1 << "/" << epochs << " loss " << rep.epoch_loss.back();
      opt.log(os.str());
    }
  }
  rep.final_loss = evaluation_loss(model, phase, data, opt.eval_clips);
  detail::set_all_trainable(params);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// True when the model has at least one parameter in the phase's groups.
inline bool phase_applies(codec::Model<float>& model, const PhaseSpec& p) {
  for (const auto& np : model.parameters())
    if (p.trainable.count(np.group)) return true;
  return false;
}

/// Per-phase generator, so resuming at phase k replays the same draws.
inline std::mt19937_64 phase_rng(std::uint64_t seed, std::size_t phase_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(phase_index), 0x48595450u};
  return std::mt19937_64(seq);
}

inline std::string phase_checkpoint_path(const std::string& dir, std::size_t k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "phase_%02zu.hyck", k);
  return (std::filesystem::path(dir) / buf).string();
}

/// Runs phases [first, schedule.size()) and writes a checkpoint after each one.
inline std::vector<PhaseReport> run_schedule(codec::Model<float>& model, const std::vector<PhaseSpec>& schedule,
                                             const TrainingData& data, const TrainOptions& opt,
                                             std::size_t first = 0) {
  for (const auto& p : schedule) p.validate();
  std::vector<PhaseReport> reports;
  for (std::size_t k = first; k < schedule.size(); ++k) {
    if (opt.stop_after >= 0 && static_cast<int>(reports.size()) >= opt.stop_after) break;
    if (!phase_applies(model, schedule[k])) {
      PhaseReport skip;
      skip.name = schedule[k].name;
      skip.skipped = true;
      reports.push_back(skip);
      if (opt.log) opt.log("phase " + std::to_string(k) + " " + skip.name + ": skipped, no matching parameters");
      continue;
    }
    auto rng = phase_rng(opt.seed, k);
    reports.push_back(run_phase(model, schedule[k], data, opt, rng));
    const auto& r = reports.back();
    if (opt.log) {
      std::ostringstream os;
      os << "phase " << k << " " << r.name << ": " << r.initial_loss << " -> " << r.final_loss << " (x"
         << r.ratio() << ", " << r.steps << " steps, " << r.seconds << " s)";
      opt.log(os.str());
    }
    if (!opt.checkpoint_dir.empty()) {
      nlohmann::json meta{{"next_phase", k + 1},
                          {"phase", r.name},
                          {"seed", opt.seed},
                          {"schedule", schedule_to_json(schedule)}};
      const auto path = phase_checkpoint_path(opt.checkpoint_dir, k);
      save_checkpoint(path, model, meta);
      std::filesystem::copy_file(path, (std::filesystem::path(opt.checkpoint_dir) / "latest.hyck.tmp"),
                                 std::filesystem::copy_options::overwrite_existing);
      std::filesystem::rename(std::filesystem::path(opt.checkpoint_dir) / "latest.hyck.tmp",
                              std::filesystem::path(opt.checkpoint_dir) / "latest.hyck");
    }
  }
  return reports;
}

/// Phase index stored in a checkpoint written by run_schedule.
inline std::size_t resume_phase(const nlohmann::json& meta) {
  if (!meta.contains("next_phase")) throw std::runtime_error("checkpoint has no phase cursor");
  return meta.at("next_phase").get<std::size_t>();
}

}  // namespace hytip::trainer
