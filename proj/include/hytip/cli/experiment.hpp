#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "hytip/codec/config_io.hpp"
#include "hytip/pixelio/sequence.hpp"
#include "hytip/trainer/schedule.hpp"
#include "hytip/trainer/train.hpp"

namespace hytip::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

/// One evaluation sequence: either synthetic ("synth" spec string) or a file
/// or directory on disk.
struct SequenceSource {
  std::string name;
  std::string synth;
  std::string path;
  std::string format = "image-dir";
  int width = 64, height = 64;
  int frames = 0;  // synth: required; yuv420-raw: required; image-dir: 0 = all
  std::string scene_cuts;
  std::uint64_t seed = 0;
};

struct DatasetSpec {
  std::string name = "synthetic";
  std::string color_matrix = "bt601";
  int crop_multiple = 64;
  std::vector<SequenceSource> sequences;
};

struct PoolSpec {
  int sequences = 8;
  int frames = 12;
  int size = 64;
};

struct Seeds {
  std::uint64_t model = 1;
  std::uint64_t train = 7;
  std::uint64_t data = 7;
};

struct EvalSpec {
  int intra_period = 32;
  std::vector<int> lambda_indices{0, 1, 2, 3};
};

struct AblationEntry {
  std::string name;
  std::string motion;
  std::string inter;
};

struct AblationSpec {
  std::string anchor = "explicit";
  int workers = 2;
  std::vector<AblationEntry> configs;
};

/// The nine buffering configurations plus the explicit anchor.
inline std::vector<AblationEntry> ablation_configs() {
  return {{"explicit", "2+0", "3+0"},          {"implicit-motion-4", "0+4", "3+0"},
          {"implicit-motion-2.125", "0+2.125", "3+0"}, {"hybrid-motion-2+4", "2+4", "3+0"},
          {"hybrid-motion-2+0.125", "2+0.125", "3+0"}, {"implicit-inter-51", "2+0.125", "0+51"},
          {"implicit-inter-5", "2+0.125", "0+5"},      {"hybrid-inter-3+48", "2+0.125", "3+48"},
          {"hytip", "2+0.125", "3+2"}};
}

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetSpec dataset;
  json model = {{"preset", "tiny"}};
  std::string schedule;  // empty: built-in schedule
  PoolSpec pool;
  trainer::TrainOptions training;
  Seeds seeds;
  EvalSpec eval;
  AblationSpec ablation;
  std::string output_dir = "runs/experiment";
  fs::path base_dir = ".";  // relative paths resolve here; not serialized

  fs::path resolve(const std::string& p) const {
    const fs::path q(p);
    return q.is_absolute() ? q : base_dir / q;
  }

  codec::ModelConfig model_config() const { return codec::model_config_from_json(model); }

  std::vector<trainer::PhaseSpec> phases() const {
    return schedule.empty() ? trainer::default_schedule() : trainer::load_schedule(resolve(schedule).string());
  }

  trainer::TrainOptions train_options() const {
    auto o = training;
    o.seed = seeds.train;
    return o;
  }

  void validate() const {
    if (name.empty()) throw std::invalid_argument("config: empty name");
    if (output_dir.empty()) throw std::invalid_argument("config: empty output_dir");
    model_config();
    if (!schedule.empty() && !fs::exists(resolve(schedule)))
      throw std::invalid_argument("config: schedule file not found: " + resolve(schedule).string());
    pixelio::parse_color_standard(dataset.color_matrix);
    if (dataset.sequences.empty()) throw std::invalid_argument("config: dataset has no sequences");
    for (const auto& s : dataset.sequences) {
      if (s.name.empty()) throw std::invalid_argument("config: every sequence needs a name");
      if (s.synth.empty() == s.path.empty())
        throw std::invalid_argument("config: sequence '" + s.name + "' needs exactly one of synth or path");
      if (!s.synth.empty()) {
        pixelio::SynthSpec::parse(s.synth);
        if (s.frames < 1) throw std::invalid_argument("config: synthetic sequence '" + s.name + "' needs frames");
      } else {
        pixelio::parse_format(s.format);
        if (!fs::exists(resolve(s.path)))
          throw std::invalid_argument("config: sequence file not found: " + resolve(s.path).string());
      }
      if (!s.scene_cuts.empty() && !fs::exists(resolve(s.scene_cuts)))
        throw std::invalid_argument("config: scene-cut file not found: " + resolve(s.scene_cuts).string());
    }
    if (pool.sequences < 1 || pool.frames < 2 || pool.size < 32)
      throw std::invalid_argument("config: training pool needs >= 1 sequence, >= 2 frames, size >= 32");
    int longest = 0;
    for (const auto& p : phases()) longest = std::max(longest, p.n_frames);
    if (pool.frames < longest)
      throw std::invalid_argument("config: training pool clips (" + std::to_string(pool.frames) +
                                  " frames) are shorter than the longest phase (" + std::to_string(longest) + ")");
    if (eval.intra_period < 1 || eval.intra_period > 255)
      throw std::invalid_argument("config: intra_period must be in [1, 255]");
    if (eval.lambda_indices.empty()) throw std::invalid_argument("config: no lambda indices");
    for (int i : eval.lambda_indices)
      if (i < 0 || i >= trainer::RateControl::kAnchors)
        throw std::invalid_argument("config: lambda index " + std::to_string(i) + " out of range");
    if (ablation.workers < 1) throw std::invalid_argument("config: ablation workers must be >= 1");
    bool anchor = ablation.configs.empty();
    for (const auto& c : ablation.configs) {
      tempbuf::BufferConfig::parse(c.motion, c.inter);
      anchor = anchor || c.name == ablation.anchor;
    }
    if (!anchor) throw std::invalid_argument("config: ablation anchor '" + ablation.anchor + "' is not a listed config");
  }
};

/// Four short synthetic sequences at 64x64 covering the synthetic patterns.
inline DatasetSpec default_dataset(int frames = 32) {
  DatasetSpec d;
  d.sequences = {{"translation", "global-translation:dx=1.5,dy=-0.5", "", "image-dir", 64, 64, frames, "", 101},
                 {"rotation", "rotating-texture:omega=0.02", "", "image-dir", 64, 64, frames, "", 102},
                 {"noise", "noise-overlay:dx=0.5,dy=0.5,sigma=0.01", "", "image-dir", 64, 64, frames, "", 103},
                 {"static", "static", "", "image-dir", 64, 64, frames, "", 104}};
  return d;
}

inline ExperimentConfig default_experiment() {
  ExperimentConfig c;
  c.dataset = default_dataset();
  c.ablation.configs = ablation_configs();
  return c;
}

// ------------------------------------------------------------------ JSON

inline json to_json(const ExperimentConfig& c) {
  json seqs = json::array();
  for (const auto& s : c.dataset.sequences) {
    json j{{"name", s.name}};
    if (!s.synth.empty()) {
      j["synth"] = s.synth;
      j["width"] = s.width;
      j["height"] = s.height;
      j["seed"] = s.seed;
    } else {
      j["path"] = s.path;
      j["format"] = s.format;
      if (s.format != "image-dir") {
        j["width"] = s.width;
        j["height"] = s.height;
      }
    }
    j["frames"] = s.frames;
    if (!s.scene_cuts.empty()) j["scene_cuts"] = s.scene_cuts;
    seqs.push_back(j);
  }
  json abl = json::array();
  for (const auto& a : c.ablation.configs) abl.push_back({{"name", a.name}, {"motion", a.motion}, {"inter", a.inter}});
  const auto& t = c.training;
  json out{{"name", c.name},
           {"dataset",
            {{"name", c.dataset.name},
             {"color_matrix", c.dataset.color_matrix},
             {"crop_multiple", c.dataset.crop_multiple},
             {"sequences", seqs}}},
           {"model", c.model},
           {"pool", {{"sequences", c.pool.sequences}, {"frames", c.pool.frames}, {"size", c.pool.size}}},
           {"training",
            {{"epoch_factor", t.epoch_factor},
             {"steps_per_epoch", t.steps_per_epoch},
             {"lr_scale", t.lr_scale},
             {"batch", t.batch},
             {"clip_norm", t.clip_norm},
             {"eval_clips", t.eval_clips}}},
           {"seeds", {{"model", c.seeds.model}, {"train", c.seeds.train}, {"data", c.seeds.data}}},
           {"eval", {{"intra_period", c.eval.intra_period}, {"lambda_indices", c.eval.lambda_indices}}},
           {"ablation", {{"anchor", c.ablation.anchor}, {"workers", c.ablation.workers}, {"configs", abl}}},
           {"output_dir", c.output_dir}};
  if (!c.schedule.empty()) out["schedule"] = c.schedule;
  return out;
}

inline ExperimentConfig experiment_from_json(const json& j, const fs::path& base_dir = ".") {
  using codec::check_keys;
  using codec::read_opt;
  check_keys(j, {"name", "dataset", "model", "schedule", "pool", "training", "seeds", "eval", "ablation", "output_dir"},
             "config");
  ExperimentConfig c;
  c.base_dir = base_dir;
  read_opt(j, "name", c.name);
  read_opt(j, "schedule", c.schedule);
  read_opt(j, "output_dir", c.output_dir);
  if (j.contains("model")) c.model = j.at("model");
  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    check_keys(d, {"name", "color_matrix", "crop_multiple", "sequences"}, "dataset");
    read_opt(d, "name", c.dataset.name);
    read_opt(d, "color_matrix", c.dataset.color_matrix);
    read_opt(d, "crop_multiple", c.dataset.crop_multiple);
    if (d.contains("sequences")) {
      c.dataset.sequences.clear();
      for (const auto& s : d.at("sequences")) {
        check_keys(s, {"name", "synth", "path", "format", "width", "height", "frames", "scene_cuts", "seed"},
                   "dataset.sequences");
        SequenceSource q;
        read_opt(s, "name", q.name);
        read_opt(s, "synth", q.synth);
        read_opt(s, "path", q.path);
        read_opt(s, "format", q.format);
        read_opt(s, "width", q.width);
        read_opt(s, "height", q.height);
        read_opt(s, "frames", q.frames);
        read_opt(s, "scene_cuts", q.scene_cuts);
        read_opt(s, "seed", q.seed);
        c.dataset.sequences.push_back(q);
      }
    }
  } else {
    c.dataset = default_dataset();
  }
  if (j.contains("pool")) {
    const auto& p = j.at("pool");
    check_keys(p, {"sequences", "frames", "size"}, "pool");
    read_opt(p, "sequences", c.pool.sequences);
    read_opt(p, "frames", c.pool.frames);
    read_opt(p, "size", c.pool.size);
  }
  if (j.contains("training")) {
    const auto& t = j.at("training");
    check_keys(t, {"epoch_factor", "steps_per_epoch", "lr_scale", "batch", "clip_norm", "eval_clips"}, "training");
    read_opt(t, "epoch_factor", c.training.epoch_factor);
    read_opt(t, "steps_per_epoch", c.training.steps_per_epoch);
    read_opt(t, "lr_scale", c.training.lr_scale);
    read_opt(t, "batch", c.training.batch);
    read_opt(t, "clip_norm", c.training.clip_norm);
    read_opt(t, "eval_clips", c.training.eval_clips);
  }
  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    check_keys(s, {"model", "train", "data"}, "seeds");
    read_opt(s, "model", c.seeds.model);
    read_opt(s, "train", c.seeds.train);
    read_opt(s, "data", c.seeds.data);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    check_keys(e, {"intra_period", "lambda_indices"}, "eval");
    read_opt(e, "intra_period", c.eval.intra_period);
    read_opt(e, "lambda_indices", c.eval.lambda_indices);
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    check_keys(a, {"anchor", "workers", "configs"}, "ablation");
    read_opt(a, "anchor", c.ablation.anchor);
    read_opt(a, "workers", c.ablation.workers);
    if (a.contains("configs")) {
      for (const auto& e : a.at("configs")) {
        check_keys(e, {"name", "motion", "inter"}, "ablation.configs");
        c.ablation.configs.push_back(
            {e.at("name").get<std::string>(), e.at("motion").get<std::string>(), e.at("inter").get<std::string>()});
      }
    } else {
      c.ablation.configs = ablation_configs();
    }
  } else {
    c.ablation.configs = ablation_configs();
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
  try {
    return experiment_from_json(j, fs::absolute(path).parent_path());
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path + ": " + e.what());
  }
}

inline void save_experiment(const ExperimentConfig& c, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write config " + path);
  f << to_json(c).dump(2) << "\n";
}

// --------------------------------------------------------------- datasets

inline pixelio::RawSequence load_source(const DatasetSpec& d, const SequenceSource& s, const fs::path& base) {
  auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? fs::path(p) : base / p; };
  pixelio::RawSequence seq;
  if (!s.synth.empty()) {
    seq = pixelio::synth_sequence(s.synth, s.frames, s.height, s.width, s.seed);
    if (d.crop_multiple > 0) pixelio::crop_sequence(seq, d.crop_multiple);
    if (!s.scene_cuts.empty()) seq.scene_cuts = pixelio::read_scene_cuts(resolve(s.scene_cuts).string());
  } else {
    pixelio::LoadOptions o;
    o.format = pixelio::parse_format(s.format);
    o.color = pixelio::parse_color_standard(d.color_matrix);
    o.width = s.width;
    o.height = s.height;
    o.count = s.frames;
    o.crop_multiple = d.crop_multiple;
    if (!s.scene_cuts.empty()) o.scene_cut_file = resolve(s.scene_cuts).string();
    seq = pixelio::load_sequence(resolve(s.path).string(), o);
  }
  seq.name = s.name;
  return seq;
}

inline std::vector<pixelio::RawSequence> load_dataset(const ExperimentConfig& c) {
  std::vector<pixelio::RawSequence> out;
  for (const auto& s : c.dataset.sequences) out.push_back(load_source(c.dataset, s, c.base_dir));
  return out;
}

/// Output layout: config copy, checkpoints/, bitstreams/, reports/, plots/.
struct RunDirs {
  fs::path root, checkpoints, bitstreams, reports, plots;

  explicit RunDirs(const fs::path& r)
      : root(r), checkpoints(r / "checkpoints"), bitstreams(r / "bitstreams"), reports(r / "reports"),
        plots(r / "plots") {}

  void create() const {
    for (const auto& d : {root, checkpoints, bitstreams, reports, plots}) fs::create_directories(d);
  }
};

}  // namespace hytip::cli
