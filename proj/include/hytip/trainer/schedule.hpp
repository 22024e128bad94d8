#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "hytip/codec/config_io.hpp"
#include "hytip/codec/model.hpp"

namespace hytip::trainer {

using json = nlohmann::json;

inline const std::vector<std::string>& module_groups() {
  static const std::vector<std::string> g{"me",  "motion_codec", "tcm",   "mask",
                                          "inter_codec", "feature_conv", "gains", "intra"};
  return g;
}

/// One row of the training schedule.
struct PhaseSpec {
  std::string name;
  int n_frames = 3;
  std::set<std::string> trainable;
  codec::LossKind loss = codec::LossKind::kRd;
  double lr = 1e-4;
  double epochs = 1;     // full-scale epochs; the trainer scales these down
  bool epa = false;
  bool implicit_refs = true;  // false: the feature banks are held at zero
  bool intra = false;         // trains the intra codec on single frames

  void validate() const {
    if (name.empty()) throw std::invalid_argument("phase: empty name");
    if (intra ? n_frames != 1 : n_frames < 2)
      throw std::invalid_argument("phase '" + name + "': n_frames must be >= 2 (exactly 1 for the intra phase)");
    if (trainable.empty()) throw std::invalid_argument("phase '" + name + "': empty trainable set");
    for (const auto& g : trainable)
      if (std::find(module_groups().begin(), module_groups().end(), g) == module_groups().end())
        throw std::invalid_argument("phase '" + name + "': unknown module group '" + g + "'");
    if (!(lr > 0) || !std::isfinite(lr)) throw std::invalid_argument("phase '" + name + "': lr must be positive");
    if (!(epochs > 0)) throw std::invalid_argument("phase '" + name + "': epochs must be positive");
    if (intra && trainable != std::set<std::string>{"intra"})
      throw std::invalid_argument("phase '" + name + "': the intra phase trains only the intra group");
  }
};

namespace detail {

inline std::set<std::string> all_p(bool me, bool motion, bool feature, bool gains) {
  std::set<std::string> s{"tcm", "mask", "inter_codec"};
  if (me) s.insert("me");
  if (motion) s.insert("motion_codec");
  if (feature) s.insert("feature_conv");
  if (gains) s.insert("gains");
  return s;
}

}  // namespace detail

/// Full-scale schedule. The flow-adaptation, channel-transform
/// and context-model rows are left out because those components are not built;
/// their EPA follow-up rows are kept. An intra phase comes first since no
/// pretrained intra codec is available.
inline std::vector<PhaseSpec> default_schedule() {
  using codec::LossKind;
  using detail::all_p;
  const std::set<std::string> motion{"motion_codec"}, tcm{"tcm"}, inter{"inter_codec", "mask"};
  std::vector<PhaseSpec> s;
  auto add = [&](std::string name, int n, std::set<std::string> set, LossKind loss, double lr, double ep,
                 bool epa, bool implicit) {
    PhaseSpec p;
    p.name = std::move(name);
    p.n_frames = n;
    p.trainable = std::move(set);
    p.loss = loss;
    p.lr = lr;
    p.epochs = ep;
    p.epa = epa;
    p.implicit_refs = implicit;
    s.push_back(std::move(p));
  };
  PhaseSpec intra;
  intra.name = "intra";
  intra.n_frames = 1;
  intra.trainable = {"intra"};
  intra.epochs = 16;
  intra.intra = true;
  intra.implicit_refs = false;
  s.push_back(intra);

  // Explicit references only.
  add("motion-coding", 3, motion, LossKind::kMotionWarp, 1e-4, 8, false, false);
  add("motion-compensation", 3, tcm, LossKind::kPrediction, 1e-4, 10, false, false);
  add("inter-coding", 2, inter, LossKind::kRd, 1e-4, 2, false, false);
  add("motion-compensation-rd", 3, tcm, LossKind::kRdMixed, 1e-4, 3, false, false);
  add("inter-coding-joint", 3, all_p(false, false, false, false), LossKind::kRd, 1e-4, 8, false, false);
  add("inter-coding-joint-5f", 5, all_p(false, false, false, false), LossKind::kRd, 1e-4, 5, false, false);
  add("fine-tune-explicit", 3, all_p(false, true, false, false), LossKind::kRd, 1e-4, 6, false, false);
  add("fine-tune-explicit-5f", 5, all_p(false, true, false, false), LossKind::kRd, 1e-4, 5, false, false);
  // Hybrid references.
  add("feature-generation", 3, {"feature_conv"}, LossKind::kRd, 1e-4, 3, false, true);
  add("motion-compensation-hybrid", 3, tcm, LossKind::kRdMixed, 1e-4, 4, false, true);
  add("inter-coding-hybrid", 3, all_p(false, false, true, false), LossKind::kRd, 1e-4, 8, false, true);
  add("inter-coding-hybrid-5f", 5, all_p(false, false, true, false), LossKind::kRd, 1e-4, 4, false, true);
  add("fine-tune-hybrid", 3, all_p(false, true, true, false), LossKind::kRd, 1e-4, 3, false, true);
  add("fine-tune-hybrid-5f", 5, all_p(false, true, true, false), LossKind::kRd, 1e-4, 4, false, true);
  // Error-propagation-aware fine-tuning.
  add("epa-1", 5, all_p(false, true, true, false), LossKind::kRd, 1e-5, 4, true, true);
  add("epa-1-all", 5, all_p(true, true, true, false), LossKind::kRd, 1e-5, 4, true, true);
  add("epa-2", 5, all_p(false, true, true, false), LossKind::kRd, 1e-5, 1, true, true);
  add("epa-2-all", 5, all_p(true, true, true, false), LossKind::kRd, 1e-5, 5, true, true);
  add("epa-3", 5, all_p(false, true, true, false), LossKind::kRd, 1e-5, 2, true, true);
  add("epa-3-all", 5, all_p(true, true, true, false), LossKind::kRd, 1e-5, 7, true, true);
  add("inter-coding-epa", 5, inter, LossKind::kRd, 1e-4, 3, true, true);
  add("inter-coding-epa-joint", 5, all_p(false, false, true, false), LossKind::kRd, 1e-4, 2, true, true);
  add("epa-4", 5, all_p(false, true, true, false), LossKind::kRd, 1e-5, 3, true, true);
  add("epa-4-all", 5, all_p(true, true, true, false), LossKind::kRd, 1e-5, 6, true, true);
  // Variable rate, then longer clips.
  add("variable-rate-gains", 5, {"gains"}, LossKind::kRd, 1e-5, 8, true, true);
  add("variable-rate-all", 5, all_p(true, true, true, true), LossKind::kRd, 1e-5, 20, true, true);
  add("long-sequence-7f", 7, all_p(true, true, true, true), LossKind::kRd, 1e-5, 1, true, true);
  add("long-sequence-10f", 10, all_p(true, true, true, true), LossKind::kRd, 1e-6, 50, true, true);
  return s;
}

inline json to_json(const PhaseSpec& p) {
  return {{"name", p.name},
          {"n_frames", p.n_frames},
          {"trainable", std::vector<std::string>(p.trainable.begin(), p.trainable.end())},
          {"loss", codec::to_string(p.loss)},
          {"lr", p.lr},
          {"epochs", p.epochs},
          {"epa", p.epa},
          {"implicit_refs", p.implicit_refs},
          {"intra", p.intra}};
}

inline PhaseSpec phase_from_json(const json& j) {
  codec::check_keys(j, {"name", "n_frames", "trainable", "loss", "lr", "epochs", "epa", "implicit_refs", "intra"},
                    "phase");
  PhaseSpec p;
  p.name = j.at("name").get<std::string>();
  codec::read_opt(j, "n_frames", p.n_frames);
  const auto t = j.at("trainable").get<std::vector<std::string>>();
  p.trainable = {t.begin(), t.end()};
  if (j.contains("loss")) p.loss = codec::parse_loss(j.at("loss").get<std::string>());
  codec::read_opt(j, "lr", p.lr);
  codec::read_opt(j, "epochs", p.epochs);
  codec::read_opt(j, "epa", p.epa);
  codec::read_opt(j, "implicit_refs", p.implicit_refs);
  codec::read_opt(j, "intra", p.intra);
  p.validate();
  return p;
}

inline json schedule_to_json(const std::vector<PhaseSpec>& s) {
  json a = json::array();
  for (const auto& p : s) a.push_back(to_json(p));
  return a;
}

inline std::vector<PhaseSpec> schedule_from_json(const json& j) {
  if (!j.is_array() || j.empty()) throw std::invalid_argument("schedule: expected a non-empty array of phases");
  std::vector<PhaseSpec> s;
  for (const auto& p : j) s.push_back(phase_from_json(p));
  return s;
}

inline std::vector<PhaseSpec> load_schedule(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("schedule: cannot open " + path);
  try {
    return schedule_from_json(json::parse(f));
  } catch (const json::exception& e) {
    throw std::invalid_argument("schedule " + path + ": " + e.what());
  }
}

}  // namespace hytip::trainer
