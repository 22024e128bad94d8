#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "hytip/codec/model.hpp"
#include "hytip/pixelio/sequence.hpp"

namespace hytip::trainer {

// Central finite differences against reverse-mode gradients of the two-frame
// RD loss, in double precision. A sample whose +-h interval crosses a kink
// (activation sign, clamp, bilinear cell, likelihood floor) is replaced, since
// a difference quotient across a kink does not measure the derivative.

struct GradCheckEntry {
  std::string name;
  std::string path;  // motion, mask, inter or entropy
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckResult {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0;
  int failures = 0;
  int kink_rejections = 0;
  std::vector<std::string> paths_covered;
};

/// Path a parameter belongs to for coverage reporting; empty when excluded.
inline std::string grad_path(const std::string& name) {
  const bool hyper = name.find(".hyper.") != std::string::npos;
  if (hyper && (name.rfind("motion.", 0) == 0 || name.rfind("inter.", 0) == 0)) return "entropy";
  if (name.find(".feature") != std::string::npos || name.find(".s_") != std::string::npos) return "";
  if (name.rfind("me.", 0) == 0 || name.rfind("motion.", 0) == 0) return "motion";
  if (name.rfind("mask.", 0) == 0) return "mask";
  if (name.rfind("inter.", 0) == 0 || name.rfind("tcm.", 0) == 0) return "inter";
  return "";
}

struct GradCheckOptions {
  int size = 8;
  int per_path = 15;
  double step = 1e-4;
  double tolerance = 1e-3;
  double lambda = 500.0;
  double min_grad = 1e-6;  // elements with smaller analytic gradients are not sampled
  std::uint64_t seed = 11;
};

inline GradCheckResult gradient_check(const codec::ModelConfig& cfg, const GradCheckOptions& o = {}) {
  codec::Model<double> model(cfg, o.seed);
  auto params = model.parameters();
  // Zero-initialized layers would hide whole paths, so every weight gets a
  // small random offset first.
  std::mt19937_64 rng(o.seed + 1);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  for (auto& np : params)
    for (auto& v : np.param->value().span()) v += jitter(rng);

  const auto seq = pixelio::synth_sequence("global-translation:dx=1,dy=0.5", 2, o.size, o.size, o.seed + 2);
  std::vector<nn::Var<double>> frames;
  for (const auto& f : seq.frames) {
    nn::Tensor<double> d(f.shape());
    for (std::size_t i = 0; i < f.size(); ++i) d[i] = f[i];
    frames.push_back(nn::Var<double>::constant(d));
  }
  auto loss_at = [&](bool grad, std::uint64_t* branches = nullptr) {
    nn::BranchProbe probe;
    nn::BranchScope scope(probe);
    std::mt19937_64 noise(o.seed + 3);
    codec::ForwardOptions fo;
    fo.loss = codec::LossKind::kRd;
    fo.rng = &noise;
    if (!grad) {
      nn::NoGradGuard ng;
      const double v = model.forward_clip(frames, o.lambda, fo).loss.value()[0];
      if (branches) *branches = probe.hash;
      return v;
    }
    const auto r = model.forward_clip(frames, o.lambda, fo);
    nn::backward(r.loss);
    return r.loss.value()[0];
  };
  nn::zero_grad(params);
  loss_at(true);
  std::uint64_t base_branches = 0;
  loss_at(false, &base_branches);

  struct Candidate {
    std::size_t param, index;
    std::string path;
  };
  std::vector<std::vector<Candidate>> by_path(4);
  const std::vector<std::string> names{"motion", "mask", "inter", "entropy"};
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto path = grad_path(params[p].name);
    if (path.empty() || !params[p].param->has_grad()) continue;
    const auto slot = static_cast<std::size_t>(std::find(names.begin(), names.end(), path) - names.begin());
    const auto& g = params[p].param->grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (std::abs(g[i]) > o.min_grad) by_path[slot].push_back({p, i, path});
  }

  GradCheckResult res;
  for (auto& cands : by_path) {
    std::shuffle(cands.begin(), cands.end(), rng);
    if (!cands.empty()) res.paths_covered.push_back(cands.front().path);
    int taken = 0;
    for (std::size_t k = 0; k < cands.size() && taken < o.per_path; ++k) {
      const auto& c = cands[k];
      auto& value = params[c.param].param->value()[c.index];
      const double saved = value;
      std::uint64_t b_up = 0, b_down = 0;
      value = saved + o.step;
      const double up = loss_at(false, &b_up);
      value = saved - o.step;
      const double down = loss_at(false, &b_down);
      value = saved;
      if (b_up != base_branches || b_down != base_branches) {
        ++res.kink_rejections;
        continue;
      }
      ++taken;
      GradCheckEntry e;
      e.name = params[c.param].name;
      e.path = c.path;
      e.index = c.index;
      e.analytic = params[c.param].param->grad()[c.index];
      e.numeric = (up - down) / (2 * o.step);
      e.rel_error = std::abs(e.analytic - e.numeric) / std::max(std::abs(e.analytic), std::abs(e.numeric));
      res.max_rel_error = std::max(res.max_rel_error, e.rel_error);
      if (!(e.rel_error < o.tolerance)) ++res.failures;
      res.entries.push_back(e);
    }
  }
  return res;
}

}  // namespace hytip::trainer
