#pragma once

#include <set>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "hytip/codec/model.hpp"

namespace hytip::codec {

using json = nlohmann::json;

/// Rejects keys outside `allowed` so typos in sweep files fail loudly.
inline void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw std::invalid_argument(where + ": unknown key '" + k + "'");
}

template <class V>
void read_opt(const json& j, const char* key, V& out) {
  if (j.contains(key)) out = j.at(key).get<V>();
}

inline json to_json(const tempbuf::BufferConfig& b) {
  return {{"motion", b.motion_notation()}, {"inter", b.inter_notation()}, {"entropy_extra", b.entropy_extra}};
}

inline tempbuf::BufferConfig buffer_from_json(const json& j) {
  check_keys(j, {"motion", "inter", "entropy_extra"}, "buffer");
  std::string motion = "2+0.125", inter = "3+2";
  double extra = 0.0;
  read_opt(j, "motion", motion);
  read_opt(j, "inter", inter);
  read_opt(j, "entropy_extra", extra);
  return tempbuf::BufferConfig::parse(motion, inter, extra);
}

inline json to_json(const trainer::RateControl& r) {
  return {{"lambda_min", r.lambda_min},
          {"lambda_max", r.lambda_max},
          {"metric", r.metric == trainer::Distortion::kMSE ? "mse" : "ms_ssim"}};
}

inline trainer::RateControl rate_from_json(const json& j) {
  check_keys(j, {"lambda_min", "lambda_max", "metric"}, "rate");
  std::string metric = "mse";
  read_opt(j, "metric", metric);
  trainer::RateControl r = metric == "mse" ? trainer::RateControl::psnr() : trainer::RateControl::ms_ssim();
  if (metric != "mse" && metric != "ms_ssim") throw std::invalid_argument("rate: metric must be mse or ms_ssim");
  read_opt(j, "lambda_min", r.lambda_min);
  read_opt(j, "lambda_max", r.lambda_max);
  r.validate();
  return r;
}

inline json to_json(const ModelConfig& c) {
  const auto& m = c.motion;
  const auto& i = c.inter;
  return {{"buffer", to_json(c.buffer)},
          {"rate", to_json(c.rate)},
          {"entropy_conditioning", c.entropy_conditioning},
          {"motion",
           {{"pyramid_levels", m.pyramid_levels},
            {"lk_iterations", m.lk_iterations},
            {"refine_channels", m.refine_channels},
            {"base_channels", m.base_channels},
            {"latent_channels", m.latent_channels},
            {"hyper_channels", m.hyper_channels},
            {"prior_channels", m.prior_channels},
            {"adjust_channels", m.adjust_channels}}},
          {"inter",
           {{"context_channels", {i.context_channels[0], i.context_channels[1], i.context_channels[2]}},
            {"width", i.width},
            {"latent_channels", i.latent_channels},
            {"hyper_channels", i.hyper_channels},
            {"mask_channels", i.mask_channels},
            {"mask_uses_current_flow", i.mask_uses_current_flow},
            {"refine_prediction", i.refine_prediction}}},
          {"intra",
           {{"width", c.intra.width}, {"latent_channels", c.intra.latent_channels}, {"hyper_channels", c.intra.hyper_channels}}}};
}

/// Starts from the preset named in "preset" (default or tiny) and applies
/// overrides.
inline ModelConfig model_config_from_json(const json& j) {
  check_keys(j, {"preset", "buffer", "rate", "entropy_conditioning", "motion", "inter", "intra"}, "model");
  std::string preset = "default";
  read_opt(j, "preset", preset);
  ModelConfig c;
  if (preset == "default")
    c = ModelConfig::defaults();
  else if (preset == "tiny")
    c = ModelConfig::tiny();
  else
    throw std::invalid_argument("model: unknown preset '" + preset + "' (default, tiny)");
  if (j.contains("buffer")) c.buffer = buffer_from_json(j.at("buffer"));
  if (j.contains("rate")) c.rate = rate_from_json(j.at("rate"));
  read_opt(j, "entropy_conditioning", c.entropy_conditioning);
  if (j.contains("motion")) {
    const auto& m = j.at("motion");
    check_keys(m, {"pyramid_levels", "lk_iterations", "refine_channels", "base_channels", "latent_channels",
                   "hyper_channels", "prior_channels", "adjust_channels"},
               "model.motion");
    read_opt(m, "pyramid_levels", c.motion.pyramid_levels);
    read_opt(m, "lk_iterations", c.motion.lk_iterations);
    read_opt(m, "refine_channels", c.motion.refine_channels);
    read_opt(m, "base_channels", c.motion.base_channels);
    read_opt(m, "latent_channels", c.motion.latent_channels);
    read_opt(m, "hyper_channels", c.motion.hyper_channels);
    read_opt(m, "prior_channels", c.motion.prior_channels);
    read_opt(m, "adjust_channels", c.motion.adjust_channels);
  }
  if (j.contains("inter")) {
    const auto& i = j.at("inter");
    check_keys(i, {"context_channels", "width", "latent_channels", "hyper_channels", "mask_channels",
                   "mask_uses_current_flow", "refine_prediction"},
               "model.inter");
    if (i.contains("context_channels")) {
      const auto v = i.at("context_channels").get<std::vector<int>>();
      if (v.size() != 3) throw std::invalid_argument("model.inter.context_channels: need three widths");
      c.inter.context_channels = {v[0], v[1], v[2]};
    }
    read_opt(i, "width", c.inter.width);
    read_opt(i, "latent_channels", c.inter.latent_channels);
    read_opt(i, "hyper_channels", c.inter.hyper_channels);
    read_opt(i, "mask_channels", c.inter.mask_channels);
    read_opt(i, "mask_uses_current_flow", c.inter.mask_uses_current_flow);
    read_opt(i, "refine_prediction", c.inter.refine_prediction);
  }
  if (j.contains("intra")) {
    const auto& a = j.at("intra");
    check_keys(a, {"width", "latent_channels", "hyper_channels"}, "model.intra");
    read_opt(a, "width", c.intra.width);
    read_opt(a, "latent_channels", c.intra.latent_channels);
    read_opt(a, "hyper_channels", c.intra.hyper_channels);
  }
  c.sync();
  c.validate();
  return c;
}

}  // namespace hytip::codec
