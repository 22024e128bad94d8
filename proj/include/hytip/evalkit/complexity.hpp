#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/nn/layers.hpp"

namespace hytip::evalkit {

using nn::LayerInfo;

/// MACs of one layer on a width x height frame. Convolutions use "same"
/// padding, so the output is ceil(input / stride).
inline std::uint64_t layer_macs(const LayerInfo& l, int width, int height) {
  if (l.kind == "fc") return static_cast<std::uint64_t>(l.cin) * l.cout;
  if (l.kind != "conv") throw std::invalid_argument("count_macs: unknown layer kind '" + l.kind + "' in " + l.name);
  if (l.in_div <= 0 || l.stride <= 0 || l.groups <= 0 || l.cin % l.groups)
    throw std::invalid_argument("count_macs: malformed layer " + l.name);
  const std::uint64_t hi = (height + l.in_div - 1) / l.in_div, wi = (width + l.in_div - 1) / l.in_div;
  const std::uint64_t ho = (hi + l.stride - 1) / l.stride, wo = (wi + l.stride - 1) / l.stride;
  return static_cast<std::uint64_t>(l.kernel) * l.kernel * (l.cin / l.groups) * l.cout * ho * wo;
}

inline std::uint64_t count_macs(const std::vector<LayerInfo>& layers, int width, int height) {
  std::uint64_t total = 0;
  for (const auto& l : layers) total += layer_macs(l, width, height);
  return total;
}

inline double kmacs_per_pixel(std::uint64_t macs, int width, int height) {
  return static_cast<double>(macs) / (static_cast<double>(width) * height) / 1000.0;
}

/// Parameter count in millions, optionally skipping one group.
template <class T>
double count_params(const nn::ParamList<T>& params, const std::string& skip_group = "") {
  std::size_t n = 0;
  for (const auto& np : params)
    if (np.group != skip_group) n += np.param->value().size();
  return static_cast<double>(n) / 1e6;
}

struct ComplexityReport {
  int width = 0, height = 0;
  double params_millions = 0;        // P-frame model
  double intra_params_millions = 0;  // intra codec, reported separately
  double enc_kmacs_per_pixel = 0;
  double dec_kmacs_per_pixel = 0;
  double buffer_codecs = 0;  // codec buffers only
  double buffer_system = 0;  // plus the entropy-coding term
};

}  // namespace hytip::evalkit
