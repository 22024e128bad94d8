#pragma once

#include "hytip/codec/model.hpp"
#include "hytip/evalkit/complexity.hpp"

namespace hytip::codec {

/// Parameters, per-pixel MACs of the P-frame path and buffer sizes.
template <class T>
evalkit::ComplexityReport model_complexity(Model<T>& model, int width, int height) {
  evalkit::ComplexityReport r;
  r.width = width;
  r.height = height;
  auto params = model.parameters();
  r.params_millions = evalkit::count_params(params, "intra");
  std::size_t intra = 0;
  for (const auto& np : params)
    if (np.group == "intra") intra += np.param->value().size();
  r.intra_params_millions = static_cast<double>(intra) / 1e6;
  std::vector<nn::LayerInfo> enc, dec;
  model.p_frame_layers(enc, dec);
  r.enc_kmacs_per_pixel = evalkit::kmacs_per_pixel(evalkit::count_macs(enc, width, height), width, height);
  r.dec_kmacs_per_pixel = evalkit::kmacs_per_pixel(evalkit::count_macs(dec, width, height), width, height);
  r.buffer_codecs = tempbuf::buffer_equivalents(model.config().buffer, false);
  r.buffer_system = tempbuf::system_buffer_total(model.config().buffer);
  return r;
}

}  // namespace hytip::codec
