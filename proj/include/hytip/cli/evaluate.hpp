#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "hytip/codec/model.hpp"
#include "hytip/evalkit/metrics.hpp"
#include "hytip/pixelio/sequence.hpp"

namespace hytip::cli {

/// Result of coding one sequence at one rate point.
struct SequenceRun {
  codec::CodedSequence coded;
  std::vector<evalkit::FrameRecord> records;
};

/// Frame bits charged to the RD point: payload plus the per-frame record
/// header; the sequence header is charged to frame 0.
inline std::size_t frame_bits(const entropy::Bitstream& bs, std::size_t t) {
  std::size_t bits = bs.payload_bits(t) + 8 * entropy::Bitstream::kRecordBytes;
  if (t == 0) bits += 8 * entropy::Bitstream::kHeaderBytes;
  return bits;
}

inline std::vector<evalkit::FrameRecord> measure(const std::string& dataset, const pixelio::RawSequence& src,
                                                 const std::vector<nn::Tensor<float>>& recon,
                                                 const entropy::Bitstream& bs, int lambda_idx) {
  if (recon.size() != src.size()) throw std::invalid_argument("eval: reconstruction count differs from source");
  std::vector<evalkit::FrameRecord> out;
  for (std::size_t t = 0; t < src.size(); ++t) {
    evalkit::FrameRecord r;
    r.dataset = dataset;
    r.sequence = src.name;
    r.frame = static_cast<int>(t);
    r.lambda_idx = lambda_idx;
    r.bpp = evalkit::bpp(static_cast<double>(frame_bits(bs, t)), src.width, src.height);
    r.psnr_rgb = evalkit::psnr_rgb(src.frames[t], recon[t]);
    r.ms_ssim = evalkit::ms_ssim(src.frames[t], recon[t]);
    out.push_back(r);
  }
  return out;
}

inline SequenceRun code_sequence(const codec::Model<float>& model, const std::string& dataset,
                                 const pixelio::RawSequence& src, int lambda_idx, int intra_period) {
  SequenceRun r;
  r.coded = model.encode_sequence(src.frames, lambda_idx, intra_period, src.scene_cuts);
  r.records = measure(dataset, src, r.coded.recon, r.coded.stream, lambda_idx);
  return r;
}

/// Temporal-complexity proxy: mean ground-truth flow magnitude when the
/// sequence is synthetic, otherwise the mean magnitude of the model's motion
/// estimate between consecutive source frames.
inline double motion_score(const codec::Model<float>& model, const pixelio::RawSequence& s) {
  const double truth = s.mean_motion();
  if (std::isfinite(truth)) return truth;
  if (s.size() < 2) return 0.0;
  nn::NoGradGuard ng;
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t t = 1; t < s.size(); ++t) {
    const auto f = model.estimator()(nn::Var<float>::constant(s.frames[t]), nn::Var<float>::constant(s.frames[t - 1]))
                       .value();
    const std::size_t plane = f.shape().plane();
    for (std::size_t i = 0; i < plane; ++i) sum += std::hypot(f[i], f[plane + i]);
    n += plane;
  }
  return sum / static_cast<double>(n);
}

}  // namespace hytip::cli
