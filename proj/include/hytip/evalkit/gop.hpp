#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/entropy/bitstream.hpp"

namespace hytip::evalkit {

using entropy::FrameType;

/// Frame 0 is intra, then every intra_period-th frame. A scene cut forces an
/// intra frame and restarts the period count there.
inline std::vector<FrameType> gop_schedule(int n_frames, int intra_period, const std::vector<int>& scene_cuts = {}) {
  if (n_frames < 1) throw std::invalid_argument("gop_schedule: need at least one frame");
  if (intra_period < 1) throw std::invalid_argument("gop_schedule: intra period must be >= 1");
  for (int c : scene_cuts)
    if (c < 0 || c >= n_frames)
      throw std::invalid_argument("gop_schedule: scene cut " + std::to_string(c) + " outside " +
                                  std::to_string(n_frames) + " frames");
  std::vector<FrameType> out(n_frames, FrameType::kInter);
  int since = 0;
  for (int t = 0; t < n_frames; ++t) {
    const bool cut = std::find(scene_cuts.begin(), scene_cuts.end(), t) != scene_cuts.end();
    if (t == 0 || cut || since == intra_period) since = 0;
    if (since == 0) out[t] = FrameType::kIntra;
    ++since;
  }
  return out;
}

inline std::vector<int> intra_indices(const std::vector<FrameType>& types) {
  std::vector<int> out;
  for (std::size_t i = 0; i < types.size(); ++i)
    if (types[i] == FrameType::kIntra) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace hytip::evalkit
