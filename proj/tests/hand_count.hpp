#pragma once

#include <cstdint>
#include <vector>

namespace hytip::testutil {

// Hand count of the default toy model's P-frame layers, written from the
// architecture widths rather than from the model's layer table.
struct HandCount {
  std::uint64_t enc = 0, dec = 0;
  std::size_t layers = 0;
};

inline HandCount hand_count_default(int S) {
  struct Row {
    int k, cin, cout, stride, in_div, groups;
    bool dec;
  };
  const int B = 32, L = 32, Hm = 16, P = 16, A = 8, I = 2;         // motion codec
  const int C1 = 16, C2 = 24, C3 = 32, N = 32, Li = 48, Hi = 24;  // contexts, inter codec
  const int M = 16, R = 16;                                       // mask, ME refinement
  std::vector<Row> rows;
  for (int div : {4, 2, 1})
    for (int it = 0; it < 2; ++it) {
      rows.push_back({3, 1, 2, 1, div, 1, false});  // image gradients
      rows.push_back({5, 5, 5, 1, div, 5, false});  // windowed sums
    }
  rows.push_back({3, 2 + 3 + 3, R, 1, 1, 1, false});
  rows.push_back({3, R, R, 1, 1, 1, false});
  rows.push_back({3, R, 2, 1, 1, 1, false});
  // Motion encoder and hyper analysis.
  rows.push_back({5, 2, B, 2, 1, 1, false});
  rows.push_back({3, B, B, 2, 2, 1, false});
  rows.push_back({3, B + P, B, 1, 4, 1, false});
  rows.push_back({3, B, B, 2, 4, 1, false});
  rows.push_back({3, B, L, 2, 8, 1, false});
  rows.push_back({3, L, B, 1, 16, 1, false});
  rows.push_back({3, B, Hm, 2, 16, 1, false});
  // Motion side shared with the decoder.
  rows.push_back({3, I, A, 1, 4, 1, true});
  rows.push_back({3, 2 + A, P, 1, 4, 1, true});
  rows.push_back({3, Hm, 4 * B, 1, 32, 1, true});
  rows.push_back({3, B, B, 1, 16, 1, true});
  rows.push_back({3, B, 2 * L, 1, 16, 1, true});
  rows.push_back({3, L, 4 * B, 1, 16, 1, true});
  rows.push_back({3, B, 4 * B, 1, 8, 1, true});
  rows.push_back({3, B + P, B, 1, 4, 1, true});
  rows.push_back({3, B, I, 1, 4, 1, true});
  rows.push_back({3, B, 4 * B, 1, 4, 1, true});
  rows.push_back({3, B, 2 * 4, 1, 2, 1, true});
  // Context mining.
  rows.push_back({3, 3, C1, 1, 1, 1, true});
  rows.push_back({3, I, C1, 1, 1, 1, true});
  rows.push_back({3, C1, C1, 1, 1, 1, true});
  rows.push_back({3, C1, C2, 2, 1, 1, true});
  rows.push_back({3, C2, C3, 2, 2, 1, true});
  rows.push_back({3, C3, C3, 1, 4, 1, true});
  rows.push_back({3, C3, 4 * C2, 1, 4, 1, true});
  rows.push_back({3, 2 * C2, C2, 1, 2, 1, true});
  rows.push_back({3, C2, 4 * C1, 1, 2, 1, true});
  rows.push_back({3, 2 * C1, C1, 1, 1, 1, true});
  rows.push_back({3, C1, 3, 1, 1, 1, true});
  // Mask.
  rows.push_back({3, 2 + 3, M, 1, 1, 1, true});
  rows.push_back({3, M, 1, 1, 1, 1, true});
  // Inter encoder and hyper analysis.
  rows.push_back({3, 3 + C1, N, 1, 1, 1, false});
  rows.push_back({3, N, N, 2, 1, 1, false});
  rows.push_back({3, N + C2, N, 1, 2, 1, false});
  rows.push_back({3, N, N, 2, 2, 1, false});
  rows.push_back({3, N + C3, N, 1, 4, 1, false});
  rows.push_back({3, N, N, 2, 4, 1, false});
  rows.push_back({3, N, Li, 2, 8, 1, false});
  rows.push_back({3, Li, N, 1, 16, 1, false});
  rows.push_back({3, N, Hi, 2, 16, 1, false});
  // Inter decoder side.
  rows.push_back({3, Hi, 4 * N, 1, 32, 1, true});
  rows.push_back({3, N, N, 1, 16, 1, true});
  rows.push_back({3, N, 2 * Li, 1, 16, 1, true});
  rows.push_back({3, Li, 4 * N, 1, 16, 1, true});
  rows.push_back({3, N, 4 * N, 1, 8, 1, true});
  rows.push_back({3, N + C3, 4 * N, 1, 4, 1, true});
  rows.push_back({3, N + C2, 4 * N, 1, 2, 1, true});
  rows.push_back({3, N + C1, N, 1, 1, 1, true});
  rows.push_back({3, N, I, 1, 1, 1, true});
  rows.push_back({3, N, 3, 1, 1, 1, true});

  HandCount hc;
  for (const auto& r : rows) {
    const std::uint64_t side = S / r.in_div / r.stride;
    const std::uint64_t macs = static_cast<std::uint64_t>(r.k * r.k) * (r.cin / r.groups) * r.cout * side * side;
    hc.enc += macs;
    if (r.dec) hc.dec += macs;
  }
  hc.layers = rows.size();
  return hc;
}

}  // namespace hytip::testutil
