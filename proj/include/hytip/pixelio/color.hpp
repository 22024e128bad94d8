#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

#include "hytip/nn/tensor.hpp"

namespace hytip::pixelio {

/// RGB frame as a [1,3,H,W] tensor with values in [0,1].
using Frame = nn::Tensor<float>;

enum class ColorStandard { kBT601, kBT709 };

inline ColorStandard parse_color_standard(const std::string& s) {
  if (s == "bt601" || s == "BT601") return ColorStandard::kBT601;
  if (s == "bt709" || s == "BT709") return ColorStandard::kBT709;
  throw std::invalid_argument("unknown color matrix '" + s + "' (expected bt601 or bt709)");
}

inline std::string to_string(ColorStandard s) { return s == ColorStandard::kBT601 ? "bt601" : "bt709"; }

/// Limited-range (studio swing) YCbCr to RGB:
///   rgb = matrix * ([Y, Cb, Cr] - offset), Y in [16,235], Cb/Cr in [16,240].
struct ColorMatrix {
  ColorStandard standard = ColorStandard::kBT601;
  double kr = 0.299, kb = 0.114;
  std::array<std::array<double, 3>, 3> matrix{};
  std::array<double, 3> offset{16.0, 128.0, 128.0};

  static ColorMatrix make(ColorStandard s) {
    ColorMatrix m;
    m.standard = s;
    if (s == ColorStandard::kBT709) {
      m.kr = 0.2126;
      m.kb = 0.0722;
    }
    const double kr = m.kr, kb = m.kb, kg = 1.0 - kr - kb;
    const double ys = 1.0 / 219.0, cs = 1.0 / 224.0;
    m.matrix = {{{ys, 0.0, 2.0 * (1.0 - kr) * cs},
                 {ys, -2.0 * (1.0 - kb) * kb / kg * cs, -2.0 * (1.0 - kr) * kr / kg * cs},
                 {ys, 2.0 * (1.0 - kb) * cs, 0.0}}};
    return m;
  }

  double determinant() const {
    const auto& a = matrix;
    return a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0]) +
           a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
  }

  std::array<double, 3> to_rgb(double y, double cb, double cr) const {
    const double d[3] = {y - offset[0], cb - offset[1], cr - offset[2]};
    std::array<double, 3> rgb{};
    for (int i = 0; i < 3; ++i) rgb[i] = matrix[i][0] * d[0] + matrix[i][1] * d[1] + matrix[i][2] * d[2];
    return rgb;
  }

  /// Inverse transform, unclamped, in 8-bit code values.
  std::array<double, 3> to_ycbcr(double r, double g, double b) const {
    const double kg = 1.0 - kr - kb;
    const double y = kr * r + kg * g + kb * b;
    return {16.0 + 219.0 * y, 128.0 + 224.0 * (b - y) / (2.0 * (1.0 - kb)),
            128.0 + 224.0 * (r - y) / (2.0 * (1.0 - kr))};
  }
};

namespace detail {

// Chroma sample j sits at luma position 2j + 0.5 (centre-aligned 4:2:0).
inline double chroma_at(std::span<const std::uint8_t> plane, int cw, int ch, double cx, double cy) {
  cx = std::clamp(cx, 0.0, static_cast<double>(cw - 1));
  cy = std::clamp(cy, 0.0, static_cast<double>(ch - 1));
  const int x0 = static_cast<int>(std::floor(cx)), y0 = static_cast<int>(std::floor(cy));
  const int x1 = std::min(x0 + 1, cw - 1), y1 = std::min(y0 + 1, ch - 1);
  const double fx = cx - x0, fy = cy - y0;
  auto at = [&](int x, int y) { return static_cast<double>(plane[static_cast<std::size_t>(y) * cw + x]); };
  return (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x1, y0)) + fy * ((1 - fx) * at(x0, y1) + fx * at(x1, y1));
}

}  // namespace detail

/// 8-bit planar 4:2:0 to RGB in [0,1]. Luma dimensions must be even.
inline Frame yuv420_to_rgb(std::span<const std::uint8_t> y, std::span<const std::uint8_t> u,
                           std::span<const std::uint8_t> v, int width, int height, const ColorMatrix& m) {
  if (width <= 0 || height <= 0 || width % 2 || height % 2)
    throw std::invalid_argument("yuv420_to_rgb: luma size " + std::to_string(width) + "x" + std::to_string(height) +
                                " must be positive and even");
  const int cw = width / 2, ch = height / 2;
  const auto luma = static_cast<std::size_t>(width) * height, chroma = static_cast<std::size_t>(cw) * ch;
  if (y.size() != luma) throw std::invalid_argument("yuv420_to_rgb: Y plane has " + std::to_string(y.size()) +
                                                   " samples, expected " + std::to_string(luma));
  if (u.size() != chroma || v.size() != chroma)
    throw std::invalid_argument("yuv420_to_rgb: chroma planes must be " + std::to_string(cw) + "x" +
                                std::to_string(ch) + ", got " + std::to_string(u.size()) + "/" +
                                std::to_string(v.size()) + " samples");
  Frame out({1, 3, height, width});
  for (int r = 0; r < height; ++r) {
    const double cy = (r - 0.5) / 2.0;
    for (int c = 0; c < width; ++c) {
      const double cx = (c - 0.5) / 2.0;
      const auto rgb = m.to_rgb(y[static_cast<std::size_t>(r) * width + c], detail::chroma_at(u, cw, ch, cx, cy),
                                detail::chroma_at(v, cw, ch, cx, cy));
      for (int k = 0; k < 3; ++k) out.at(0, k, r, c) = static_cast<float>(std::clamp(rgb[k], 0.0, 1.0));
    }
  }
  return out;
}

struct Yuv420 {
  int width = 0, height = 0;
  std::vector<std::uint8_t> y, u, v;
};

/// RGB to 8-bit 4:2:0 with 2x2 box-filtered chroma.
inline Yuv420 rgb_to_yuv420(const Frame& f, const ColorMatrix& m) {
  const int h = f.h(), w = f.w();
  if (h % 2 || w % 2) throw std::invalid_argument("rgb_to_yuv420: frame size must be even");
  Yuv420 out{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h),
             std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h / 4),
             std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h / 4)};
  auto to8 = [](double v) { return static_cast<std::uint8_t>(std::clamp(std::nearbyint(v), 0.0, 255.0)); };
  std::vector<double> cb(static_cast<std::size_t>(w) * h), cr(cb.size());
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const auto ycc = m.to_ycbcr(f.at(0, 0, r, c), f.at(0, 1, r, c), f.at(0, 2, r, c));
      const auto i = static_cast<std::size_t>(r) * w + c;
      out.y[i] = to8(ycc[0]);
      cb[i] = ycc[1];
      cr[i] = ycc[2];
    }
  for (int r = 0; r < h / 2; ++r)
    for (int c = 0; c < w / 2; ++c) {
      double sb = 0, sr = 0;
      for (int dy = 0; dy < 2; ++dy)
        for (int dx = 0; dx < 2; ++dx) {
          const auto i = static_cast<std::size_t>(2 * r + dy) * w + 2 * c + dx;
          sb += cb[i];
          sr += cr[i];
        }
      out.u[static_cast<std::size_t>(r) * (w / 2) + c] = to8(sb / 4);
      out.v[static_cast<std::size_t>(r) * (w / 2) + c] = to8(sr / 4);
    }
  return out;
}

}  // namespace hytip::pixelio
