#pragma once

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>

#include "hytip/nn/autograd.hpp"

namespace hytip::tempbuf {

/// Learned feature bank kept across frames: `channels` maps at `scale` of the
/// coded resolution along each axis.
struct ImplicitSpec {
  int channels = 0;
  double scale = 1.0;

  double equivalents() const { return channels * scale * scale; }
  bool enabled() const { return channels > 0; }
  bool operator==(const ImplicitSpec&) const = default;
};

inline bool valid_scale(double s) {
  for (double ok : {1.0, 0.5, 0.25, 0.125, 0.0625})
    if (s == ok) return true;
  return false;
}

inline constexpr double kFlowMaps = 2.0;
inline constexpr double kFrameMaps = 3.0;

struct BufferConfig {
  bool motion_explicit = true;
  ImplicitSpec motion_implicit{2, 0.25};
  bool inter_explicit = true;
  ImplicitSpec inter_implicit{2, 1.0};
  double entropy_extra = 0.0;

  bool operator==(const BufferConfig&) const = default;

  void validate() const {
    for (const auto* s : {&motion_implicit, &inter_implicit}) {
      if (s->channels < 0) throw std::invalid_argument("buffer config: negative implicit channel count");
      if (!valid_scale(s->scale))
        throw std::invalid_argument("buffer config: implicit scale must be 1, 1/2, 1/4, 1/8 or 1/16");
    }
    if (!motion_explicit && !motion_implicit.enabled())
      throw std::invalid_argument("buffer config: motion codec needs an explicit or implicit buffer");
    if (!inter_explicit && !inter_implicit.enabled())
      throw std::invalid_argument("buffer config: inter codec needs an explicit or implicit buffer");
    if (entropy_extra < 0) throw std::invalid_argument("buffer config: entropy_extra must be >= 0");
  }

  double motion_equivalents() const { return (motion_explicit ? kFlowMaps : 0.0) + motion_implicit.equivalents(); }
  double inter_equivalents() const { return (inter_explicit ? kFrameMaps : 0.0) + inter_implicit.equivalents(); }

  /// Parses "explicit+implicit" notation, e.g. motion "2+0.125", inter "3+2".
  /// The implicit term is converted to channels at the codec's default bank
  /// scale (1/4 for motion, full resolution for inter) unless written with an
  /// explicit "@scale" suffix such as "0+4@1/4".
  static BufferConfig parse(const std::string& motion, const std::string& inter, double entropy_extra = 0.0) {
    BufferConfig c;
    parse_side(motion, kFlowMaps, 0.25, "motion", c.motion_explicit, c.motion_implicit);
    parse_side(inter, kFrameMaps, 1.0, "inter", c.inter_explicit, c.inter_implicit);
    c.entropy_extra = entropy_extra;
    c.validate();
    return c;
  }

  std::string motion_notation() const { return notation(motion_explicit ? kFlowMaps : 0, motion_implicit, 0.25); }
  std::string inter_notation() const { return notation(inter_explicit ? kFrameMaps : 0, inter_implicit, 1.0); }

 private:
  static double parse_fraction(const std::string& s) {
    const auto slash = s.find('/');
    if (slash == std::string::npos) return std::stod(s);
    return std::stod(s.substr(0, slash)) / std::stod(s.substr(slash + 1));
  }

  static void parse_side(const std::string& text, double explicit_maps, double default_scale, const char* side,
                         bool& has_explicit, ImplicitSpec& implicit) {
    const auto plus = text.find('+');
    if (plus == std::string::npos)
      throw std::invalid_argument(std::string(side) + " buffer '" + text + "' is not in e+i notation");
    const double e = std::stod(text.substr(0, plus));
    if (e != 0.0 && e != explicit_maps)
      throw std::invalid_argument(std::string(side) + " buffer '" + text + "': explicit part must be 0 or " +
                                  std::to_string(static_cast<int>(explicit_maps)));
    has_explicit = e != 0.0;
    std::string rest = text.substr(plus + 1);
    double scale = default_scale;
    if (const auto at = rest.find('@'); at != std::string::npos) {
      scale = parse_fraction(rest.substr(at + 1));
      rest = rest.substr(0, at);
    }
    const double maps = std::stod(rest);
    const double ch = maps / (scale * scale);
    if (ch < 0 || std::abs(ch - std::round(ch)) > 1e-9)
      throw std::invalid_argument(std::string(side) + " buffer '" + text + "': implicit part is not a whole number of channels");
    implicit = {static_cast<int>(std::round(ch)), scale};
  }

  static std::string notation(double e, const ImplicitSpec& s, double default_scale) {
    std::ostringstream os;
    os << e << "+" << s.equivalents();
    if (s.enabled() && s.scale != default_scale) os << "@1/" << static_cast<int>(std::round(1.0 / s.scale));
    return os.str();
  }
};

/// Table-1 convention (codec buffers only) or, with include_entropy, the
/// whole-system convention that adds the entropy-coding term.
inline double buffer_equivalents(const BufferConfig& c, bool include_entropy) {
  return c.motion_equivalents() + c.inter_equivalents() + (include_entropy ? c.entropy_extra : 0.0);
}

inline double system_buffer_total(const BufferConfig& c) { return buffer_equivalents(c, true); }

/// Which buffered fields a forward pass read.
struct BufferReads {
  bool frame = false;
  bool flow = false;
  bool inter_features = false;
  bool motion_features = false;
  bool operator==(const BufferReads&) const = default;
};

/// What coding frame t produced for the next step.
template <class T>
struct FrameOutputs {
  nn::Var<T> frame;            // x̂_t
  nn::Var<T> flow;             // f̂_t
  nn::Var<T> inter_features;   // F_t
  nn::Var<T> motion_features;  // F^f_t
};

/// Recurrent state carried from frame t-1 to t. Values are immutable graph
/// nodes, so a state can be replayed or compared after later frames are coded.
/// The decoded frame and flow are always kept because motion estimation and
/// mask generation consume them; BufferConfig decides what the coding paths
/// read and what is counted.
template <class T>
struct BufferState {
  nn::Var<T> decoded_frame;
  nn::Var<T> decoded_flow;
  nn::Var<T> inter_features;
  nn::Var<T> motion_features;

  bool empty() const { return !decoded_frame.defined(); }
  int height() const { return decoded_frame.shape().h; }
  int width() const { return decoded_frame.shape().w; }
};

namespace detail {

inline nn::Shape bank_shape(const ImplicitSpec& s, int h, int w) {
  const double bh = h * s.scale, bw = w * s.scale;
  if (bh != std::floor(bh) || bw != std::floor(bw))
    throw std::invalid_argument("buffer: " + std::to_string(w) + "x" + std::to_string(h) +
                                " is not divisible by the bank scale");
  return {1, s.channels, static_cast<int>(bh), static_cast<int>(bw)};
}

template <class T>
void check_field(const nn::Var<T>& v, bool wanted, const nn::Shape& shape, const char* name) {
  if (wanted && !v.defined()) throw std::invalid_argument(std::string("buffer advance: missing ") + name);
  if (!wanted && v.defined())
    throw std::invalid_argument(std::string("buffer advance: ") + name + " supplied but not buffered by this config");
  if (wanted && v.shape() != shape)
    throw std::invalid_argument(std::string("buffer advance: ") + name + " has shape " + v.shape().str() +
                                ", expected " + shape.str());
}

}  // namespace detail

template <class T>
BufferState<T> advance(const BufferConfig& c, const BufferState<T>& prev, const FrameOutputs<T>& out) {
  (void)prev;
  if (!out.frame.defined()) throw std::invalid_argument("buffer advance: missing decoded frame");
  const int h = out.frame.shape().h, w = out.frame.shape().w;
  detail::check_field(out.frame, true, {1, 3, h, w}, "decoded frame");
  detail::check_field(out.flow, true, {1, 2, h, w}, "decoded flow");
  detail::check_field(out.inter_features, c.inter_implicit.enabled(), detail::bank_shape(c.inter_implicit, h, w),
                      "inter feature bank");
  detail::check_field(out.motion_features, c.motion_implicit.enabled(), detail::bank_shape(c.motion_implicit, h, w),
                      "motion feature bank");
  return {out.frame, out.flow, out.inter_features, out.motion_features};
}

/// State after an intra frame: the reconstruction plus zero flow and zero banks.
template <class T>
BufferState<T> reset_at_intra(const BufferConfig& c, const nn::Var<T>& intra_frame) {
  const int h = intra_frame.shape().h, w = intra_frame.shape().w;
  BufferState<T> s;
  s.decoded_frame = intra_frame;
  s.decoded_flow = nn::Var<T>::constant(nn::Tensor<T>({1, 2, h, w}));
  if (c.inter_implicit.enabled())
    s.inter_features = nn::Var<T>::constant(nn::Tensor<T>(detail::bank_shape(c.inter_implicit, h, w)));
  if (c.motion_implicit.enabled())
    s.motion_features = nn::Var<T>::constant(nn::Tensor<T>(detail::bank_shape(c.motion_implicit, h, w)));
  return s;
}

}  // namespace hytip::tempbuf
