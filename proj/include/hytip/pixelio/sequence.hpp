#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/pixelio/color.hpp"

namespace hytip::pixelio {

struct RawSequence {
  std::string name;
  int width = 0, height = 0;
  double frame_rate = 30.0;
  std::vector<Frame> frames;
  std::vector<int> scene_cuts;
  // Ground-truth backward-warp flow from frame t-1 to frame t, per frame
  // (entry 0 is zero). Only set for synthetic content; empty otherwise.
  std::vector<nn::Tensor<float>> true_flow;

  std::size_t size() const { return frames.size(); }

  void validate() const {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const auto& f = frames[i];
      if (f.n() != 1 || f.c() != 3 || f.h() != height || f.w() != width)
        throw std::invalid_argument("sequence '" + name + "': frame " + std::to_string(i) + " has shape " +
                                    f.shape().str() + ", expected [1,3," + std::to_string(height) + "," +
                                    std::to_string(width) + "]");
    }
  }

  /// Mean ground-truth motion magnitude in pixels; NaN when unknown.
  double mean_motion() const {
    if (true_flow.size() < 2) return std::nan("");
    double s = 0;
    std::size_t n = 0;
    for (std::size_t t = 1; t < true_flow.size(); ++t) {
      const auto& f = true_flow[t];
      const std::size_t plane = f.shape().plane();
      for (std::size_t i = 0; i < plane; ++i) s += std::hypot(f[i], f[plane + i]);
      n += plane;
    }
    return s / static_cast<double>(n);
  }
};

/// Top-left anchored crop to floor(dim / multiple) * multiple.
inline Frame crop_to_multiple(const Frame& f, int multiple = 64) {
  if (multiple <= 0) throw std::invalid_argument("crop_to_multiple: multiple must be positive");
  if (f.h() < multiple || f.w() < multiple)
    throw std::invalid_argument("crop_to_multiple: frame " + std::to_string(f.w()) + "x" + std::to_string(f.h()) +
                                " is smaller than " + std::to_string(multiple));
  const int h = f.h() / multiple * multiple, w = f.w() / multiple * multiple;
  Frame out({f.n(), f.c(), h, w});
  for (int n = 0; n < f.n(); ++n)
    for (int c = 0; c < f.c(); ++c)
      for (int y = 0; y < h; ++y) std::copy_n(&f.at(n, c, y, 0), w, &out.at(n, c, y, 0));
  return out;
}

inline void crop_sequence(RawSequence& s, int multiple) {
  for (auto& f : s.frames) f = crop_to_multiple(f, multiple);
  for (auto& f : s.true_flow) f = crop_to_multiple(f, multiple);
  if (!s.frames.empty()) {
    s.height = s.frames[0].h();
    s.width = s.frames[0].w();
  }
}

// ---------------------------------------------------------------------------
// Synthetic content.

/// Motion-pattern descriptor, written as "pattern:key=value,key=value".
///   static
///   global-translation:dx=2,dy=0
///   rotating-texture:omega=0.02           (radians per frame)
///   noise-overlay:sigma=0.02,dx=1,dy=0
///   scene-cut:cuts=8;16,dx=1              (new texture after each cut)
struct SynthSpec {
  std::string pattern = "static";
  double dx = 0, dy = 0;
  double omega = 0;
  double sigma = 0;
  std::vector<int> cuts;

  static SynthSpec parse(const std::string& text) {
    SynthSpec s;
    const auto colon = text.find(':');
    s.pattern = text.substr(0, colon);
    static const std::vector<std::string> known{"static", "global-translation", "rotating-texture", "noise-overlay",
                                                "scene-cut"};
    if (std::find(known.begin(), known.end(), s.pattern) == known.end())
      throw std::invalid_argument("synth: unknown pattern '" + s.pattern + "'");
    if (colon == std::string::npos) return s;
    std::stringstream ss(text.substr(colon + 1));
    std::string kv;
    while (std::getline(ss, kv, ',')) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw std::invalid_argument("synth: expected key=value, got '" + kv + "'");
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      if (key == "dx") s.dx = std::stod(val);
      else if (key == "dy") s.dy = std::stod(val);
      else if (key == "omega") s.omega = std::stod(val);
      else if (key == "sigma") s.sigma = std::stod(val);
      else if (key == "cuts") {
        std::stringstream cs(val);
        std::string c;
        while (std::getline(cs, c, ';')) s.cuts.push_back(std::stoi(c));
      } else {
        throw std::invalid_argument("synth: unknown parameter '" + key + "'");
      }
    }
    return s;
  }

  std::string str() const {
    std::ostringstream os;
    os << pattern << ":dx=" << dx << ",dy=" << dy << ",omega=" << omega << ",sigma=" << sigma;
    return os.str();
  }
};

namespace detail {

/// Smooth colored texture with a few hard-edged shapes.
inline Frame make_texture(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Frame f({1, 3, h, w});
  struct Wave {
    double fx, fy, phase, amp[3];
  };
  std::vector<Wave> waves(10);
  for (auto& wv : waves) {
    const double freq = 0.02 + 0.12 * u(rng), ang = 2 * std::numbers::pi * u(rng);
    wv = {freq * std::cos(ang), freq * std::sin(ang), 2 * std::numbers::pi * u(rng), {}};
    for (double& a : wv.amp) a = 0.12 * (u(rng) - 0.5);
  }
  struct Box {
    double x0, y0, x1, y1, col[3];
  };
  std::vector<Box> boxes(6);
  for (auto& b : boxes) {
    b.x0 = u(rng) * w;
    b.y0 = u(rng) * h;
    b.x1 = b.x0 + (0.1 + 0.3 * u(rng)) * w;
    b.y1 = b.y0 + (0.1 + 0.3 * u(rng)) * h;
    for (double& c : b.col) c = u(rng);
  }
  double base[3];
  for (double& b : base) b = 0.3 + 0.4 * u(rng);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double px[3] = {base[0], base[1], base[2]};
      for (const auto& wv : waves) {
        const double s = std::sin(wv.fx * x + wv.fy * y + wv.phase);
        for (int c = 0; c < 3; ++c) px[c] += wv.amp[c] * s;
      }
      for (const auto& b : boxes)
        if (x >= b.x0 && x < b.x1 && y >= b.y0 && y < b.y1)
          for (int c = 0; c < 3; ++c) px[c] = 0.5 * px[c] + 0.5 * b.col[c];
      for (int c = 0; c < 3; ++c) f.at(0, c, y, x) = static_cast<float>(std::clamp(px[c], 0.0, 1.0));
    }
  return f;
}

/// Bilinear sample of src at (sx, sy) with border clamping.
inline float sample(const Frame& src, int c, double sx, double sy) {
  const int h = src.h(), w = src.w();
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double fx = sx - x0, fy = sy - y0;
  const double v = (1 - fy) * ((1 - fx) * src.at(0, c, y0, x0) + fx * src.at(0, c, y0, x1)) +
                   fy * ((1 - fx) * src.at(0, c, y1, x0) + fx * src.at(0, c, y1, x1));
  return static_cast<float>(v);
}

/// frame(p) = base(map(p)).
template <class Map>
Frame resample(const Frame& base, Map map) {
  Frame out(base.shape());
  for (int y = 0; y < base.h(); ++y)
    for (int x = 0; x < base.w(); ++x) {
      const auto [sx, sy] = map(x, y);
      for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = sample(base, c, sx, sy);
    }
  return out;
}

}  // namespace detail

/// Deterministic synthetic clip. Translation by (dx, dy) means frame t samples
/// frame 0 at p + t*(dx, dy) with border clamping, so the backward-warp flow
/// from frame t-1 to frame t is (dx, dy) away from the borders.
inline RawSequence synth_sequence(const SynthSpec& spec, int n_frames, int height, int width, std::uint64_t seed) {
  if (n_frames <= 0 || height <= 0 || width <= 0) throw std::invalid_argument("synth: non-positive size");
  RawSequence s;
  s.name = "synth-" + spec.pattern;
  s.width = width;
  s.height = height;
  std::mt19937_64 rng(seed);
  Frame base = detail::make_texture(height, width, rng);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double cx = (width - 1) / 2.0, cy = (height - 1) / 2.0;

  int segment_start = 0;
  for (int t = 0; t < n_frames; ++t) {
    if (spec.pattern == "scene-cut" && std::find(spec.cuts.begin(), spec.cuts.end(), t) != spec.cuts.end()) {
      base = detail::make_texture(height, width, rng);
      segment_start = t;
      s.scene_cuts.push_back(t);
    }
    const int k = t - segment_start;
    nn::Tensor<float> flow({1, 2, height, width});
    Frame f;
    if (spec.pattern == "rotating-texture") {
      auto rot = [&](int kk) {
        const double a = spec.omega * kk;
        return [=](double x, double y) {
          const double ux = x - cx, uy = y - cy;
          return std::pair{cx + std::cos(a) * ux - std::sin(a) * uy, cy + std::sin(a) * ux + std::cos(a) * uy};
        };
      };
      const auto now = rot(k);
      f = detail::resample(base, now);
      if (k > 0) {
        // Backward flow: position in frame t-1 that frame t's pixel came from.
        const double a = spec.omega;
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) {
            const double ux = x - cx, uy = y - cy;
            flow.at(0, 0, y, x) = static_cast<float>(cx + std::cos(a) * ux - std::sin(a) * uy - x);
            flow.at(0, 1, y, x) = static_cast<float>(cy + std::sin(a) * ux + std::cos(a) * uy - y);
          }
      }
    } else {
      const double dx = spec.pattern == "static" ? 0.0 : spec.dx, dy = spec.pattern == "static" ? 0.0 : spec.dy;
      if (dx == 0 && dy == 0) {
        f = base;
      } else {
        f = detail::resample(base, [&](int x, int y) { return std::pair{x + dx * k, y + dy * k}; });
      }
      if (k > 0)
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) {
            flow.at(0, 0, y, x) = static_cast<float>(dx);
            flow.at(0, 1, y, x) = static_cast<float>(dy);
          }
    }
    if (spec.sigma > 0)
      for (auto& v : f.span()) v = static_cast<float>(std::clamp(v + spec.sigma * noise(rng), 0.0, 1.0));
    s.frames.push_back(std::move(f));
    s.true_flow.push_back(std::move(flow));
  }
  return s;
}

inline RawSequence synth_sequence(const std::string& spec, int n_frames, int height, int width, std::uint64_t seed) {
  return synth_sequence(SynthSpec::parse(spec), n_frames, height, width, seed);
}

// ---------------------------------------------------------------------------
// File formats.

enum class SequenceFormat { kYuv420Raw, kImageDir };

inline SequenceFormat parse_format(const std::string& s) {
  if (s == "yuv420-raw" || s == "yuv") return SequenceFormat::kYuv420Raw;
  if (s == "image-dir" || s == "png") return SequenceFormat::kImageDir;
  throw std::invalid_argument("unknown sequence format '" + s + "' (expected yuv420-raw or image-dir)");
}

struct LoadOptions {
  SequenceFormat format = SequenceFormat::kImageDir;
  ColorStandard color = ColorStandard::kBT601;
  int width = 0, height = 0;  // required for yuv420-raw
  int count = 0;              // yuv420-raw: required; image-dir: 0 means all
  int crop_multiple = 64;     // 0 disables cropping
  std::string scene_cut_file;  // optional sidecar
};

inline Frame read_png(const std::string& path) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw std::runtime_error(std::string("cannot read image: ") + img.message);
  img.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw std::runtime_error(std::string("cannot decode image: ") + img.message);
  }
  const int w = static_cast<int>(img.width), h = static_cast<int>(img.height);
  Frame f({1, 3, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        f.at(0, c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0f;
  return f;
}

inline void write_png(const std::string& path, const Frame& f) {
  const int h = f.h(), w = f.w();
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] = static_cast<std::uint8_t>(
            std::clamp(std::nearbyint(f.at(0, c, y, x) * 255.0), 0.0, 255.0));
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(w);
  img.height = static_cast<png_uint_32>(h);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
    throw std::runtime_error("cannot write " + path + ": " + img.message);
}

inline std::vector<int> read_scene_cuts(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open scene-cut file " + path);
  std::vector<int> cuts;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      cuts.push_back(std::stoi(line));
    } catch (const std::exception&) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": not a frame index");
    }
  }
  std::sort(cuts.begin(), cuts.end());
  return cuts;
}

inline void write_scene_cuts(const std::string& path, const std::vector<int>& cuts) {
  std::ofstream f(path);
  for (int c : cuts) f << c << "\n";
}

inline RawSequence load_sequence(const std::string& path, const LoadOptions& opt) {
  namespace fs = std::filesystem;
  RawSequence s;
  s.name = fs::path(path).stem().string();
  const ColorMatrix m = ColorMatrix::make(opt.color);
  if (opt.format == SequenceFormat::kYuv420Raw) {
    if (opt.width <= 0 || opt.height <= 0 || opt.count <= 0)
      throw std::invalid_argument("yuv420-raw input needs explicit width, height and frame count");
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    const auto luma = static_cast<std::size_t>(opt.width) * opt.height, chroma = luma / 4;
    const auto frame_bytes = luma + 2 * chroma;
    const auto file_bytes = fs::file_size(path);
    if (file_bytes != frame_bytes * static_cast<std::size_t>(opt.count))
      throw std::runtime_error(path + ": size " + std::to_string(file_bytes) + " bytes does not match " +
                               std::to_string(opt.count) + " frames of " + std::to_string(frame_bytes) +
                               " bytes (truncated at frame " + std::to_string(file_bytes / frame_bytes) + ")");
    std::vector<std::uint8_t> buf(frame_bytes);
    for (int i = 0; i < opt.count; ++i) {
      if (!f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(frame_bytes)))
        throw std::runtime_error(path + ": truncated at frame " + std::to_string(i));
      std::span<const std::uint8_t> all(buf);
      s.frames.push_back(yuv420_to_rgb(all.subspan(0, luma), all.subspan(luma, chroma),
                                       all.subspan(luma + chroma, chroma), opt.width, opt.height, m));
    }
  } else {
    if (!fs::is_directory(path)) throw std::runtime_error(path + " is not a directory");
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(path)) {
      auto ext = e.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
      if (e.is_regular_file() && ext == ".png") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (opt.count > 0 && static_cast<std::size_t>(opt.count) < files.size()) files.resize(opt.count);
    if (files.empty()) throw std::runtime_error(path + ": no PNG frames found");
    for (std::size_t i = 0; i < files.size(); ++i) {
      try {
        s.frames.push_back(read_png(files[i]));
      } catch (const std::exception& e) {
        throw std::runtime_error("frame " + std::to_string(i) + " (" + files[i] + "): " + e.what());
      }
      if (s.frames.back().shape() != s.frames.front().shape())
        throw std::runtime_error("frame " + std::to_string(i) + " (" + files[i] + "): size differs from frame 0");
    }
    const auto sidecar = fs::path(path) / "scene_cuts.txt";
    if (opt.scene_cut_file.empty() && fs::exists(sidecar)) s.scene_cuts = read_scene_cuts(sidecar.string());
  }
  if (!opt.scene_cut_file.empty()) s.scene_cuts = read_scene_cuts(opt.scene_cut_file);
  s.height = s.frames[0].h();
  s.width = s.frames[0].w();
  if (opt.crop_multiple > 0) crop_sequence(s, opt.crop_multiple);
  s.validate();
  return s;
}

/// Writes numbered PNGs (000000.png, ...) plus scene_cuts.txt when cuts exist.
inline void save_image_dir(const RawSequence& s, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    write_png((fs::path(dir) / name).string(), s.frames[i]);
  }
  if (!s.scene_cuts.empty()) write_scene_cuts((fs::path(dir) / "scene_cuts.txt").string(), s.scene_cuts);
}

inline void save_yuv420(const RawSequence& s, const std::string& path, ColorStandard color) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  const ColorMatrix m = ColorMatrix::make(color);
  for (const auto& fr : s.frames) {
    const auto yuv = rgb_to_yuv420(fr, m);
    for (const auto* p : {&yuv.y, &yuv.u, &yuv.v})
      f.write(reinterpret_cast<const char*>(p->data()), static_cast<std::streamsize>(p->size()));
  }
}

}  // namespace hytip::pixelio
