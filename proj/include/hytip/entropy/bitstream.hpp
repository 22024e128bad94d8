#pragma once

#include <cstdint>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hytip/entropy/range_coder.hpp"

namespace hytip::entropy {

enum class FrameType : std::uint8_t { kIntra = 0, kInter = 1 };

struct FrameRecord {
  FrameType type = FrameType::kIntra;
  std::vector<std::uint8_t> motion;  // empty for intra frames
  std::vector<std::uint8_t> inter;   // intra payload for I frames
};

struct SequenceHeader {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::uint8_t intra_period = 32;
  std::uint8_t lambda_index = 0;
};

/// Container layout, all integers big-endian:
///   "HYTP" | version u8 | width u16 | height u16 | intra_period u8 |
///   frame_count u16 | lambda_index u8 |
///   per frame: type u8 | motion_len u32 | inter_len u32 | motion | inter
struct Bitstream {
  static constexpr std::uint8_t kVersion = 1;
  static constexpr std::size_t kHeaderBytes = 4 + 1 + 2 + 2 + 1 + 2 + 1;
  static constexpr std::size_t kRecordBytes = 1 + 4 + 4;

  SequenceHeader header;
  std::vector<FrameRecord> frames;

  std::vector<std::uint8_t> serialize() const;
  static Bitstream parse(std::span<const std::uint8_t> bytes);

  void save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write bitstream " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("short write to " + path);
  }

  static Bitstream load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open bitstream " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse(bytes);
  }

  /// Payload bits of frame i (container overhead excluded).
  std::size_t payload_bits(std::size_t i) const { return 8 * (frames[i].motion.size() + frames[i].inter.size()); }
};

namespace detail {

inline void put_be(std::vector<std::uint8_t>& out, std::uint64_t v, int bytes) {
  for (int i = bytes - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
  std::uint64_t be(int bytes, const char* what) {
    need(static_cast<std::size_t>(bytes), what);
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v = (v << 8) | b_[pos_++];
    return v;
  }
  std::vector<std::uint8_t> take(std::size_t n, const char* what) {
    need(n, what);
    std::vector<std::uint8_t> out(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return out;
  }
  std::size_t remaining() const { return b_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) throw CorruptStream(std::string("bitstream truncated in ") + what);
  }
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<std::uint8_t> Bitstream::serialize() const {
  if (frames.size() > 0xFFFF) throw std::length_error("bitstream: more than 65535 frames");
  std::vector<std::uint8_t> out{'H', 'Y', 'T', 'P', kVersion};
  detail::put_be(out, header.width, 2);
  detail::put_be(out, header.height, 2);
  detail::put_be(out, header.intra_period, 1);
  detail::put_be(out, frames.size(), 2);
  detail::put_be(out, header.lambda_index, 1);
  for (const auto& f : frames) {
    if (f.type == FrameType::kIntra && !f.motion.empty())
      throw std::invalid_argument("bitstream: intra frame carries a motion payload");
    detail::put_be(out, static_cast<std::uint8_t>(f.type), 1);
    detail::put_be(out, f.motion.size(), 4);
    detail::put_be(out, f.inter.size(), 4);
    out.insert(out.end(), f.motion.begin(), f.motion.end());
    out.insert(out.end(), f.inter.begin(), f.inter.end());
  }
  return out;
}

inline Bitstream Bitstream::parse(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes);
  const auto magic = r.take(4, "magic");
  if (std::string(magic.begin(), magic.end()) != "HYTP") throw CorruptStream("bitstream: bad magic");
  if (r.be(1, "version") != kVersion) throw CorruptStream("bitstream: unsupported version");
  Bitstream bs;
  bs.header.width = static_cast<std::uint16_t>(r.be(2, "width"));
  bs.header.height = static_cast<std::uint16_t>(r.be(2, "height"));
  bs.header.intra_period = static_cast<std::uint8_t>(r.be(1, "intra period"));
  const auto count = r.be(2, "frame count");
  bs.header.lambda_index = static_cast<std::uint8_t>(r.be(1, "lambda index"));
  if (bs.header.width == 0 || bs.header.height == 0) throw CorruptStream("bitstream: zero frame size");
  for (std::uint64_t i = 0; i < count; ++i) {
    FrameRecord f;
    const auto type = r.be(1, "frame type");
    if (type > 1) throw CorruptStream("bitstream: unknown frame type " + std::to_string(type));
    f.type = static_cast<FrameType>(type);
    const auto mlen = r.be(4, "motion length");
    const auto ilen = r.be(4, "inter length");
    if (f.type == FrameType::kIntra && mlen != 0) throw CorruptStream("bitstream: intra frame with motion payload");
    f.motion = r.take(mlen, "motion payload");
    f.inter = r.take(ilen, "inter payload");
    bs.frames.push_back(std::move(f));
  }
  if (r.remaining() != 0) throw CorruptStream("bitstream: trailing bytes after last frame");
  return bs;
}

}  // namespace hytip::entropy
