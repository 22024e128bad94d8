#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hytip::entropy {

/// Probability tables are cumulative frequency arrays with a fixed 16-bit total.
inline constexpr int kPrecisionBits = 16;
inline constexpr std::uint32_t kTotal = 1u << kPrecisionBits;

class CorruptStream : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Validates a cumulative table: cdf[0] == 0, cdf.back() == kTotal, strictly increasing.
inline void check_cdf(std::span<const std::uint32_t> cdf) {
  if (cdf.size() < 2 || cdf.front() != 0 || cdf.back() != kTotal)
    throw std::invalid_argument("range coder: CDF must start at 0 and end at 2^16");
  for (std::size_t i = 1; i < cdf.size(); ++i)
    if (cdf[i] <= cdf[i - 1]) throw std::invalid_argument("range coder: CDF must be strictly increasing");
}

// Byte-oriented range coder with a 32-bit range and carry propagation through
// a pending-byte cache. The leading byte of the classic formulation is always
// zero and is not emitted; the flush picks the value in the final interval
// with the most trailing zero bytes and trims them, since the decoder reads
// zeros past the end.
class RangeEncoder {
 public:
  void encode(std::uint32_t start, std::uint32_t freq) {
    const std::uint32_t r = range_ >> kPrecisionBits;
    low_ += static_cast<std::uint64_t>(r) * start;
    range_ = r * freq;
    while (range_ < kTop) {
      range_ <<= 8;
      shift_low();
    }
  }

  void encode_symbol(int symbol, std::span<const std::uint32_t> cdf) {
    if (symbol < 0 || static_cast<std::size_t>(symbol) + 1 >= cdf.size())
      throw std::out_of_range("range coder: symbol " + std::to_string(symbol) + " outside table of " +
                              std::to_string(cdf.size() - 1));
    encode(cdf[symbol], cdf[symbol + 1] - cdf[symbol]);
  }

  /// `count` raw bits, most significant first, one bit per coding step.
  void encode_bits(std::uint32_t value, int count) {
    for (int i = count - 1; i >= 0; --i) encode(((value >> i) & 1u) ? kTotal / 2 : 0, kTotal / 2);
  }

  std::vector<std::uint8_t> finish() {
    // Round low up to a multiple of 2^24; the interval is at least 2^24 wide.
    low_ = (low_ + 0xFFFFFFull) & ~0xFFFFFFull;
    for (int i = 0; i < 5; ++i) shift_low();
    while (!out_.empty() && out_.back() == 0) out_.pop_back();
    return std::move(out_);
  }

 private:
  static constexpr std::uint32_t kTop = 1u << 24;

  void shift_low() {
    if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
      const auto carry = static_cast<std::uint8_t>(low_ >> 32);
      std::uint8_t temp = cache_;
      do {
        emit(static_cast<std::uint8_t>(temp + carry));
        temp = 0xFF;
      } while (--cache_size_ != 0);
      cache_ = static_cast<std::uint8_t>(low_ >> 24);
    }
    ++cache_size_;
    low_ = (low_ & 0x00FFFFFFull) << 8;
  }

  void emit(std::uint8_t b) {
    if (skip_first_) {
      skip_first_ = false;
      return;
    }
    out_.push_back(b);
  }

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  bool skip_first_ = true;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  explicit RangeDecoder(std::span<const std::uint8_t> bytes) : in_(bytes) {
    for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
  }

  /// Target frequency of the next symbol; caller resolves it and calls consume().
  std::uint32_t peek() {
    step_ = range_ >> kPrecisionBits;
    const std::uint32_t v = code_ / step_;
    if (v >= kTotal) throw CorruptStream("range decoder: code value outside the coding interval");
    return v;
  }

  void consume(std::uint32_t start, std::uint32_t freq) {
    code_ -= step_ * start;
    range_ = step_ * freq;
    while (range_ < kTop) {
      code_ = (code_ << 8) | next();
      range_ <<= 8;
    }
  }

  int decode_symbol(std::span<const std::uint32_t> cdf) {
    const std::uint32_t v = peek();
    // Largest s with cdf[s] <= v.
    std::size_t lo = 0, hi = cdf.size() - 1;
    while (hi - lo > 1) {
      const std::size_t mid = (lo + hi) / 2;
      if (cdf[mid] <= v)
        lo = mid;
      else
        hi = mid;
    }
    consume(cdf[lo], cdf[lo + 1] - cdf[lo]);
    return static_cast<int>(lo);
  }

  std::uint32_t decode_bits(int count) {
    std::uint32_t value = 0;
    for (int i = 0; i < count; ++i) {
      const std::uint32_t bit = peek() >= kTotal / 2 ? 1u : 0u;
      consume(bit ? kTotal / 2 : 0, kTotal / 2);
      value = (value << 1) | bit;
    }
    return value;
  }

  /// Bytes consumed so far, including implicit trailing zeros.
  std::size_t position() const { return pos_ + overrun_; }

 private:
  static constexpr std::uint32_t kTop = 1u << 24;

  std::uint32_t next() {
    if (pos_ < in_.size()) return in_[pos_++];
    ++overrun_;
    return 0;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
  std::size_t overrun_ = 0;
  std::uint32_t code_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t step_ = 0;
};

/// Codes a flat symbol list, each against its own table.
inline std::vector<std::uint8_t> range_encode(std::span<const int> symbols,
                                              std::span<const std::vector<std::uint32_t>> cdfs) {
  if (symbols.size() != cdfs.size()) throw std::invalid_argument("range_encode: one CDF per symbol required");
  RangeEncoder enc;
  for (std::size_t i = 0; i < symbols.size(); ++i) enc.encode_symbol(symbols[i], cdfs[i]);
  return enc.finish();
}

inline std::vector<int> range_decode(std::span<const std::uint8_t> bytes,
                                     std::span<const std::vector<std::uint32_t>> cdfs) {
  RangeDecoder dec(bytes);
  std::vector<int> out;
  out.reserve(cdfs.size());
  for (const auto& cdf : cdfs) out.push_back(dec.decode_symbol(cdf));
  return out;
}

}  // namespace hytip::entropy
