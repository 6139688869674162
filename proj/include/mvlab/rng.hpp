#pragma once

// Counter-based random streams (Philox4x32-10, Salmon et al. 2011).
//
// A stream is keyed by (seed, stream id); its k-th block is a pure function
// of (seed, stream, k). Replica r of an ensemble always draws from stream r,
// so results do not depend on thread count or scheduling.

#include <array>
#include <cmath>
#include <cstdint>

namespace mvlab {

namespace detail {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

}  // namespace detail

using philox_block = std::array<std::uint32_t, 4>;

inline philox_block philox4x32(philox_block ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    detail::mulhilo(detail::kPhiloxM0, ctr[0], hi0, lo0);
    detail::mulhilo(detail::kPhiloxM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += detail::kPhiloxW0;
    key[1] += detail::kPhiloxW1;
  }
  return ctr;
}

/// Sequential view of one counter-based stream.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t position = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        stream_(stream),
        block_(position) {}

  std::uint64_t position() const noexcept { return block_; }

  /// Uniform on the open interval (0, 1) with 53-bit resolution.
  double uniform() {
    if (cursor_ == 2) refill();
    const std::uint64_t bits = words_[cursor_++];
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal by Marsaglia's polar method; both outputs of a pair
  /// are used.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
  }

 private:
  void refill() {
    const philox_block ctr{static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                           static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    const auto out = philox4x32(ctr, key_);
    words_[0] = (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
    words_[1] = (static_cast<std::uint64_t>(out[2]) << 32) | out[3];
    ++block_;
    cursor_ = 0;
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
  std::uint64_t block_;
  std::array<std::uint64_t, 2> words_{};
  int cursor_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mvlab
