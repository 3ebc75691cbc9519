#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace nswip {

/// Philox4x32-10 counter-based block function (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static Counter block(Counter ctr, Key key) noexcept;
};

/// Stateless substream of a counter-based generator.
///
/// Stream `i` under seed `s` is a pure function of (s, i): trajectory i draws
/// from the same numbers whichever worker executes it. Satisfies
/// UniformRandomBitGenerator so it can feed <random> distributions, though
/// library code only uses the member helpers below to keep results portable.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream) noexcept;

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept { return next_u64(); }

  std::uint32_t next_u32() noexcept {
    if (pos_ == 4) refill();
    return buffer_[pos_++];
  }

  std::uint64_t next_u64() noexcept {
    const std::uint64_t hi = next_u32();
    const std::uint64_t lo = next_u32();
    return (hi << 32) | lo;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform on (0, 1).
  double uniform_open() noexcept {
    return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
  }

  /// Standard normal via Box-Muller (one value cached).
  double normal() noexcept;

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }
  /// Number of 128-bit blocks consumed so far.
  std::uint64_t blocks_used() const noexcept { return block_; }

 private:
  void refill() noexcept;

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  Philox4x32::Counter buffer_{};
  unsigned pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Convenience: generator for trajectory `stream` under `seed`.
inline RngStream rng_stream(std::uint64_t seed, std::uint64_t stream) noexcept {
  return RngStream(seed, stream);
}

}  // namespace nswip
