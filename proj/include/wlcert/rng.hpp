#pragma once

// Counter-based random streams: every draw is a pure function of
// (seed, stream, step, lane), so results do not depend on execution order.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>

namespace wlcert {

namespace detail {

inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Stream purposes occupy the top byte of the stream id.
enum class StreamPurpose : std::uint64_t {
  Path = 0,
  Init = 1,
  Reference = 2,
  Bootstrap = 3,
  Calibration = 4,
};

inline constexpr std::uint64_t stream_id(StreamPurpose purpose, std::uint64_t index) {
  return (static_cast<std::uint64_t>(purpose) << 56) | (index & 0x00ffffffffffffffULL);
}

class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(detail::mix64(detail::mix64(seed) ^ (stream * 0xd6e8feb86659fd93ULL))) {}

  /// Reproducibility record for this stream.
  constexpr std::uint64_t key() const { return key_; }

  constexpr std::uint64_t bits(std::uint64_t step, std::uint64_t lane) const {
    return detail::mix64(detail::mix64(key_ ^ (step * 0xa0761d6478bd642fULL)) ^ (lane * 0xe7037ed1a0b428dbULL));
  }

  /// Uniform on (0, 1) with 53 random bits.
  double uniform(std::uint64_t step, std::uint64_t lane) const {
    return (static_cast<double>(bits(step, lane) >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal by Box-Muller on lanes 2*lane and 2*lane + 1.
  double normal(std::uint64_t step, std::uint64_t lane) const {
    const double u1 = uniform(step, 2 * lane);
    const double u2 = uniform(step, 2 * lane + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Both Box-Muller outputs of normal(step, lane).
  std::pair<double, double> normal_pair(std::uint64_t step, std::uint64_t lane) const {
    const double rad = std::sqrt(-2.0 * std::log(uniform(step, 2 * lane)));
    const double ang = 2.0 * std::numbers::pi * uniform(step, 2 * lane + 1);
    return {rad * std::cos(ang), rad * std::sin(ang)};
  }

  /// Uniform index in [0, n).
  std::uint64_t index(std::uint64_t step, std::uint64_t lane, std::uint64_t n) const {
    return static_cast<std::uint64_t>(uniform(step, lane) * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t key_;
};

}  // namespace wlcert
