#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace oodgate {

// SplitMix64; the output sequence is fixed so generated datasets are
// reproducible in any language.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Top 53 bits mapped to (0, 1].
  double uniform_open_closed() noexcept { return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53; }
  /// Top 53 bits mapped to [0, 1).
  double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

// Box-Muller over SplitMix64. Each pair draws u1 then u2 and yields
// z1 = r cos(2 pi u2) first, then z2 = r sin(2 pi u2).
class GaussianSource {
 public:
  explicit GaussianSource(SplitMix64& rng) noexcept : rng_(rng) {}

  double next() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = rng_.uniform_open_closed();
    const double u2 = rng_.uniform_open_closed();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  SplitMix64& rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace oodgate
