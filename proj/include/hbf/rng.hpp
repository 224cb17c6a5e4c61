#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

namespace hbf {

// Counter-based splittable generator built on the SplitMix64 finalizer.
// A draw is a pure function of (seed, stream, counter), so any draw can be
// reproduced in O(1) and independent streams never collide in practice.
class Rng {
public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : base_(mix(seed + 0x9E3779B97F4A7C15ull * (stream + 1))) {}

  std::uint64_t next_u64() { return mix(base_ + 0x9E3779B97F4A7C15ull * (++counter_)); }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1]
  double next_double_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // standard circularly-symmetric complex Gaussian, E|z|^2 = 1
  std::complex<double> next_cgauss() {
    const double r = std::sqrt(-std::log(next_double_open()));
    const double phi = 2.0 * M_PI * next_double();
    return {r * std::cos(phi), r * std::sin(phi)};
  }

  // zero-mean Laplacian with scale b (variance 2 b^2)
  double next_laplacian(double scale) {
    const double u = next_double() - 0.5;
    const double s = (u < 0.0) ? -1.0 : 1.0;
    return -scale * s * std::log1p(-2.0 * std::abs(u));
  }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t base_;
  std::uint64_t counter_ = 0;
};

// Stream ids used by the channel and driver so that optional draws (e.g.
// delay taps) never shift the position of other draws.
namespace streams {
inline constexpr std::uint64_t kMeanAngles = 1;
inline constexpr std::uint64_t kRayGains = 2;
inline constexpr std::uint64_t kRayAngles = 3;
inline constexpr std::uint64_t kDelays = 4;
inline constexpr std::uint64_t kInitPrecoder = 5;
inline constexpr std::uint64_t kInitCombiner = 6;
}  // namespace streams

}  // namespace hbf
