#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace diamond {

/// Standard-normal stream that is reproducible across platforms.
///
/// Raw bits come from std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Each 64-bit word w becomes the uniform ((w >> 11) + 0.5) / 2^53
/// in (0, 1); consecutive uniform pairs (u1, u2) go through Box-Muller:
///   z0 = sqrt(-2 ln u1) cos(2 pi u2),  z1 = sqrt(-2 ln u1) sin(2 pi u2).
/// z0 is returned first, then z1.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return (double(engine_() >> 11) + 0.5) * 0x1.0p-53; }

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace diamond
