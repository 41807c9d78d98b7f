#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <utility>
#include <vector>

namespace mcdc {

// Seeded generator whose derived draws do not depend on the standard
// library's distribution implementations, so datasets, shuffles and
// initialisations are reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; one draw per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Uniform integer in [0, n): high word of the 128-bit product next() * n.
  std::size_t index(std::size_t n) {
    const std::uint64_t x = engine_(), y = n;
    const std::uint64_t x_lo = x & 0xFFFFFFFFu, x_hi = x >> 32;
    const std::uint64_t y_lo = y & 0xFFFFFFFFu, y_hi = y >> 32;
    const std::uint64_t lo_lo = x_lo * y_lo, hi_lo = x_hi * y_lo;
    const std::uint64_t lo_hi = x_lo * y_hi, hi_hi = x_hi * y_hi;
    const std::uint64_t cross = (lo_lo >> 32) + (hi_lo & 0xFFFFFFFFu) + lo_hi;
    return static_cast<std::size_t>(hi_hi + (hi_lo >> 32) + (cross >> 32));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Mixes a base seed with a stream tag so related streams do not collide.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace mcdc
