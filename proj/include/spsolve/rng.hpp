#pragma once

// Deterministic seeded RNG with an explicit stream-splitting scheme.
//
// Streams are derived as RngStream::substream(seed, a, b): the tuple is mixed
// through SplitMix64 and the result seeds a std::mt19937_64. Convention used
// throughout the library:
//   substream(seed, 0, 0)                 - problem generation
//   substream(seed, 1 + variant_id, t)    - trial t of a solver variant
// Samplers are implemented here instead of std::<distribution> so that a seed
// reproduces the same sequence under any standard library.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace spsolve {

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Collapses (seed, a, b) into one well-mixed 64-bit stream seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a,
                              std::uint64_t b = 0) {
  std::uint64_t s = seed;
  (void)splitmix64(s);
  s ^= 0x9e3779b97f4a7c15ull * (a + 1);
  (void)splitmix64(s);
  s ^= 0xc2b2ae3d27d4eb4full * (b + 1);
  return splitmix64(s);
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : gen_(seed) {}

  static RngStream substream(std::uint64_t seed, std::uint64_t a,
                             std::uint64_t b = 0) {
    return RngStream(mix_seed(seed, a, b));
  }

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  /// Standard normal, Box-Muller; values are produced in pairs.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double rad = std::sqrt(-2.0 * std::log(u1));
    const double ang = 2.0 * std::numbers::pi * u2;
    spare_ = rad * std::sin(ang);
    have_spare_ = true;
    return rad * std::cos(ang);
  }

  /// Uniform index in {0, ..., m-1}.
  int uniform_index(int m) {
    const int i = static_cast<int>(uniform01() * static_cast<double>(m));
    return i < m ? i : m - 1;
  }

  /// Fisher-Yates permutation of {0, ..., m-1}.
  std::vector<int> permutation(int m) {
    std::vector<int> p(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) p[static_cast<std::size_t>(i)] = i;
    for (int i = m - 1; i > 0; --i)
      std::swap(p[static_cast<std::size_t>(i)],
                p[static_cast<std::size_t>(uniform_index(i + 1))]);
    return p;
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace spsolve
