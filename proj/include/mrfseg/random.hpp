#pragma once

// Counter-based random streams. Every stream is keyed by (seed, a, b, c), so
// per-voxel draws do not depend on visiting order or thread count.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace mrfseg {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t stream_key(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0,
                                   std::uint64_t c = 0) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ a);
  k = splitmix64(k ^ (b + 0x632be59bd9b4e019ULL));
  k = splitmix64(k ^ (c + 0x85157af5ULL));
  return k;
}

/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t key) : key_(key) {}
  CounterRng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0)
      : key_(stream_key(seed, a, b, c)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return splitmix64(key_ ^ splitmix64(++counter_)); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Index uniform on [0, n).
  std::size_t below(std::size_t n) {
    return static_cast<std::size_t>(uniform() * static_cast<double>(n));
  }

  double normal() {
    // Box-Muller; 1 - u keeps the log argument in (0, 1].
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace mrfseg
