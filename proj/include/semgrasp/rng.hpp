// Seeded RNG with fully specified output. std::mt19937_64 is pinned by the
// standard; the distributions here are hand-rolled because the standard
// library's are implementation-defined and would break bit-exact reruns.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace semgrasp {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  /// Uniform in [0, 1).
  double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  std::uint64_t next_u64() { return eng_(); }

  /// Independent child stream seeded from (seed, salt) via splitmix64.
  Rng derive(std::uint64_t salt) const {
    std::uint64_t z = seed_ + salt * 0x9E3779B97F4A7C15ull + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
};

}  // namespace semgrasp
