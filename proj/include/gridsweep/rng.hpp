#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace gridsweep {

/// Seeded generator passed explicitly to every stochastic routine.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// standard. The variate transforms are written out here instead of using
/// the <random> distributions, which are implementation-defined and would
/// break byte-identical reruns across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1], safe to take the log of.
  double uniform_open0() { return 1.0 - uniform(); }

  double normal() {
    // Box-Muller, one variate per call.
    const double u1 = uniform_open0();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  /// Exponential with the given rate (mean 1/rate).
  double exponential(double rate) { return -std::log(uniform_open0()) / rate; }

  /// Uniform index in [0, n), n > 0. Rejects the top partial block so it stays unbiased.
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Derive an independent stream (splitmix64 of a draw).
  Rng split() {
    std::uint64_t z = engine_() + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return Rng(z ^ (z >> 31));
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace gridsweep
