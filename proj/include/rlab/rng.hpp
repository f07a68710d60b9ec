#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace rlab {

/// Seeded random source with platform-independent draws.
///
/// std::uniform_*_distribution output differs between standard libraries, so
/// the conversions from the raw 64-bit engine output are done here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  /// Independent child stream, deterministic in the parent state.
  Rng split();

 private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; used to derive per-episode and per-run seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace rlab
