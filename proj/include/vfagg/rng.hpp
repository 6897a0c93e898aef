#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace vfagg {

/// Mixes a base seed with a path of indices (fold, restart, cluster, ...) into
/// an independent sub-seed.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

/// mt19937_64 with distribution code of our own, so draws are identical across
/// standard library implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), n > 0.
  std::size_t index(std::size_t n);
  /// Uniform integer in [lo, hi].
  std::size_t integer(std::size_t lo, std::size_t hi) { return lo + index(hi - lo + 1); }
  /// Standard normal (Box-Muller).
  double normal();

private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace vfagg
