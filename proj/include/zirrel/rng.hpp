#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace zirrel {

/// splitmix64 finaliser; used to derive independent stream seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded random source.
///
/// Wraps std::mt19937_64, whose output sequence is fixed by the standard, and
/// derives every distribution from raw 64-bit draws so results do not depend
/// on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). n must be positive.
  std::size_t below(std::size_t n);

  /// Index drawn from an unnormalised non-negative weight vector.
  std::size_t categorical(std::span<const double> weights);

  bool bernoulli(double p) { return uniform() < p; }

  /// A fresh generator whose seed depends only on (seed(), stream).
  Rng fork(std::uint64_t stream) const { return Rng(mix_seed(seed_, stream)); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace zirrel
