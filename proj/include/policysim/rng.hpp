#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>
#include <vector>

namespace policysim {

/// 64-bit FNV-1a. Stable across platforms; used for id hashing and embedder
/// buckets.
std::uint64_t fnv1a(std::string_view text, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// Folds a list of words into one seed through splitmix64 finalization.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> parts) noexcept;

/// Seeded generator with platform-independent distributions. The standard
/// library distributions are implementation-defined, so they are avoided
/// wherever replay must be bit-exact.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of precision.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Throws kInvalidArgument when n is 0.
  std::size_t below(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (no cached second value).
  double normal();

  /// Index drawn proportionally to non-negative weights; uniform when they
  /// sum to zero.
  std::size_t categorical(const std::vector<double>& weights);

  /// First k entries of a seeded Fisher-Yates shuffle of [0, n).
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

 private:
  std::mt19937_64 engine_;
};

}  // namespace policysim
