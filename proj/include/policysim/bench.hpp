#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "policysim/bandit.hpp"

namespace policysim {

/// Synthetic contextual environment: contexts uniform on the unit sphere,
/// reward sigmoid(w . x) + N(0, noise^2) clamped to [0, 1], with |w| =
/// weight_norm. One arm is pulled per round.
struct SyntheticBenchConfig {
  std::size_t dim = 20;
  std::size_t arms = 50;
  int rounds = 2000;
  double noise = 0.05;
  double weight_norm = 3.0;
  int seeds = 10;
  std::uint64_t base_seed = 1;
  BanditConfig bandit;
};

/// Cumulative reward of one policy on the environment drawn from `seed`.
/// Contexts and noise depend only on (seed, round), so policies are paired.
double run_synthetic_policy(PolicyKind policy, const SyntheticBenchConfig& config, std::uint64_t seed);

struct SyntheticBenchResult {
  std::vector<double> ee;
  std::vector<double> epsilon_greedy;
  std::vector<double> random;

  [[nodiscard]] int ee_wins_over_random() const;
  [[nodiscard]] static double mean(const std::vector<double>& v);
};

SyntheticBenchResult run_synthetic_bench(const SyntheticBenchConfig& config);

}  // namespace policysim
