#include "policysim/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "policysim/matrix.hpp"
#include "policysim/rng.hpp"

namespace policysim {

namespace {

std::vector<double> unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.normal();
  normalize(v);
  return v;
}

}  // namespace

double run_synthetic_policy(PolicyKind policy, const SyntheticBenchConfig& config, std::uint64_t seed) {
  Rng env(mix_seed({seed, 0x77}));
  auto w = unit_vector(env, config.dim);
  for (auto& x : w) x *= config.weight_norm;

  BanditConfig bc = config.bandit;
  bc.policy = policy;
  NeuralBandit bandit(config.dim, bc, mix_seed({seed, 0x6e6574}));

  std::vector<Arm> arms(config.arms);
  for (std::size_t i = 0; i < arms.size(); ++i) arms[i].user = std::to_string(i);

  double total = 0.0;
  for (int t = 0; t < config.rounds; ++t) {
    Rng ctx(mix_seed({seed, 0x637478, static_cast<std::uint64_t>(t)}));
    for (auto& a : arms) a.context = unit_vector(ctx, config.dim);
    const auto pick = bandit.select(arms, 1, mix_seed({seed, 0x73656c, static_cast<std::uint64_t>(t)}));
    const auto& x = arms[pick.front()].context;
    Rng noise(mix_seed({seed, 0x6e6f69, static_cast<std::uint64_t>(t)}));
    const double mean = 1.0 / (1.0 + std::exp(-dot(w, x)));
    const double r = std::clamp(mean + config.noise * noise.normal(), 0.0, 1.0);
    total += r;
    bandit.observe(x, r);
  }
  return total;
}

int SyntheticBenchResult::ee_wins_over_random() const {
  int wins = 0;
  for (std::size_t i = 0; i < ee.size() && i < random.size(); ++i) wins += ee[i] > random[i] ? 1 : 0;
  return wins;
}

double SyntheticBenchResult::mean(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

SyntheticBenchResult run_synthetic_bench(const SyntheticBenchConfig& config) {
  SyntheticBenchResult out;
  for (int s = 0; s < config.seeds; ++s) {
    const std::uint64_t seed = mix_seed({config.base_seed, static_cast<std::uint64_t>(s)});
    out.ee.push_back(run_synthetic_policy(PolicyKind::kNeuralEE, config, seed));
    out.epsilon_greedy.push_back(run_synthetic_policy(PolicyKind::kEpsilonGreedy, config, seed));
    out.random.push_back(run_synthetic_policy(PolicyKind::kRandom, config, seed));
  }
  return out;
}

}  // namespace policysim
