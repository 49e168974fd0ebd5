#include "policysim/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "policysim/error.hpp"
#include "policysim/rng.hpp"

namespace policysim {

SocialGraph::SocialGraph(std::vector<UserId> nodes) : nodes_(std::move(nodes)) {
  std::sort(nodes_.begin(), nodes_.end());
  nodes_.erase(std::unique(nodes_.begin(), nodes_.end()), nodes_.end());
  for (std::size_t i = 0; i < nodes_.size(); ++i) index_.emplace(nodes_[i], i);
  out_.resize(nodes_.size());
  degree_.assign(nodes_.size(), 0);
}

std::optional<std::size_t> SocialGraph::index_of(std::string_view id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t SocialGraph::require_index(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) throw Error(ErrorCode::kUnknownId, "unknown user id '" + std::string(id) + "'");
  return *idx;
}

bool SocialGraph::has_edge(std::size_t follower, std::size_t followee) const {
  return created_.contains({follower, followee});
}

bool SocialGraph::has_edge(std::string_view follower, std::string_view followee) const {
  auto a = index_of(follower);
  auto b = index_of(followee);
  return a && b && has_edge(*a, *b);
}

bool SocialGraph::apply(std::string_view actor, std::string_view target, RelationKind kind,
                        int round) {
  const std::size_t a = require_index(actor);
  const std::size_t b = require_index(target);
  if (a == b) throw Error(ErrorCode::kInvalidArgument, "self-follow is not allowed: " + std::string(actor));
  round_ = std::max(round_, round);
  auto& list = out_[a];
  auto pos = std::lower_bound(list.begin(), list.end(), b);
  const bool present = pos != list.end() && *pos == b;
  if (kind == RelationKind::kFollow) {
    if (present) return false;
    list.insert(pos, b);
    created_.emplace(std::make_pair(a, b), round);
  } else {
    if (!present) return false;
    list.erase(pos);
    created_.erase({a, b});
  }
  degree_[a] = list.size();
  return true;
}

std::vector<std::size_t> SocialGraph::followers(std::size_t i) const {
  std::vector<std::size_t> result;
  for (std::size_t j = 0; j < out_.size(); ++j) {
    if (std::binary_search(out_[j].begin(), out_[j].end(), i)) result.push_back(j);
  }
  return result;
}

std::vector<Edge> SocialGraph::edges() const {
  std::vector<Edge> result;
  result.reserve(created_.size());
  for (const auto& [key, round] : created_) result.push_back({key.first, key.second, round});
  return result;
}

SocialGraph apply_relationship_action(SocialGraph graph, std::string_view actor,
                                      std::string_view target, RelationKind kind, int round) {
  graph.apply(actor, target, kind, round);
  return graph;
}

void PropagationConfig::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw Error(ErrorCode::kConfig, "gamma must lie in [0,1]");
  if (hops < 0) throw Error(ErrorCode::kConfig, "hops must be non-negative");
}

Matrix propagate(const SocialGraph& graph, const Matrix& features, const PropagationConfig& cfg) {
  cfg.validate();
  if (features.rows() != graph.size()) {
    throw Error(ErrorCode::kShape, "propagate: expected " + std::to_string(graph.size()) +
                                       " rows, got " + std::to_string(features.rows()));
  }
  Matrix current = features;
  const std::size_t d = features.cols();
  for (int step = 0; step < cfg.hops; ++step) {
    Matrix next(current.rows(), d);
    for (std::size_t i = 0; i < graph.size(); ++i) {
      auto out = next.row(i);
      auto self = current.row(i);
      const auto& nbrs = graph.followees(i);
      if (nbrs.empty()) {
        std::copy(self.begin(), self.end(), out.begin());
        continue;
      }
      const double w = (1.0 - cfg.gamma) / static_cast<double>(nbrs.size());
      for (std::size_t c = 0; c < d; ++c) {
        double agg = 0.0;
        for (std::size_t j : nbrs) agg += current(j, c);
        out[c] = cfg.gamma * self[c] + w * agg;
      }
    }
    current = std::move(next);
  }
  return current;
}

AbmOperator::AbmOperator(const SocialGraph& graph) : adj_(graph.size()) {
  for (std::size_t i = 0; i < graph.size(); ++i) {
    adj_[i].push_back(i);
    for (std::size_t j : graph.followees(i)) {
      adj_[i].push_back(j);
      adj_[j].push_back(i);
    }
  }
  for (auto& list : adj_) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  // Component count by iterative DFS.
  std::vector<bool> seen(adj_.size(), false);
  for (std::size_t s = 0; s < adj_.size(); ++s) {
    if (seen[s]) continue;
    ++components_;
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v : adj_[u]) {
        if (!seen[v]) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
  }
}

BeliefVector AbmOperator::step(std::span<const double> x) const {
  if (x.size() != adj_.size()) throw Error(ErrorCode::kShape, "abm_step: belief length mismatch");
  BeliefVector next(x.size());
  for (std::size_t i = 0; i < adj_.size(); ++i) {
    double s = 0.0;
    for (std::size_t j : adj_[i]) s += x[j];
    next[i] = s / static_cast<double>(adj_[i].size());
  }
  return next;
}

std::vector<double> AbmOperator::stationary(double tol, int max_iters) const {
  if (!connected()) {
    throw Error(ErrorCode::kComponent, "stationary distribution requires a connected graph (" +
                                           std::to_string(components_) + " components)");
  }
  const std::size_t n = adj_.size();
  std::vector<double> pi(n, 1.0 / static_cast<double>(n));
  std::vector<double> next(n);
  for (int it = 0; it < max_iters; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double share = pi[i] / static_cast<double>(adj_[i].size());
      for (std::size_t j : adj_[i]) next[j] += share;
    }
    double delta = 0.0;
    for (std::size_t i = 0; i < n; ++i) delta += std::abs(next[i] - pi[i]);
    pi.swap(next);
    if (delta < tol) break;
  }
  const double total = std::accumulate(pi.begin(), pi.end(), 0.0);
  for (double& p : pi) p /= total;
  return pi;
}

namespace {

void check_beliefs(std::span<const double> x) {
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "beliefs must lie in [0,1]");
  }
}

double spread_of(std::span<const double> x) {
  if (x.empty()) return 0.0;
  auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo;
}

}  // namespace

AbmStepResult abm_step(const SocialGraph& graph, std::span<const double> beliefs) {
  check_beliefs(beliefs);
  AbmOperator op(graph);
  return {op.step(beliefs), !op.connected()};
}

AbmConvergence abm_converge(const SocialGraph& graph, std::span<const double> initial,
                            double tol, int max_iters) {
  if (!(tol > 0.0)) throw Error(ErrorCode::kInvalidArgument, "abm_converge: tol must be positive");
  check_beliefs(initial);
  AbmOperator op(graph);
  AbmConvergence result;
  result.beliefs.assign(initial.begin(), initial.end());
  result.disconnected = !op.connected();
  result.spread = spread_of(result.beliefs);
  while (result.spread >= tol && result.iterations < max_iters) {
    result.beliefs = op.step(result.beliefs);
    ++result.iterations;
    result.spread = spread_of(result.beliefs);
  }
  result.converged = result.spread < tol;
  return result;
}

std::vector<double> stationary_distribution(const SocialGraph& graph) {
  return AbmOperator(graph).stationary();
}

SocialGraph random_follow_graph(std::size_t n, double p, std::uint64_t seed) {
  if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "edge probability must lie in [0,1]");
  const std::size_t width = std::max<std::size_t>(3, std::to_string(n > 0 ? n - 1 : 0).size());
  std::vector<UserId> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string d = std::to_string(i);
    ids.push_back("n" + std::string(width - d.size(), '0') + d);
  }
  SocialGraph g(ids);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && rng.bernoulli(p)) g.apply(ids[i], ids[j], RelationKind::kFollow, 0);
    }
  }
  return g;
}

std::vector<AbmTrial> abm_trials(std::size_t n, double p, std::uint64_t seed, int trials, double tol, int max_iters) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "abm_trials: need at least one node");
  std::vector<AbmTrial> out;
  for (int t = 0; t < trials; ++t) {
    AbmTrial trial;
    SocialGraph g;
    for (std::uint64_t attempt = 0;; ++attempt) {
      trial.seed = mix_seed({seed, static_cast<std::uint64_t>(t), attempt});
      g = random_follow_graph(n, p, trial.seed);
      if (AbmOperator(g).connected()) break;
      if (attempt > 1000) throw Error(ErrorCode::kComponent, "could not draw a connected graph; raise p");
    }
    Rng rng(mix_seed({trial.seed, 0x7830}));
    std::vector<double> x0(n);
    for (double& x : x0) x = rng.uniform(0.0, 1.0);
    const auto pi = stationary_distribution(g);
    for (std::size_t i = 0; i < n; ++i) trial.predicted += pi[i] * x0[i];
    const auto res = abm_converge(g, x0, tol, max_iters);
    trial.iterations = res.iterations;
    trial.spread = res.spread;
    trial.converged = res.converged;
    trial.consensus = std::accumulate(res.beliefs.begin(), res.beliefs.end(), 0.0) / static_cast<double>(n);
    trial.error = std::abs(trial.consensus - trial.predicted);
    out.push_back(trial);
  }
  return out;
}

}  // namespace policysim
