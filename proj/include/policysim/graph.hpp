#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "policysim/matrix.hpp"

namespace policysim {

using UserId = std::string;

enum class RelationKind { kFollow, kUnfollow };

struct Edge {
  std::size_t follower = 0;
  std::size_t followee = 0;
  int created_round = 0;

  bool operator==(const Edge&) const = default;
};

/// Directed follow graph over a node set fixed at construction. Nodes are
/// kept in sorted id order so every matrix view has a deterministic layout.
class SocialGraph {
 public:
  SocialGraph() = default;
  explicit SocialGraph(std::vector<UserId> nodes);

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }
  [[nodiscard]] std::span<const UserId> nodes() const noexcept { return nodes_; }
  [[nodiscard]] const UserId& node(std::size_t i) const { return nodes_.at(i); }

  [[nodiscard]] std::optional<std::size_t> index_of(std::string_view id) const;
  /// Throws kUnknownId for ids outside the node set.
  [[nodiscard]] std::size_t require_index(std::string_view id) const;

  [[nodiscard]] bool has_edge(std::size_t follower, std::size_t followee) const;
  [[nodiscard]] bool has_edge(std::string_view follower, std::string_view followee) const;

  /// Applies follow/unfollow; both are idempotent. Returns whether the edge
  /// set changed. Rejects self-edges and unknown ids.
  bool apply(std::string_view actor, std::string_view target, RelationKind kind, int round);

  /// Sorted followee indices of node i (the nodes i reads from).
  [[nodiscard]] const std::vector<std::size_t>& followees(std::size_t i) const { return out_.at(i); }
  [[nodiscard]] std::vector<std::size_t> followers(std::size_t i) const;
  [[nodiscard]] std::size_t out_degree(std::size_t i) const { return out_.at(i).size(); }
  [[nodiscard]] const std::vector<std::size_t>& out_degrees() const noexcept { return degree_; }
  [[nodiscard]] std::size_t edge_count() const noexcept { return created_.size(); }
  /// Edges sorted by (follower, followee).
  [[nodiscard]] std::vector<Edge> edges() const;

  [[nodiscard]] int round() const noexcept { return round_; }

  bool operator==(const SocialGraph& other) const {
    return nodes_ == other.nodes_ && created_ == other.created_;
  }

 private:
  std::vector<UserId> nodes_;
  std::map<std::string, std::size_t, std::less<>> index_;
  std::vector<std::vector<std::size_t>> out_;
  std::vector<std::size_t> degree_;
  std::map<std::pair<std::size_t, std::size_t>, int> created_;
  int round_ = 0;
};

SocialGraph apply_relationship_action(SocialGraph graph, std::string_view actor,
                                      std::string_view target, RelationKind kind, int round);

struct PropagationConfig {
  double gamma = 0.5;  // self-retention weight
  int hops = 1;

  void validate() const;
};

/// k rounds of X <- gamma X + (1 - gamma) D^-1 A X over follow edges. Rows of
/// nodes with no followees stay unchanged.
Matrix propagate(const SocialGraph& graph, const Matrix& features, const PropagationConfig& cfg);

// ---------------------------------------------------------------------------
// Belief-averaging baseline. These operate on the symmetrized follow graph
// with a self-loop on every node; the simulation graph is never touched.

using BeliefVector = std::vector<double>;

struct AbmStepResult {
  BeliefVector beliefs;
  bool disconnected = false;
};

struct AbmConvergence {
  BeliefVector beliefs;
  int iterations = 0;
  double spread = 0.0;
  bool converged = false;
  bool disconnected = false;
};

class AbmOperator {
 public:
  explicit AbmOperator(const SocialGraph& graph);

  [[nodiscard]] std::size_t size() const noexcept { return adj_.size(); }
  [[nodiscard]] bool connected() const noexcept { return components_ == 1; }
  [[nodiscard]] std::size_t component_count() const noexcept { return components_; }
  /// Undirected degree including the self-loop.
  [[nodiscard]] std::size_t degree(std::size_t i) const { return adj_.at(i).size(); }
  [[nodiscard]] const std::vector<std::size_t>& neighbors(std::size_t i) const { return adj_.at(i); }

  [[nodiscard]] BeliefVector step(std::span<const double> x) const;
  [[nodiscard]] std::vector<double> stationary(double tol = 1e-10, int max_iters = 1'000'000) const;

 private:
  std::vector<std::vector<std::size_t>> adj_;
  std::size_t components_ = 0;
};

AbmStepResult abm_step(const SocialGraph& graph, std::span<const double> beliefs);
AbmConvergence abm_converge(const SocialGraph& graph, std::span<const double> initial,
                            double tol, int max_iters);
/// Left fixed point of D^-1 A; throws kComponent on disconnected graphs.
std::vector<double> stationary_distribution(const SocialGraph& graph);

}  // namespace policysim

namespace policysim {

/// Directed Erdos-Renyi follow graph on ids n000, n001, ...: each ordered
/// pair (i, j), i != j, is an edge with probability p.
SocialGraph random_follow_graph(std::size_t n, double p, std::uint64_t seed);

struct AbmTrial {
  std::uint64_t seed = 0;
  int iterations = 0;
  double spread = 0.0;
  bool converged = false;
  double consensus = 0.0;  // mean of the final beliefs
  double predicted = 0.0;  // pi . x0
  double error = 0.0;      // |consensus - predicted|
};

/// Belief averaging on connected random graphs: draws a graph (redrawing
/// until the symmetrized graph is connected) and uniform initial beliefs in
/// [0, 1], runs abm_converge and compares the limit with pi . x0.
std::vector<AbmTrial> abm_trials(std::size_t n, double p, std::uint64_t seed, int trials, double tol = 1e-6,
                                 int max_iters = 500);

}  // namespace policysim
