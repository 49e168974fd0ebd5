#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "policysim/agent.hpp"
#include "policysim/embedding.hpp"
#include "policysim/graph.hpp"
#include "policysim/matrix.hpp"
#include "policysim/neural.hpp"

namespace policysim {

enum class ArmKind { kRecommend, kExposure };

std::string_view to_string(ArmKind kind) noexcept;
std::optional<ArmKind> parse_arm_kind(std::string_view label) noexcept;

inline constexpr std::array<double, 5> kExposureLevels{0.0, 0.25, 0.5, 0.75, 1.0};

struct Arm {
  ArmKind kind = ArmKind::kRecommend;
  UserId user;        // receiver for recommend arms, author for exposure arms
  PostId post = 0;    // recommend payload
  double level = 1.0; // exposure payload
  std::vector<double> context;
  std::optional<int> selected_round;
  std::optional<double> reward;

  /// Payload used for ordering: post id or exposure level.
  [[nodiscard]] double payload() const noexcept {
    return kind == ArmKind::kRecommend ? static_cast<double>(post) : level;
  }
};

struct CandidateSizes {
  std::size_t n_users = 16;
  std::size_t n_posts = 16;
};

/// Uniform user and post subsets, never-recommended posts before
/// previously recommended ones, crossed into recommend arms (users outer,
/// posts inner, both in sampled order). Contexts are left empty.
std::vector<Arm> build_candidates(std::span<const UserId> users, std::span<const PostId> posts,
                                  const CandidateSizes& sizes, const std::set<PostId>& recommended,
                                  std::uint64_t seed);

/// Uniform author subset crossed with every exposure level.
std::vector<Arm> build_exposure_candidates(std::span<const UserId> users, std::size_t n_users, std::uint64_t seed);

/// Embeds one text per node (profile plus memory digest, in node order) and
/// propagates over the follow graph. One row per node.
Matrix user_context_matrix(const SocialGraph& graph, const std::vector<std::string>& texts,
                           EmbeddingProvider& embedder, const PropagationConfig& cfg);

std::vector<double> user_context(const SocialGraph& graph, const UserId& user, const std::vector<std::string>& texts,
                                 EmbeddingProvider& embedder, const PropagationConfig& cfg);

/// Concatenation a ++ b.
std::vector<double> concat(std::span<const double> a, std::span<const double> b);

/// Top `budget` indices by score, at most one per user. Ties go to the lower
/// (user, payload).
std::vector<std::size_t> select_arms(std::span<const Arm> arms, std::span<const double> scores, std::size_t budget);

enum class PolicyKind { kNeuralEE, kEpsilonGreedy, kRandom };

std::string_view to_string(PolicyKind kind) noexcept;
std::optional<PolicyKind> parse_policy_kind(std::string_view label) noexcept;

struct BanditConfig {
  PolicyKind policy = PolicyKind::kNeuralEE;
  std::size_t hidden = 64;
  double learning_rate = 1e-3;
  double epsilon = 0.1;

  void validate() const;
};

struct ObserveResult {
  double exploit_loss = 0.0;   // before the step
  double explore_target = 0.0; // r - g(x) under the pre-update exploit net
  bool skipped = false;        // non-finite loss
};

/// Exploit/explore pair. The explore net reads the normalized last-layer
/// gradient of the exploit net and regresses the residual r - g(x); arms are
/// ranked by g(x) + explore(grad). The epsilon-greedy baseline uses only the
/// exploit net, the random baseline uses neither.
class NeuralBandit {
 public:
  NeuralBandit() = default;
  NeuralBandit(std::size_t context_dim, BanditConfig config, std::uint64_t seed);

  [[nodiscard]] double exploit(std::span<const double> x) const { return exploit_.forward(x); }
  [[nodiscard]] double explore(std::span<const double> x) const;
  [[nodiscard]] double score(std::span<const double> x) const;

  /// Policy-specific choice of up to `budget` arms (one per user).
  [[nodiscard]] std::vector<std::size_t> select(std::span<const Arm> arms, std::size_t budget,
                                                std::uint64_t seed) const;

  /// One Adam step per net (the explore net only under the EE policy).
  /// Reward must lie in [0, 1].
  ObserveResult observe(std::span<const double> x, double reward);

  [[nodiscard]] const BanditConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t context_dim() const noexcept { return exploit_.input_dim(); }
  TwoLayerNet& exploit_net() noexcept { return exploit_; }
  TwoLayerNet& explore_net() noexcept { return explore_; }
  [[nodiscard]] const TwoLayerNet& exploit_net() const noexcept { return exploit_; }
  [[nodiscard]] const TwoLayerNet& explore_net() const noexcept { return explore_; }

  friend nlohmann::json to_json(const NeuralBandit& bandit);
  friend NeuralBandit bandit_from_json(const nlohmann::json& j);

 private:
  BanditConfig config_;
  TwoLayerNet exploit_;
  TwoLayerNet explore_;
  Adam exploit_opt_;
  Adam explore_opt_;
};

nlohmann::json to_json(const NeuralBandit& bandit);
NeuralBandit bandit_from_json(const nlohmann::json& j);

/// Engagement weight h per reaction kind, indexed by ActionKind.
using EngagementTable = std::array<double, kActionKindCount>;
EngagementTable default_engagement_table();

struct ReactionOutcome {
  UserId receiver;
  ActionKind kind = ActionKind::kDoNothing;
  std::optional<std::string> content;
  double toxicity = 0.0;           // [0, 1]
  double engagement_weight = 0.0;  // h(kind)
};

/// (|s_sender - s_receiver| / 2) * h * max(0, 1 - mu * toxicity), clamped to
/// [0, 1].
double reward_cross_view(double s_sender, double s_receiver, const ReactionOutcome& reaction, double mu);

/// max(0, mis_prev - mis_now).
double reward_misinfo(int mis_prev, int mis_now);

}  // namespace policysim
