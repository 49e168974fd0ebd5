#include "policysim/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "policysim/error.hpp"
#include "policysim/rng.hpp"

namespace policysim {

std::string_view to_string(ArmKind kind) noexcept {
  return kind == ArmKind::kRecommend ? "recommend" : "exposure";
}

std::optional<ArmKind> parse_arm_kind(std::string_view label) noexcept {
  if (label == "recommend") return ArmKind::kRecommend;
  if (label == "exposure") return ArmKind::kExposure;
  return std::nullopt;
}

std::vector<Arm> build_candidates(std::span<const UserId> users, std::span<const PostId> posts,
                                  const CandidateSizes& sizes, const std::set<PostId>& recommended,
                                  std::uint64_t seed) {
  std::vector<Arm> arms;
  if (posts.empty() || users.empty()) return arms;
  Rng rng(seed);
  const auto user_pick = rng.sample_without_replacement(users.size(), std::min(sizes.n_users, users.size()));

  std::vector<PostId> fresh;
  std::vector<PostId> seen;
  for (PostId p : posts) (recommended.contains(p) ? seen : fresh).push_back(p);
  std::vector<PostId> chosen;
  for (std::size_t i : rng.sample_without_replacement(fresh.size(), std::min(sizes.n_posts, fresh.size()))) {
    chosen.push_back(fresh[i]);
  }
  const std::size_t rest = std::min(sizes.n_posts - chosen.size(), seen.size());
  for (std::size_t i : rng.sample_without_replacement(seen.size(), rest)) chosen.push_back(seen[i]);

  arms.reserve(user_pick.size() * chosen.size());
  for (std::size_t u : user_pick) {
    for (PostId p : chosen) {
      Arm a;
      a.kind = ArmKind::kRecommend;
      a.user = users[u];
      a.post = p;
      arms.push_back(std::move(a));
    }
  }
  return arms;
}

std::vector<Arm> build_exposure_candidates(std::span<const UserId> users, std::size_t n_users, std::uint64_t seed) {
  std::vector<Arm> arms;
  Rng rng(seed);
  for (std::size_t u : rng.sample_without_replacement(users.size(), std::min(n_users, users.size()))) {
    for (double level : kExposureLevels) {
      Arm a;
      a.kind = ArmKind::kExposure;
      a.user = users[u];
      a.level = level;
      arms.push_back(std::move(a));
    }
  }
  return arms;
}

Matrix user_context_matrix(const SocialGraph& graph, const std::vector<std::string>& texts,
                           EmbeddingProvider& embedder, const PropagationConfig& cfg) {
  if (texts.size() != graph.size()) {
    throw Error(ErrorCode::kShape, "expected one context text per node");
  }
  const auto vectors = embedder.embed(texts);
  Matrix x(graph.size(), embedder.dimension());
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    if (vectors[i].size() != x.cols()) throw Error(ErrorCode::kShape, "embedding dimension mismatch");
    std::copy(vectors[i].begin(), vectors[i].end(), x.row(i).begin());
  }
  return propagate(graph, x, cfg);
}

std::vector<double> user_context(const SocialGraph& graph, const UserId& user, const std::vector<std::string>& texts,
                                 EmbeddingProvider& embedder, const PropagationConfig& cfg) {
  const std::size_t i = graph.require_index(user);
  const Matrix m = user_context_matrix(graph, texts, embedder, cfg);
  auto row = m.row(i);
  return {row.begin(), row.end()};
}

std::vector<double> concat(std::span<const double> a, std::span<const double> b) {
  std::vector<double> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

namespace {

bool arm_key_less(const Arm& a, const Arm& b) {
  if (a.user != b.user) return a.user < b.user;
  return a.payload() < b.payload();
}

}  // namespace

std::vector<std::size_t> select_arms(std::span<const Arm> arms, std::span<const double> scores, std::size_t budget) {
  if (scores.size() != arms.size()) throw Error(ErrorCode::kShape, "one score per arm required");
  if (budget == 0) throw Error(ErrorCode::kInvalidArgument, "budget must be at least 1");
  std::vector<std::size_t> order(arms.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return arm_key_less(arms[a], arms[b]);
  });
  std::vector<std::size_t> out;
  std::unordered_set<std::string> used;
  for (std::size_t i : order) {
    if (out.size() >= budget) break;
    if (used.insert(arms[i].user).second) out.push_back(i);
  }
  return out;
}

std::string_view to_string(PolicyKind kind) noexcept {
  switch (kind) {
    case PolicyKind::kNeuralEE: return "ee";
    case PolicyKind::kEpsilonGreedy: return "epsilon_greedy";
    case PolicyKind::kRandom: return "random";
  }
  return "ee";
}

std::optional<PolicyKind> parse_policy_kind(std::string_view label) noexcept {
  if (label == "ee") return PolicyKind::kNeuralEE;
  if (label == "epsilon_greedy") return PolicyKind::kEpsilonGreedy;
  if (label == "random") return PolicyKind::kRandom;
  return std::nullopt;
}

void BanditConfig::validate() const {
  if (hidden == 0) throw Error(ErrorCode::kConfig, "bandit hidden size must be positive");
  if (!(learning_rate > 0.0)) throw Error(ErrorCode::kConfig, "bandit learning rate must be positive");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw Error(ErrorCode::kConfig, "epsilon must lie in [0,1]");
}

NeuralBandit::NeuralBandit(std::size_t context_dim, BanditConfig config, std::uint64_t seed)
    : config_(config),
      exploit_(context_dim, config.hidden, mix_seed({seed, 1})),
      explore_(config.hidden + 1, config.hidden, mix_seed({seed, 2})),
      exploit_opt_(exploit_.parameter_count(), config.learning_rate),
      explore_opt_(explore_.parameter_count(), config.learning_rate) {
  config_.validate();
}

double NeuralBandit::explore(std::span<const double> x) const {
  return explore_.forward(grad_features(exploit_, x));
}

double NeuralBandit::score(std::span<const double> x) const {
  if (config_.policy == PolicyKind::kNeuralEE) return exploit(x) + explore(x);
  return exploit(x);
}

std::vector<std::size_t> NeuralBandit::select(std::span<const Arm> arms, std::size_t budget,
                                              std::uint64_t seed) const {
  if (arms.empty()) return {};
  if (config_.policy == PolicyKind::kNeuralEE) {
    std::vector<double> scores(arms.size());
    for (std::size_t i = 0; i < arms.size(); ++i) scores[i] = score(arms[i].context);
    return select_arms(arms, scores, budget);
  }
  if (budget == 0) throw Error(ErrorCode::kInvalidArgument, "budget must be at least 1");

  // Baselines fill slots one by one from the arms whose user is still free.
  std::vector<double> scores(arms.size(), 0.0);
  if (config_.policy == PolicyKind::kEpsilonGreedy) {
    for (std::size_t i = 0; i < arms.size(); ++i) scores[i] = exploit(arms[i].context);
  }
  Rng rng(seed);
  std::vector<std::size_t> out;
  std::unordered_set<std::string> used;
  while (out.size() < budget) {
    std::vector<std::size_t> free;
    for (std::size_t i = 0; i < arms.size(); ++i) {
      if (!used.contains(arms[i].user)) free.push_back(i);
    }
    if (free.empty()) break;
    std::size_t pick = free.front();
    const bool random_slot = config_.policy == PolicyKind::kRandom || rng.bernoulli(config_.epsilon);
    if (random_slot) {
      pick = free[rng.below(free.size())];
    } else {
      for (std::size_t i : free) {
        if (scores[i] > scores[pick] || (scores[i] == scores[pick] && arm_key_less(arms[i], arms[pick]))) pick = i;
      }
    }
    used.insert(arms[pick].user);
    out.push_back(pick);
  }
  return out;
}

ObserveResult NeuralBandit::observe(std::span<const double> x, double reward) {
  if (!(reward >= 0.0 && reward <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "reward must lie in [0,1]");
  ObserveResult res;
  if (config_.policy == PolicyKind::kRandom) return res;

  const double pred = exploit_.forward(x);
  res.exploit_loss = (pred - reward) * (pred - reward);
  res.explore_target = reward - pred;
  if (!std::isfinite(res.exploit_loss)) {
    res.skipped = true;
    return res;
  }
  // Features and residual come from the exploit net before its update.
  const auto features = grad_features(exploit_, x);
  const auto g_exploit = exploit_.backward(x, 2.0 * (pred - reward));

  if (config_.policy == PolicyKind::kNeuralEE) {
    const double gain = explore_.forward(features);
    const double diff = gain - res.explore_target;
    if (std::isfinite(diff)) {
      const auto g_explore = explore_.backward(features, 2.0 * diff);
      explore_opt_.step(explore_.parameters(), g_explore);
    } else {
      res.skipped = true;
    }
  }
  exploit_opt_.step(exploit_.parameters(), g_exploit);
  return res;
}

nlohmann::json to_json(const NeuralBandit& b) {
  return {{"policy", to_string(b.config_.policy)},
          {"hidden", b.config_.hidden},
          {"learning_rate", b.config_.learning_rate},
          {"epsilon", b.config_.epsilon},
          {"exploit", to_json(b.exploit_)},
          {"explore", to_json(b.explore_)},
          {"exploit_opt", to_json(b.exploit_opt_)},
          {"explore_opt", to_json(b.explore_opt_)}};
}

NeuralBandit bandit_from_json(const nlohmann::json& j) {
  NeuralBandit b;
  auto policy = parse_policy_kind(j.at("policy").get<std::string>());
  if (!policy) throw Error(ErrorCode::kConfig, "unknown bandit policy");
  b.config_.policy = *policy;
  b.config_.hidden = j.at("hidden").get<std::size_t>();
  b.config_.learning_rate = j.at("learning_rate").get<double>();
  b.config_.epsilon = j.at("epsilon").get<double>();
  b.exploit_ = net_from_json(j.at("exploit"));
  b.explore_ = net_from_json(j.at("explore"));
  b.exploit_opt_ = adam_from_json(j.at("exploit_opt"));
  b.explore_opt_ = adam_from_json(j.at("explore_opt"));
  return b;
}

EngagementTable default_engagement_table() {
  EngagementTable h{};
  h[static_cast<std::size_t>(ActionKind::kReply)] = 1.0;
  h[static_cast<std::size_t>(ActionKind::kRetweet)] = 1.0;
  h[static_cast<std::size_t>(ActionKind::kLike)] = 0.5;
  h[static_cast<std::size_t>(ActionKind::kFollow)] = 1.0;
  h[static_cast<std::size_t>(ActionKind::kDislike)] = 0.25;
  h[static_cast<std::size_t>(ActionKind::kDoNothing)] = 0.0;
  // Outside the fixed table: a fresh post prompted by the message counts as
  // shallow engagement, an unfollow as none.
  h[static_cast<std::size_t>(ActionKind::kTweet)] = 0.5;
  h[static_cast<std::size_t>(ActionKind::kUnfollow)] = 0.0;
  return h;
}

double reward_cross_view(double s_sender, double s_receiver, const ReactionOutcome& reaction, double mu) {
  const double divergence = std::abs(s_sender - s_receiver) / 2.0;
  const double penalty = std::max(0.0, 1.0 - mu * reaction.toxicity);
  return std::clamp(divergence * reaction.engagement_weight * penalty, 0.0, 1.0);
}

double reward_misinfo(int mis_prev, int mis_now) {
  return std::max(0.0, static_cast<double>(mis_prev - mis_now));
}

}  // namespace policysim
