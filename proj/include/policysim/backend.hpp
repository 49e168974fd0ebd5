#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "policysim/agent.hpp"
#include "policysim/http_client.hpp"
#include "policysim/prompt.hpp"

namespace policysim {

struct DecisionResult {
  ActionBundle bundle;
  bool parse_failed = false;
  std::string reasoning;  // chain-of-thought text, logged but never interpreted
  std::vector<std::string> warnings;
};

/// Where agent behavior comes from: a remote chat model or the scripted
/// stand-in. Implementations must tolerate concurrent calls.
class DecisionBackend {
 public:
  virtual ~DecisionBackend() = default;

  [[nodiscard]] virtual bool scripted() const noexcept = 0;

  /// Renders `template_id`, asks the model, and returns the string stored
  /// under `response_key` in its JSON answer. nullopt means the backend has no
  /// generative path and the caller should use its deterministic fallback.
  /// Throws on transport or parse failure.
  virtual std::optional<std::string> complete(std::string_view template_id, const PromptFields& fields,
                                              std::string_view response_key) = 0;

  virtual DecisionResult decide(const Agent& agent, const DecisionContext& context, std::uint64_t seed) = 0;

  /// Discrete stance in {-1, 0, 1}. Throws when the backend cannot answer.
  virtual int infer_stance(const Agent& agent, std::span<const Action> history, std::string_view topic) = 0;
};

/// Coefficients of the scripted decision model.
///
/// For a message with stance tag s, an agent with latent stance l has
/// alignment A = l * s, pos = max(A, 0), neg = max(-A, 0) and damp =
/// 1 - adoption * pos. The agent is active with probability activity_rate;
/// an active agent picks one primary action with weights
///
///   like    = damp * base_like    + adoption * pos / 2
///   retweet = damp * base_retweet + adoption * pos / 2
///   reply   = damp * (base_reply   + homophily * neg)
///   dislike = damp * (base_dislike + homophily * neg)
///   tweet   = damp * base_tweet
///
/// and then, independently, follows an unfollowed sender with probability
/// adoption * pos or unfollows a followed sender with probability
/// homophily * neg. Without a message an active agent tweets with
/// probability idle_tweet. Replies turn toxic with probability
/// toxicity_propensity * (0.1 + 0.9 * neg).
///
/// Latent stance drifts toward every consumed message and news item:
/// l += adoption * gain * ((1 - homophily) + homophily * A) * (s - l), clamped
/// to [-1, 1]. Strongly opposed, homophilous agents get a negative factor and
/// move away from the source.
struct ScriptedModel {
  double base_like = 0.30;
  double base_retweet = 0.15;
  double base_reply = 0.20;
  double base_dislike = 0.10;
  double base_tweet = 0.25;
  double idle_tweet = 0.25;
  double news_gain = 0.25;
  double post_gain = 0.05;
  double dead_zone = 0.2;  // |latent| below this infers stance 0
};

struct ActionDistribution {
  /// Unconditional probability of each primary action, indexed by ActionKind.
  /// Follow/unfollow entries stay zero here.
  std::array<double, kActionKindCount> primary{};
  double follow = 0.0;    // conditional on an active, non-do_nothing draw
  double unfollow = 0.0;  // idem
};

ActionDistribution scripted_distribution(const ScriptedAgentParams& params, std::optional<int> message_stance,
                                         bool followed_sender, const ScriptedModel& model = {});

double absorb_influence(const ScriptedAgentParams& params, int source_stance, double gain);

int scripted_stance(double latent, double dead_zone = 0.2);

class ScriptedBackend final : public DecisionBackend {
 public:
  explicit ScriptedBackend(ScriptedModel model = {}, std::string topic = "the legislation")
      : model_(model), topic_(std::move(topic)) {}

  [[nodiscard]] bool scripted() const noexcept override { return true; }
  std::optional<std::string> complete(std::string_view, const PromptFields&, std::string_view) override {
    return std::nullopt;
  }
  DecisionResult decide(const Agent& agent, const DecisionContext& context, std::uint64_t seed) override;
  int infer_stance(const Agent& agent, std::span<const Action> history, std::string_view topic) override;

  [[nodiscard]] const ScriptedModel& model() const noexcept { return model_; }

 private:
  ScriptedModel model_;
  std::string topic_;
};

/// Deterministic post text for the scripted population.
std::string scripted_post_text(int stance, std::uint64_t seed);
std::string scripted_reply_text(int stance, bool toxic, std::uint64_t seed);

struct LlmBackendConfig {
  HttpEndpoint endpoint;
  ChatOptions chat;
  std::size_t max_actions = kMaxActionsPerRound;
  std::string system_prompt = "You simulate a social media user. Follow the requested output format exactly.";
};

class LlmBackend final : public DecisionBackend {
 public:
  LlmBackend(LlmBackendConfig config, PromptLibrary prompts);

  [[nodiscard]] bool scripted() const noexcept override { return false; }
  std::optional<std::string> complete(std::string_view template_id, const PromptFields& fields,
                                      std::string_view response_key) override;
  DecisionResult decide(const Agent& agent, const DecisionContext& context, std::uint64_t seed) override;
  int infer_stance(const Agent& agent, std::span<const Action> history, std::string_view topic) override;

 private:
  LlmBackendConfig config_;
  PromptLibrary prompts_;
  ChatClient client_;
};

/// Pulls `key` out of the first JSON object in `raw`; objects are re-dumped.
std::optional<std::string> extract_json_field(std::string_view raw, std::string_view key);

/// Four-attribute persona. Scripted backends use keyword heuristics; a failing
/// remote backend falls back to them and marks the profile. Throws
/// kInvalidArgument when the record has neither posts nor a description.
AgentProfile synthesize_profile(const UserRecord& record, DecisionBackend& backend);
AgentProfile heuristic_profile(const UserRecord& record);

/// Persona text for generated scripted agents.
AgentProfile scripted_profile(const UserId& id, const ScriptedAgentParams& params, std::string_view topic);

}  // namespace policysim
