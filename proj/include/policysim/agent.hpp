#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "policysim/graph.hpp"

namespace policysim {

using PostId = std::int64_t;

enum class ActionKind { kTweet, kRetweet, kReply, kLike, kDislike, kDoNothing, kFollow, kUnfollow };

inline constexpr std::size_t kActionKindCount = 8;
inline constexpr std::size_t kMaxActionsPerRound = 3;

std::string_view to_string(ActionKind kind) noexcept;
/// Accepts the canonical labels plus "post" as an alias for tweet.
std::optional<ActionKind> parse_action_kind(std::string_view label) noexcept;
bool is_relationship(ActionKind kind) noexcept;

struct Action {
  ActionKind kind = ActionKind::kDoNothing;
  std::optional<std::string> content;
  std::optional<PostId> target_post;
  std::optional<UserId> target_user;

  bool operator==(const Action&) const = default;
};

/// Field requirements per kind: tweet/retweet/reply carry content,
/// follow/unfollow carry a target user, like/dislike a target post,
/// do_nothing carries nothing.
bool is_valid(const Action& action);

struct ActionBundle {
  std::vector<Action> actions;
  int round = 0;

  bool operator==(const ActionBundle&) const = default;
};

/// Checks length bounds, per-action validity and the one-relationship-action-
/// per-target rule.
bool is_valid(const ActionBundle& bundle, std::size_t max_actions = kMaxActionsPerRound);

struct ParsedActions {
  ActionBundle bundle;
  std::vector<std::string> warnings;
  std::string reasoning;  // free text outside the JSON array (logged only)
};

/// Tolerant extraction of the first JSON array in backend output. Unknown or
/// malformed entries are dropped with a warning; the result always satisfies
/// the bundle invariants. Throws kParse when no array is present.
ParsedActions parse_actions(std::string_view raw, std::size_t max_actions = kMaxActionsPerRound,
                            int round = 0);

nlohmann::json to_json(const Action& action);
std::string serialize_actions(const ActionBundle& bundle);

/// Raw ingested account record (the metadata fields profile synthesis reads).
struct UserRecord {
  std::string id;
  std::string name;
  std::string screen_name;
  std::string description;
  std::string created_at;
  std::int64_t followers_count = 0;
  std::int64_t friends_count = 0;
  std::vector<std::string> tweets;
};

struct AgentProfile {
  UserId user_id;
  std::string likely_identity;
  std::vector<std::string> interested_areas;
  std::string posting_style;
  std::string interaction_behavior;
  bool synthetic_fallback = false;
  std::optional<nlohmann::json> raw_metadata;

  /// Four-attribute rendering used in prompts, embeddings and exports.
  [[nodiscard]] std::string to_text() const;
  bool operator==(const AgentProfile&) const = default;
};

nlohmann::json to_json(const AgentProfile& profile);
AgentProfile profile_from_json(const nlohmann::json& j);

/// Latent parameters of the scripted decision model.
struct ScriptedAgentParams {
  double latent_stance = 0.0;        // [-1, 1]
  double activity_rate = 0.5;        // [0, 1]
  double homophily = 0.5;            // [0, 1]
  double toxicity_propensity = 0.1;  // [0, 1]
  double adoption_rate = 0.5;        // [0, 1]

  void validate() const;
  bool operator==(const ScriptedAgentParams&) const = default;
};

nlohmann::json to_json(const ScriptedAgentParams& params);
ScriptedAgentParams params_from_json(const nlohmann::json& j);

struct Agent {
  AgentProfile profile;
  ScriptedAgentParams params;
};

struct IncomingMessage {
  PostId post_id = 0;
  UserId author;
  std::string content;
  int stance_tag = 0;
  bool followed_sender = false;
};

/// Exactly the inputs of the actions-calling prompt.
struct DecisionContext {
  std::string topic;
  std::vector<std::string> trigger_news;
  std::string memory_digest;
  std::optional<IncomingMessage> message;
  int round = 0;
};

/// Fills post/user targets from the message the bundle responds to. Actions
/// that need a target but have none are dropped; retweets without content
/// copy the original.
ActionBundle bind_targets(ActionBundle bundle, const std::optional<IncomingMessage>& message);

}  // namespace policysim
