#include "policysim/agent.hpp"

#include <algorithm>
#include <array>
#include <set>

#include "policysim/error.hpp"

namespace policysim {

namespace {

constexpr std::array<std::string_view, kActionKindCount> kLabels = {
    "tweet", "retweet", "reply", "like", "dislike", "do_nothing", "follow", "unfollow"};

bool needs_content(ActionKind k) {
  return k == ActionKind::kTweet || k == ActionKind::kRetweet || k == ActionKind::kReply;
}

bool needs_post(ActionKind k) {
  return k == ActionKind::kRetweet || k == ActionKind::kReply || k == ActionKind::kLike ||
         k == ActionKind::kDislike;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// End index (inclusive) of the bracket group opened at `open`, skipping
// string literals. npos when unbalanced.
std::size_t matching_close(std::string_view s, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    const char c = s[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '[' || c == '{') ++depth;
    else if (c == ']' || c == '}') {
      if (--depth == 0) return c == ']' ? i : std::string_view::npos;
    }
  }
  return std::string_view::npos;
}

// Keeps the first relationship action per target and drops do_nothing when
// anything else is present.
void normalize_bundle(std::vector<Action>& actions, std::vector<std::string>& warnings) {
  std::set<std::string> seen_targets;
  std::vector<Action> kept;
  for (auto& a : actions) {
    if (is_relationship(a.kind)) {
      const std::string key = a.target_user.value_or("");
      if (!seen_targets.insert(key).second) {
        warnings.push_back("dropped duplicate relationship action for target '" + key + "'");
        continue;
      }
    }
    kept.push_back(std::move(a));
  }
  const bool has_other = std::any_of(kept.begin(), kept.end(),
                                     [](const Action& a) { return a.kind != ActionKind::kDoNothing; });
  if (has_other) {
    std::erase_if(kept, [](const Action& a) { return a.kind == ActionKind::kDoNothing; });
  } else if (kept.size() > 1) {
    kept.resize(1);
  }
  actions = std::move(kept);
}

}  // namespace

std::string_view to_string(ActionKind kind) noexcept {
  return kLabels[static_cast<std::size_t>(kind)];
}

std::optional<ActionKind> parse_action_kind(std::string_view label) noexcept {
  for (std::size_t i = 0; i < kLabels.size(); ++i) {
    if (kLabels[i] == label) return static_cast<ActionKind>(i);
  }
  if (label == "post") return ActionKind::kTweet;
  return std::nullopt;
}

bool is_relationship(ActionKind kind) noexcept {
  return kind == ActionKind::kFollow || kind == ActionKind::kUnfollow;
}

bool is_valid(const Action& a) {
  const bool has_content = a.content && !a.content->empty();
  switch (a.kind) {
    case ActionKind::kTweet:
      return has_content && !a.target_user;
    case ActionKind::kRetweet:
    case ActionKind::kReply:
      return has_content && a.target_post.has_value() && !a.target_user;
    case ActionKind::kLike:
    case ActionKind::kDislike:
      return a.target_post.has_value() && !a.content && !a.target_user;
    case ActionKind::kFollow:
    case ActionKind::kUnfollow:
      return a.target_user.has_value() && !a.target_user->empty() && !a.content && !a.target_post;
    case ActionKind::kDoNothing:
      return !a.content && !a.target_post && !a.target_user;
  }
  return false;
}

bool is_valid(const ActionBundle& bundle, std::size_t max_actions) {
  if (bundle.actions.empty() || bundle.actions.size() > max_actions) return false;
  std::set<std::string> targets;
  for (const auto& a : bundle.actions) {
    if (!is_valid(a)) return false;
    if (a.kind == ActionKind::kDoNothing && bundle.actions.size() > 1) return false;
    if (is_relationship(a.kind) && !targets.insert(*a.target_user).second) return false;
  }
  return true;
}

ParsedActions parse_actions(std::string_view raw, std::size_t max_actions, int round) {
  ParsedActions out;
  out.bundle.round = round;
  nlohmann::json array;
  std::size_t begin = std::string_view::npos;
  std::size_t end = std::string_view::npos;
  for (std::size_t pos = raw.find('['); pos != std::string_view::npos; pos = raw.find('[', pos + 1)) {
    const std::size_t close = matching_close(raw, pos);
    if (close == std::string_view::npos) continue;
    auto parsed = nlohmann::json::parse(raw.substr(pos, close - pos + 1), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_array()) continue;
    array = std::move(parsed);
    begin = pos;
    end = close;
    break;
  }
  if (begin == std::string_view::npos) throw Error(ErrorCode::kParse, "no JSON action array in backend output");

  std::string rest = std::string(raw.substr(0, begin)) + std::string(raw.substr(end + 1));
  std::erase(rest, '`');
  out.reasoning = trim(rest);

  std::vector<Action> actions;
  for (const auto& item : array) {
    if (!item.is_object() || !item.contains("action") || !item["action"].is_string()) {
      out.warnings.push_back("dropped entry without an action label");
      continue;
    }
    const auto label = item["action"].get<std::string>();
    auto kind = parse_action_kind(label);
    if (!kind) {
      out.warnings.push_back("dropped unknown action '" + label + "'");
      continue;
    }
    Action a;
    a.kind = *kind;
    if (item.contains("content") && item["content"].is_string() && needs_content(a.kind)) {
      std::string text = trim(item["content"].get<std::string>());
      if (!text.empty()) a.content = std::move(text);
    }
    if (item.contains("target_post") && item["target_post"].is_number_integer() && needs_post(a.kind)) {
      a.target_post = item["target_post"].get<PostId>();
    }
    if (item.contains("target_user") && item["target_user"].is_string() && is_relationship(a.kind)) {
      a.target_user = item["target_user"].get<std::string>();
    }
    if ((a.kind == ActionKind::kTweet || a.kind == ActionKind::kReply) && !a.content) {
      out.warnings.push_back("dropped " + label + " without content");
      continue;
    }
    actions.push_back(std::move(a));
  }
  normalize_bundle(actions, out.warnings);
  if (actions.size() > max_actions) {
    out.warnings.push_back("truncated " + std::to_string(actions.size()) + " actions to " +
                           std::to_string(max_actions));
    actions.resize(max_actions);
  }
  if (actions.empty()) {
    out.warnings.push_back("no usable actions; substituting do_nothing");
    actions.push_back(Action{});
  }
  out.bundle.actions = std::move(actions);
  return out;
}

nlohmann::json to_json(const Action& a) {
  nlohmann::json j;
  j["action"] = std::string(to_string(a.kind));
  if (a.content) j["content"] = *a.content;
  if (a.target_post) j["target_post"] = *a.target_post;
  if (a.target_user) j["target_user"] = *a.target_user;
  return j;
}

std::string serialize_actions(const ActionBundle& bundle) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& a : bundle.actions) arr.push_back(to_json(a));
  return arr.dump();
}

ActionBundle bind_targets(ActionBundle bundle, const std::optional<IncomingMessage>& message) {
  std::vector<Action> bound;
  std::vector<std::string> ignored;
  for (auto a : bundle.actions) {
    if (needs_post(a.kind) && !a.target_post) {
      if (!message) continue;
      a.target_post = message->post_id;
    }
    if (a.kind == ActionKind::kRetweet && !a.content) {
      if (!message || message->content.empty()) continue;
      a.content = message->content;
    }
    if (is_relationship(a.kind) && !a.target_user) {
      if (!message) continue;
      a.target_user = message->author;
    }
    bound.push_back(std::move(a));
  }
  normalize_bundle(bound, ignored);
  if (bound.empty()) bound.push_back(Action{});
  bundle.actions = std::move(bound);
  return bundle;
}

std::string AgentProfile::to_text() const {
  std::string areas;
  for (std::size_t i = 0; i < interested_areas.size(); ++i) {
    if (i) areas += ", ";
    areas += interested_areas[i];
  }
  return "Likely identity: " + likely_identity + "\nInterested areas: " + areas +
         "\nPosting style: " + posting_style + "\nInteraction behavior: " + interaction_behavior;
}

nlohmann::json to_json(const AgentProfile& p) {
  nlohmann::json j{{"user_id", p.user_id},
                   {"likely_identity", p.likely_identity},
                   {"interested_areas", p.interested_areas},
                   {"posting_style", p.posting_style},
                   {"interaction_behavior", p.interaction_behavior},
                   {"synthetic_fallback", p.synthetic_fallback}};
  if (p.raw_metadata) j["raw_metadata"] = *p.raw_metadata;
  return j;
}

AgentProfile profile_from_json(const nlohmann::json& j) {
  AgentProfile p;
  p.user_id = j.at("user_id").get<std::string>();
  p.likely_identity = j.at("likely_identity").get<std::string>();
  p.interested_areas = j.at("interested_areas").get<std::vector<std::string>>();
  p.posting_style = j.at("posting_style").get<std::string>();
  p.interaction_behavior = j.at("interaction_behavior").get<std::string>();
  p.synthetic_fallback = j.value("synthetic_fallback", false);
  if (j.contains("raw_metadata")) p.raw_metadata = j["raw_metadata"];
  return p;
}

void ScriptedAgentParams::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!(latent_stance >= -1.0 && latent_stance <= 1.0) || !unit(activity_rate) || !unit(homophily) ||
      !unit(toxicity_propensity) || !unit(adoption_rate)) {
    throw Error(ErrorCode::kInvalidArgument, "scripted agent parameter out of range");
  }
}

nlohmann::json to_json(const ScriptedAgentParams& p) {
  return {{"latent_stance", p.latent_stance},
          {"activity_rate", p.activity_rate},
          {"homophily", p.homophily},
          {"toxicity_propensity", p.toxicity_propensity},
          {"adoption_rate", p.adoption_rate}};
}

ScriptedAgentParams params_from_json(const nlohmann::json& j) {
  ScriptedAgentParams p;
  p.latent_stance = j.at("latent_stance").get<double>();
  p.activity_rate = j.at("activity_rate").get<double>();
  p.homophily = j.at("homophily").get<double>();
  p.toxicity_propensity = j.at("toxicity_propensity").get<double>();
  p.adoption_rate = j.at("adoption_rate").get<double>();
  p.validate();
  return p;
}

}  // namespace policysim
