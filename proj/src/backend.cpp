#include "policysim/backend.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <regex>

#include "policysim/error.hpp"
#include "policysim/rng.hpp"

namespace policysim {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

int sign_of(double v) { return (v > 0) - (v < 0); }

template <std::size_t N>
std::string_view pick(const std::array<std::string_view, N>& bank, Rng& rng) {
  return bank[rng.below(N)];
}

constexpr std::array<std::string_view, 5> kSupportPhrases = {
    "we must protect this law and defend the bill",
    "proud to support the legislation for our families",
    "this is the right policy, stand firm and keep it",
    "the legislation protects life and deserves support",
    "defend the bill, our values are worth it"};
constexpr std::array<std::string_view, 5> kOpposePhrases = {
    "this law must be repealed, it hurts real people",
    "we oppose this dangerous legislation and its harm",
    "fight back against the bill and restore our rights",
    "the legislation strips freedom from women, repeal it",
    "rights are under attack, reject this policy"};
constexpr std::array<std::string_view, 4> kNeutralPhrases = {
    "interesting debate today, still reading the details",
    "hearing both sides on this one before deciding",
    "lots of noise about the policy, waiting for facts",
    "curious how this plays out over the next weeks"};
constexpr std::array<std::string_view, 4> kToxicPhrases = {
    "you are a pathetic liar", "what an idiot take, total garbage",
    "this is disgusting, shut up you clown", "stupid moron nonsense"};
constexpr std::array<std::string_view, 4> kCivilDisagree = {
    "I respectfully disagree", "have you considered the other side",
    "not convinced by this argument", "I see it differently"};
constexpr std::array<std::string_view, 3> kCivilAgree = {
    "well said", "agreed, thanks for sharing", "exactly right"};

std::string_view stance_phrase(int stance, Rng& rng) {
  if (stance > 0) return pick(kSupportPhrases, rng);
  if (stance < 0) return pick(kOpposePhrases, rng);
  return pick(kNeutralPhrases, rng);
}

struct AreaRule {
  std::string_view area;
  std::vector<std::string_view> keywords;
};

const std::vector<AreaRule>& area_rules() {
  static const std::vector<AreaRule> rules = {
      {"politics", {"vote", "election", "senate", "congress", "president", "government", "policy",
                    "democrat", "republican", "gop", "maga", "obama", "trump", "biden", "politic",
                    "legislation", "liberal", "conservative", "#wakeupamerica"}},
      {"environment", {"climate", "environment", "planet", "carbon", "sustainab", "wildlife", "emission"}},
      {"economy", {"economy", "jobs", "market", "tax", "inflation", "business", "stock"}},
      {"technology", {"tech", "software", "startup", "crypto", "coding", "#ai"}},
      {"health", {"health", "covid", "vaccine", "medical", "hospital"}},
      {"sports", {"nba", "nfl", "football", "soccer", "basketball", "baseball"}},
      {"religion", {"god", "faith", "church", "pray", "bible"}},
      {"gun rights", {"gun", "second amendment", "nra", "#2a"}},
  };
  return rules;
}

struct IdentityRule {
  std::string_view identity;
  std::vector<std::string_view> keywords;
};

const std::vector<IdentityRule>& identity_rules() {
  static const std::vector<IdentityRule> rules = {
      {"journalist", {"journalist", "reporter", "editor", "news anchor"}},
      {"academic researcher", {"professor", "researcher", "phd", "scientist"}},
      {"student", {"student", "college", "university"}},
      {"military veteran", {"veteran", "army", "navy", "marine"}},
      {"parent", {"mom", "dad", "mother", "father", "parent"}},
      {"legal professional", {"lawyer", "attorney"}},
      {"healthcare worker", {"doctor", "nurse", "physician"}},
      {"software engineer", {"engineer", "developer", "programmer"}},
      {"activist", {"activist", "advocate", "organizer"}},
      {"writer", {"author", "writer", "blogger"}},
      {"educator", {"teacher", "educator"}},
  };
  return rules;
}

std::size_t count_occurrences(const std::string& haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

std::size_t matching_brace(std::string_view s, std::size_t open) {
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
    else if (c == '{' || c == '[') ++depth;
    else if ((c == '}' || c == ']') && --depth == 0) return i;
  }
  return std::string_view::npos;
}

std::string user_info(const UserRecord& r) {
  return "name: " + r.name + ", screen_name: " + r.screen_name + ", description: " + r.description +
         ", created_at: " + r.created_at + ", followers_count: " + std::to_string(r.followers_count) +
         ", friends_count: " + std::to_string(r.friends_count);
}

std::string tweet_list(const UserRecord& r) {
  std::string out = "[";
  for (std::size_t i = 0; i < r.tweets.size(); ++i) {
    if (i) out += ", ";
    out += "Tweet" + std::to_string(i + 1) + ": " + r.tweets[i];
  }
  return out + "]";
}

}  // namespace

ActionDistribution scripted_distribution(const ScriptedAgentParams& p, std::optional<int> message_stance,
                                         bool followed_sender, const ScriptedModel& m) {
  ActionDistribution d;
  auto& pr = d.primary;
  const double active = p.activity_rate;
  pr[static_cast<std::size_t>(ActionKind::kDoNothing)] = 1.0 - active;
  if (!message_stance) {
    pr[static_cast<std::size_t>(ActionKind::kTweet)] = active * m.idle_tweet;
    pr[static_cast<std::size_t>(ActionKind::kDoNothing)] += active * (1.0 - m.idle_tweet);
    return d;
  }
  const double align = p.latent_stance * static_cast<double>(*message_stance);
  const double pos = std::max(align, 0.0);
  const double neg = std::max(-align, 0.0);
  const double damp = 1.0 - p.adoption_rate * pos;
  std::array<double, kActionKindCount> w{};
  w[static_cast<std::size_t>(ActionKind::kLike)] = damp * m.base_like + p.adoption_rate * pos / 2.0;
  w[static_cast<std::size_t>(ActionKind::kRetweet)] = damp * m.base_retweet + p.adoption_rate * pos / 2.0;
  w[static_cast<std::size_t>(ActionKind::kReply)] = damp * (m.base_reply + p.homophily * neg);
  w[static_cast<std::size_t>(ActionKind::kDislike)] = damp * (m.base_dislike + p.homophily * neg);
  w[static_cast<std::size_t>(ActionKind::kTweet)] = damp * m.base_tweet;
  double total = 0.0;
  for (double x : w) total += x;
  for (std::size_t k = 0; k < kActionKindCount; ++k) {
    if (total > 0.0) pr[k] += active * w[k] / total;
  }
  if (!(total > 0.0)) pr[static_cast<std::size_t>(ActionKind::kDoNothing)] = 1.0;
  d.follow = followed_sender ? 0.0 : p.adoption_rate * pos;
  d.unfollow = followed_sender ? p.homophily * neg : 0.0;
  return d;
}

double absorb_influence(const ScriptedAgentParams& p, int source_stance, double gain) {
  const double s = static_cast<double>(source_stance);
  const double align = p.latent_stance * s;
  const double factor = (1.0 - p.homophily) + p.homophily * align;
  const double next = p.latent_stance + p.adoption_rate * gain * factor * (s - p.latent_stance);
  return std::clamp(next, -1.0, 1.0);
}

int scripted_stance(double latent, double dead_zone) {
  if (std::abs(latent) < dead_zone) return 0;
  return sign_of(latent);
}

std::string scripted_post_text(int stance, std::uint64_t seed) {
  Rng rng(seed);
  return std::string(stance_phrase(stance, rng));
}

std::string scripted_reply_text(int stance, bool toxic, std::uint64_t seed) {
  Rng rng(seed);
  if (toxic) return std::string(pick(kToxicPhrases, rng)) + ", " + std::string(stance_phrase(stance, rng));
  return std::string(pick(kCivilDisagree, rng)) + ": " + std::string(stance_phrase(stance, rng));
}

DecisionResult ScriptedBackend::decide(const Agent& agent, const DecisionContext& ctx, std::uint64_t seed) {
  Rng rng(seed);
  const auto& p = agent.params;
  const std::optional<int> stance =
      ctx.message ? std::optional<int>(ctx.message->stance_tag) : std::nullopt;
  const bool followed = ctx.message && ctx.message->followed_sender;
  const ActionDistribution dist = scripted_distribution(p, stance, followed, model_);

  std::vector<double> weights(dist.primary.begin(), dist.primary.end());
  const auto kind = static_cast<ActionKind>(rng.categorical(weights));
  const int own = scripted_stance(p.latent_stance, model_.dead_zone);

  DecisionResult result;
  result.bundle.round = ctx.round;
  Action primary;
  primary.kind = kind;
  switch (kind) {
    case ActionKind::kTweet:
      primary.content = scripted_post_text(own, rng.next());
      break;
    case ActionKind::kRetweet:
      primary.content = ctx.message->content;
      primary.target_post = ctx.message->post_id;
      break;
    case ActionKind::kReply: {
      const double align = p.latent_stance * static_cast<double>(ctx.message->stance_tag);
      const double neg = std::max(-align, 0.0);
      const bool toxic = rng.bernoulli(p.toxicity_propensity * (0.1 + 0.9 * neg));
      if (align > 0.0 && !toxic) {
        Rng phrase(rng.next());
        primary.content = std::string(pick(kCivilAgree, phrase)) + ", " + std::string(stance_phrase(own, phrase));
      } else {
        primary.content = scripted_reply_text(own, toxic, rng.next());
      }
      primary.target_post = ctx.message->post_id;
      break;
    }
    case ActionKind::kLike:
    case ActionKind::kDislike:
      primary.target_post = ctx.message->post_id;
      break;
    default:
      break;
  }
  result.bundle.actions.push_back(primary);
  if (kind != ActionKind::kDoNothing && ctx.message && ctx.message->author != agent.profile.user_id) {
    const double u = rng.uniform();
    if (u < dist.follow) {
      result.bundle.actions.push_back(Action{ActionKind::kFollow, std::nullopt, std::nullopt, ctx.message->author});
    } else if (u < dist.follow + dist.unfollow) {
      result.bundle.actions.push_back(Action{ActionKind::kUnfollow, std::nullopt, std::nullopt, ctx.message->author});
    }
  }
  return result;
}

int ScriptedBackend::infer_stance(const Agent& agent, std::span<const Action>, std::string_view) {
  return scripted_stance(agent.params.latent_stance, model_.dead_zone);
}

LlmBackend::LlmBackend(LlmBackendConfig config, PromptLibrary prompts)
    : config_(std::move(config)), prompts_(std::move(prompts)), client_(config_.endpoint, config_.chat) {}

std::optional<std::string> extract_json_field(std::string_view raw, std::string_view key) {
  for (std::size_t pos = raw.find('{'); pos != std::string_view::npos; pos = raw.find('{', pos + 1)) {
    const std::size_t close = matching_brace(raw, pos);
    if (close == std::string_view::npos) continue;
    auto parsed = nlohmann::json::parse(raw.substr(pos, close - pos + 1), nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object()) continue;
    auto it = parsed.find(std::string(key));
    if (it == parsed.end()) continue;
    if (it->is_string()) return it->get<std::string>();
    return it->dump();
  }
  return std::nullopt;
}

std::optional<std::string> LlmBackend::complete(std::string_view template_id, const PromptFields& fields,
                                                std::string_view response_key) {
  const std::string prompt = prompts_.render(template_id, fields);
  const std::string raw = client_.complete(config_.system_prompt, prompt);
  auto value = extract_json_field(raw, response_key);
  if (!value) throw Error(ErrorCode::kParse, "response lacks '" + std::string(response_key) + "'");
  return value;
}

DecisionResult LlmBackend::decide(const Agent& agent, const DecisionContext& ctx, std::uint64_t) {
  std::string news = "none";
  if (!ctx.trigger_news.empty()) {
    news.clear();
    for (std::size_t i = 0; i < ctx.trigger_news.size(); ++i) {
      if (i) news += " | ";
      news += ctx.trigger_news[i];
    }
  }
  PromptFields fields{{"profile", agent.profile.to_text()},
                      {"topic", ctx.topic},
                      {"news", news},
                      {"memory", ctx.memory_digest.empty() ? "none" : ctx.memory_digest},
                      {"message", ctx.message ? ctx.message->content : "none"},
                      {"followed", ctx.message && ctx.message->followed_sender ? "True" : "False"}};
  const std::string prompt = prompts_.render(templates::kActionsCalling, fields);
  std::string raw = client_.complete(config_.system_prompt, prompt);

  DecisionResult result;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      auto parsed = parse_actions(raw, config_.max_actions, ctx.round);
      result.bundle = bind_targets(std::move(parsed.bundle), ctx.message);
      result.bundle.round = ctx.round;
      result.reasoning = std::move(parsed.reasoning);
      result.warnings = std::move(parsed.warnings);
      return result;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kParse || attempt == 1) break;
      raw = client_.complete(config_.system_prompt,
                             prompt + "\n\nYour previous answer could not be parsed:\n" + raw +
                                 "\nReply again with only the JSON array of actions.");
    }
  }
  result.bundle = ActionBundle{{Action{}}, ctx.round};
  result.parse_failed = true;
  result.reasoning = raw;
  return result;
}

int LlmBackend::infer_stance(const Agent& agent, std::span<const Action> history, std::string_view topic) {
  std::string lines;
  for (const auto& a : history) lines += to_json(a).dump() + "\n";
  if (lines.empty()) lines = "(no activity yet)";
  PromptFields fields{{"topic", std::string(topic)}, {"profile", agent.profile.to_text()}, {"history", lines}};
  const std::string raw = client_.complete(config_.system_prompt, prompts_.render(templates::kStance, fields));
  static const std::regex token(R"((^|[^0-9-])(-1|0|1)($|[^0-9]))");
  std::smatch m;
  if (!std::regex_search(raw, m, token)) throw Error(ErrorCode::kParse, "stance answer has no -1/0/1 token");
  return std::stoi(m[2].str());
}

AgentProfile heuristic_profile(const UserRecord& r) {
  if (r.tweets.empty() && r.description.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "user " + r.id + " has neither posts nor a description");
  }
  std::string corpus = lower(r.description);
  for (const auto& t : r.tweets) corpus += "\n" + lower(t);
  const std::string desc = lower(r.description);

  AgentProfile p;
  p.user_id = r.id;

  std::vector<std::pair<std::size_t, std::string_view>> hits;
  for (const auto& rule : area_rules()) {
    std::size_t n = 0;
    for (auto kw : rule.keywords) n += count_occurrences(corpus, kw);
    if (n > 0) hits.emplace_back(n, rule.area);
  }
  std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; i < hits.size() && i < 3; ++i) p.interested_areas.emplace_back(hits[i].second);
  if (p.interested_areas.empty()) p.interested_areas.emplace_back("general news");

  for (const auto& rule : identity_rules()) {
    if (std::any_of(rule.keywords.begin(), rule.keywords.end(),
                    [&](std::string_view kw) { return desc.find(kw) != std::string::npos; })) {
      p.likely_identity = std::string(rule.identity);
      break;
    }
  }
  if (p.likely_identity.empty()) {
    p.likely_identity = p.interested_areas.front() == "politics" ? "politically engaged citizen"
                                                                 : "general social media user";
  }

  std::size_t chars = 0, hashtags = 0, exclaims = 0, links = 0, retweets = 0, replies = 0;
  for (const auto& t : r.tweets) {
    chars += t.size();
    hashtags += static_cast<std::size_t>(std::count(t.begin(), t.end(), '#'));
    exclaims += static_cast<std::size_t>(std::count(t.begin(), t.end(), '!'));
    links += count_occurrences(t, "http");
    if (t.rfind("RT @", 0) == 0) ++retweets;
    else if (t.rfind("@", 0) == 0) ++replies;
  }
  const double n = static_cast<double>(std::max<std::size_t>(r.tweets.size(), 1));
  if (r.tweets.empty()) {
    p.posting_style = "rarely posts; self-description only";
  } else {
    const double avg = static_cast<double>(chars) / n;
    p.posting_style = avg < 60 ? "short, punchy posts" : avg > 140 ? "long-form posts" : "medium-length posts";
    if (static_cast<double>(hashtags) / n >= 1.0) p.posting_style += ", hashtag-heavy";
    if (static_cast<double>(exclaims) / n >= 0.5) p.posting_style += ", emphatic tone";
    if (links > 0) p.posting_style += ", shares links";
  }

  if (static_cast<double>(retweets) / n > 0.4) p.interaction_behavior = "amplifier who mostly reshares others";
  else if (static_cast<double>(replies) / n > 0.3) p.interaction_behavior = "conversational, replies often";
  else p.interaction_behavior = "broadcaster of original posts";
  if (r.followers_count > 2 * r.friends_count) p.interaction_behavior += "; large audience relative to follows";
  else if (r.friends_count > 2 * r.followers_count) p.interaction_behavior += "; follows far more accounts than follow back";
  else p.interaction_behavior += "; balanced follower ratio";
  return p;
}

AgentProfile synthesize_profile(const UserRecord& record, DecisionBackend& backend) {
  AgentProfile base = heuristic_profile(record);
  if (backend.scripted()) return base;
  try {
    PromptFields fields{{"agent_id", record.id}, {"user_info", user_info(record)}, {"tweets", tweet_list(record)}};
    auto answer = backend.complete(templates::kProfileSynthesis, fields, "synthetic_profile");
    if (!answer) return base;
    auto j = nlohmann::json::parse(*answer, nullptr, false);
    AgentProfile p = base;
    if (j.is_object()) {
      auto text = [&](const char* key, std::string& dst) {
        if (j.contains(key) && j[key].is_string() && !j[key].get<std::string>().empty()) dst = j[key].get<std::string>();
      };
      text("likely_identity", p.likely_identity);
      text("posting_style", p.posting_style);
      text("interaction_behavior", p.interaction_behavior);
      if (j.contains("interested_areas")) {
        std::vector<std::string> areas;
        if (j["interested_areas"].is_array()) {
          for (const auto& a : j["interested_areas"]) {
            if (a.is_string() && !a.get<std::string>().empty()) areas.push_back(a.get<std::string>());
          }
        } else if (j["interested_areas"].is_string()) {
          areas.push_back(j["interested_areas"].get<std::string>());
        }
        if (!areas.empty()) p.interested_areas = std::move(areas);
      }
    } else if (!answer->empty()) {
      p.likely_identity = *answer;
    }
    return p;
  } catch (const Error&) {
    base.synthetic_fallback = true;
    return base;
  }
}

AgentProfile scripted_profile(const UserId& id, const ScriptedAgentParams& params, std::string_view topic) {
  AgentProfile p;
  p.user_id = id;
  const std::string t(topic);
  if (params.latent_stance >= 0.2) {
    p.likely_identity = "advocate who supports " + t;
    p.interested_areas = {"politics", "family values", t};
  } else if (params.latent_stance <= -0.2) {
    p.likely_identity = "activist who opposes " + t;
    p.interested_areas = {"politics", "civil rights", t};
  } else {
    p.likely_identity = "undecided observer of " + t;
    p.interested_areas = {"politics", "general news"};
  }
  p.posting_style = params.activity_rate > 0.6 ? "frequent short posts" : "occasional measured posts";
  p.interaction_behavior = params.toxicity_propensity > 0.5 ? "confrontational, harsh language in disagreements"
                                                            : "civil and measured in disagreements";
  p.interaction_behavior += params.homophily > 0.5 ? "; engages mostly with like-minded accounts"
                                                   : "; open to opposing views";
  return p;
}

}  // namespace policysim
