#include "policysim/config.hpp"

#include <cmath>
#include <set>

#include "policysim/error.hpp"
#include "policysim/events.hpp"

namespace policysim {

std::string_view to_string(Objective o) noexcept {
  switch (o) {
    case Objective::kNone: return "none";
    case Objective::kCrossView: return "cross_view";
    case Objective::kMisinfo: return "misinfo";
  }
  return "none";
}

namespace {

Objective parse_objective(const std::string& s) {
  if (s == "none") return Objective::kNone;
  if (s == "cross_view") return Objective::kCrossView;
  if (s == "misinfo") return Objective::kMisinfo;
  throw Error(ErrorCode::kConfig, "objective must be none, cross_view or misinfo, got '" + s + "'");
}

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported.
class Section {
 public:
  Section(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j.is_object()) throw Error(ErrorCode::kConfig, where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    used_.insert(key);
    try {
      out = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw Error(ErrorCode::kConfig, "bad value for " + where(key) + ": " + it->dump());
    }
  }

  void range(const char* key, std::pair<double, double>& out) {
    std::vector<double> v;
    get(key, v);
    if (!j_.contains(key)) return;
    if (v.size() != 2 || v[0] > v[1]) throw Error(ErrorCode::kConfig, where(key) + " must be [lo, hi] with lo <= hi");
    out = {v[0], v[1]};
  }

  const nlohmann::json* sub(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    used_.insert(key);
    return &*it;
  }

  [[nodiscard]] std::string where(const std::string& key = "") const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.contains(k)) throw Error(ErrorCode::kConfig, "unknown config key " + where(k));
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> used_;
};

void check(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::kConfig, message);
}

bool unit(double x) { return x >= 0.0 && x <= 1.0; }
bool unit(const std::pair<double, double>& r) { return unit(r.first) && unit(r.second); }

nlohmann::json range_json(const std::pair<double, double>& r) { return nlohmann::json::array({r.first, r.second}); }

}  // namespace

void RunConfig::validate() const {
  check(rounds >= 0, "rounds must be non-negative");
  check(alpha > 0.0 && alpha < 1.0, "alpha must lie in (0,1)");
  check(lambda > 0.0, "lambda must be positive");
  check(unit(gamma), "gamma must lie in [0,1]");
  check(hops >= 0, "hops must be non-negative");
  check(mu >= 0.0, "mu must be non-negative");
  feed.validate();
  check(unit(exposure_default), "exposure.default must lie in [0,1]");
  check(bandit.budget >= 1, "bandit.budget must be at least 1");
  bandit.net.validate();
  check(!(objective == Objective::kCrossView && bandit.kind == ArmKind::kExposure),
        "objective cross_view needs recommend arms");
  for (double h : bandit.engagement) check(h >= 0.0 && std::isfinite(h), "engagement weights must be non-negative");
  check(backend.mode == BackendMode::kScripted || !backend.url.empty(), "backend.url is required for the llm backend");
  check(backend.retries >= 0 && backend.timeout_seconds > 0, "backend retry/timeout settings are invalid");
  check(embedding.dimension >= 1, "embedding.dimension must be positive");
  check(!embedding.remote || !embedding.url.empty(), "embedding.url is required for remote embeddings");
  check(!toxicity.remote || !toxicity.url.empty(), "toxicity.url is required for remote scoring");
  for (const auto& n : news) {
    check(n.stance >= -1 && n.stance <= 1, "news stance must be -1, 0 or 1");
    check(!n.text.empty(), "news text must be non-empty");
  }
  check(unit(misinfo.fraction), "misinfo.fraction must lie in [0,1]");
  check(unit(misinfo.corrective_fraction), "misinfo.corrective_fraction must lie in [0,1]");
  check(misinfo.stance >= -1 && misinfo.stance <= 1, "misinfo.stance must be -1, 0 or 1");
  check(misinfo.window >= 1, "misinfo.window must be at least 1");
  check(!misinfo.text.empty() && !misinfo.corrective_text.empty(), "misinfo texts must be non-empty");
  const auto& p = population;
  check(p.meta_dir.empty() ? p.agents >= 1 : true, "population.agents must be positive");
  check(unit(p.follow_probability), "population.follow_probability must lie in [0,1]");
  check(p.stance_range.first >= -1.0 && p.stance_range.second <= 1.0, "population.stance_range must lie in [-1,1]");
  check(unit(p.activity_range) && unit(p.homophily_range) && unit(p.toxicity_range) && unit(p.adoption_range) &&
            unit(p.confrontational_toxicity),
        "population parameter ranges must lie in [0,1]");
  check(unit(p.confrontational_fraction), "population.confrontational_fraction must lie in [0,1]");
  check(memory.capacity >= 1 && memory.sample_count >= 1, "memory capacity and sample count must be positive");
  check(max_concurrency >= 1, "max_concurrency must be at least 1");
  check(checkpoint_every >= 1, "checkpoint_every must be at least 1");
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("rounds", c.rounds);
  root.get("topic", c.topic);
  root.get("alpha", c.alpha);
  root.get("lambda", c.lambda);
  root.get("gamma", c.gamma);
  root.get("hops", c.hops);
  root.get("mu", c.mu);
  root.get("max_concurrency", c.max_concurrency);
  root.get("checkpoint_every", c.checkpoint_every);
  root.get("checkpoint_dir", c.checkpoint_dir);
  std::string objective = "none";
  root.get("objective", objective);
  c.objective = parse_objective(objective);

  if (const auto* f = root.sub("feed")) {
    Section s(*f, "feed");
    s.get("relational", c.feed.quota_relational);
    s.get("personalized", c.feed.quota_personalized);
    s.get("headline", c.feed.quota_headline);
    s.get("headline_window", c.feed.headline_window);
    s.finish();
  }
  if (const auto* e = root.sub("exposure")) {
    Section s(*e, "exposure");
    s.get("default", c.exposure_default);
    s.finish();
  }
  if (const auto* b = root.sub("bandit")) {
    Section s(*b, "bandit");
    std::string kind = std::string(to_string(c.bandit.kind));
    s.get("kind", kind);
    auto k = parse_arm_kind(kind);
    check(k.has_value(), "bandit.kind must be recommend or exposure");
    c.bandit.kind = *k;
    std::string policy = std::string(to_string(c.bandit.net.policy));
    s.get("policy", policy);
    auto pk = parse_policy_kind(policy);
    check(pk.has_value(), "bandit.policy must be ee, epsilon_greedy or random");
    c.bandit.net.policy = *pk;
    s.get("n_users", c.bandit.sizes.n_users);
    s.get("n_posts", c.bandit.sizes.n_posts);
    s.get("budget", c.bandit.budget);
    s.get("hidden", c.bandit.net.hidden);
    s.get("learning_rate", c.bandit.net.learning_rate);
    s.get("epsilon", c.bandit.net.epsilon);
    if (const auto* h = s.sub("engagement")) {
      check(h->is_object(), "bandit.engagement must be an object");
      for (const auto& [label, value] : h->items()) {
        auto kind_of = parse_action_kind(label);
        check(kind_of.has_value() && value.is_number(), "bad engagement entry '" + label + "'");
        c.bandit.engagement[static_cast<std::size_t>(*kind_of)] = value.get<double>();
      }
    }
    s.finish();
  }
  if (const auto* b = root.sub("backend")) {
    Section s(*b, "backend");
    std::string mode = "scripted";
    s.get("mode", mode);
    check(mode == "scripted" || mode == "llm", "backend.mode must be scripted or llm");
    c.backend.mode = mode == "llm" ? BackendMode::kLlm : BackendMode::kScripted;
    s.get("url", c.backend.url);
    s.get("model", c.backend.model);
    s.get("temperature", c.backend.temperature);
    s.get("max_tokens", c.backend.max_tokens);
    s.get("timeout_seconds", c.backend.timeout_seconds);
    s.get("retries", c.backend.retries);
    s.get("api_key_env", c.backend.api_key_env);
    s.get("template_dir", c.backend.template_dir);
    s.finish();
  }
  if (const auto* e = root.sub("embedding")) {
    Section s(*e, "embedding");
    std::string mode = "hashed";
    s.get("mode", mode);
    check(mode == "hashed" || mode == "remote", "embedding.mode must be hashed or remote");
    c.embedding.remote = mode == "remote";
    s.get("dimension", c.embedding.dimension);
    s.get("url", c.embedding.url);
    s.get("model", c.embedding.model);
    s.finish();
  }
  if (const auto* t = root.sub("toxicity")) {
    Section s(*t, "toxicity");
    std::string mode = "lexicon";
    s.get("mode", mode);
    check(mode == "lexicon" || mode == "remote", "toxicity.mode must be lexicon or remote");
    c.toxicity.remote = mode == "remote";
    s.get("url", c.toxicity.url);
    s.finish();
  }
  if (const auto* n = root.sub("news")) {
    check(n->is_array(), "news must be an array");
    for (std::size_t i = 0; i < n->size(); ++i) {
      Section s((*n)[i], "news[" + std::to_string(i) + "]");
      NewsItem item;
      s.get("round", item.round);
      s.get("text", item.text);
      s.get("stance", item.stance);
      s.finish();
      c.news.push_back(std::move(item));
    }
  }
  if (const auto* m = root.sub("misinfo")) {
    Section s(*m, "misinfo");
    s.get("fraction", c.misinfo.fraction);
    s.get("text", c.misinfo.text);
    s.get("stance", c.misinfo.stance);
    s.get("window", c.misinfo.window);
    s.get("corrective_round", c.misinfo.corrective_round);
    s.get("corrective_fraction", c.misinfo.corrective_fraction);
    s.get("corrective_text", c.misinfo.corrective_text);
    s.finish();
  }
  if (const auto* p = root.sub("population")) {
    Section s(*p, "population");
    s.get("meta_dir", c.population.meta_dir);
    s.get("agents", c.population.agents);
    s.get("follow_probability", c.population.follow_probability);
    s.range("stance_range", c.population.stance_range);
    s.range("activity_range", c.population.activity_range);
    s.range("homophily_range", c.population.homophily_range);
    s.range("toxicity_range", c.population.toxicity_range);
    s.range("adoption_range", c.population.adoption_range);
    s.get("confrontational_fraction", c.population.confrontational_fraction);
    s.range("confrontational_toxicity", c.population.confrontational_toxicity);
    s.finish();
  }
  if (const auto* m = root.sub("memory")) {
    Section s(*m, "memory");
    s.get("capacity", c.memory.capacity);
    s.get("bypass_chars", c.memory.bypass_chars);
    s.get("fallback_tokens", c.memory.fallback_tokens);
    s.get("long_term_chars", c.memory.long_term_chars);
    s.get("sample_count", c.memory.sample_count);
    s.finish();
  }
  if (const auto* m = root.sub("scripted")) {
    Section s(*m, "scripted");
    s.get("base_like", c.scripted.base_like);
    s.get("base_retweet", c.scripted.base_retweet);
    s.get("base_reply", c.scripted.base_reply);
    s.get("base_dislike", c.scripted.base_dislike);
    s.get("base_tweet", c.scripted.base_tweet);
    s.get("idle_tweet", c.scripted.idle_tweet);
    s.get("news_gain", c.scripted.news_gain);
    s.get("post_gain", c.scripted.post_gain);
    s.get("dead_zone", c.scripted.dead_zone);
    s.finish();
  }
  root.finish();
  c.validate();
  return c;
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json engagement = nlohmann::json::object();
  for (std::size_t k = 0; k < kActionKindCount; ++k) {
    engagement[std::string(to_string(static_cast<ActionKind>(k)))] = c.bandit.engagement[k];
  }
  nlohmann::json news = nlohmann::json::array();
  for (const auto& n : c.news) news.push_back({{"round", n.round}, {"text", n.text}, {"stance", n.stance}});
  const auto& p = c.population;
  return {
      {"seed", c.seed},
      {"rounds", c.rounds},
      {"topic", c.topic},
      {"alpha", c.alpha},
      {"lambda", c.lambda},
      {"gamma", c.gamma},
      {"hops", c.hops},
      {"mu", c.mu},
      {"objective", to_string(c.objective)},
      {"max_concurrency", c.max_concurrency},
      {"checkpoint_every", c.checkpoint_every},
      {"checkpoint_dir", c.checkpoint_dir},
      {"feed",
       {{"relational", c.feed.quota_relational},
        {"personalized", c.feed.quota_personalized},
        {"headline", c.feed.quota_headline},
        {"headline_window", c.feed.headline_window}}},
      {"exposure", {{"default", c.exposure_default}}},
      {"bandit",
       {{"kind", to_string(c.bandit.kind)},
        {"policy", to_string(c.bandit.net.policy)},
        {"n_users", c.bandit.sizes.n_users},
        {"n_posts", c.bandit.sizes.n_posts},
        {"budget", c.bandit.budget},
        {"hidden", c.bandit.net.hidden},
        {"learning_rate", c.bandit.net.learning_rate},
        {"epsilon", c.bandit.net.epsilon},
        {"engagement", engagement}}},
      {"backend",
       {{"mode", c.backend.mode == BackendMode::kLlm ? "llm" : "scripted"},
        {"url", c.backend.url},
        {"model", c.backend.model},
        {"temperature", c.backend.temperature},
        {"max_tokens", c.backend.max_tokens},
        {"timeout_seconds", c.backend.timeout_seconds},
        {"retries", c.backend.retries},
        {"api_key_env", c.backend.api_key_env},
        {"template_dir", c.backend.template_dir}}},
      {"embedding",
       {{"mode", c.embedding.remote ? "remote" : "hashed"},
        {"dimension", c.embedding.dimension},
        {"url", c.embedding.url},
        {"model", c.embedding.model}}},
      {"toxicity", {{"mode", c.toxicity.remote ? "remote" : "lexicon"}, {"url", c.toxicity.url}}},
      {"news", news},
      {"misinfo",
       {{"fraction", c.misinfo.fraction},
        {"text", c.misinfo.text},
        {"stance", c.misinfo.stance},
        {"window", c.misinfo.window},
        {"corrective_round", c.misinfo.corrective_round},
        {"corrective_fraction", c.misinfo.corrective_fraction},
        {"corrective_text", c.misinfo.corrective_text}}},
      {"population",
       {{"meta_dir", p.meta_dir},
        {"agents", p.agents},
        {"follow_probability", p.follow_probability},
        {"stance_range", range_json(p.stance_range)},
        {"activity_range", range_json(p.activity_range)},
        {"homophily_range", range_json(p.homophily_range)},
        {"toxicity_range", range_json(p.toxicity_range)},
        {"adoption_range", range_json(p.adoption_range)},
        {"confrontational_fraction", p.confrontational_fraction},
        {"confrontational_toxicity", range_json(p.confrontational_toxicity)}}},
      {"memory",
       {{"capacity", c.memory.capacity},
        {"bypass_chars", c.memory.bypass_chars},
        {"fallback_tokens", c.memory.fallback_tokens},
        {"long_term_chars", c.memory.long_term_chars},
        {"sample_count", c.memory.sample_count}}},
      {"scripted",
       {{"base_like", c.scripted.base_like},
        {"base_retweet", c.scripted.base_retweet},
        {"base_reply", c.scripted.base_reply},
        {"base_dislike", c.scripted.base_dislike},
        {"base_tweet", c.scripted.base_tweet},
        {"idle_tweet", c.scripted.idle_tweet},
        {"news_gain", c.scripted.news_gain},
        {"post_gain", c.scripted.post_gain},
        {"dead_zone", c.scripted.dead_zone}}},
  };
}

RunConfig load_config(const std::filesystem::path& path) {
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kConfig, "config file is not valid JSON: " + path.string());
  return config_from_json(j);
}

}  // namespace policysim
