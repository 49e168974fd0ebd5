#include "policysim/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <thread>

#include "policysim/dataprep.hpp"
#include "policysim/error.hpp"
#include "policysim/rng.hpp"

namespace policysim {

namespace {

// Seed-stream tags.
constexpr std::uint64_t kTagPopulation = 0x706f70;
constexpr std::uint64_t kTagGraph = 0x677270;
constexpr std::uint64_t kTagHistory = 0x686973;
constexpr std::uint64_t kTagDecide = 0x646563;
constexpr std::uint64_t kTagMemory = 0x6d656d;
constexpr std::uint64_t kTagSeeding = 0x736565;
constexpr std::uint64_t kTagCandidates = 0x63616e;
constexpr std::uint64_t kTagSelect = 0x73656c;
constexpr std::uint64_t kTagBandit = 0x62616e;

std::uint64_t u64(int v) { return static_cast<std::uint64_t>(static_cast<std::int64_t>(v)); }

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The exception of
/// the lowest failing index is rethrown after every worker has stopped.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t threads, Fn fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t count = std::min(threads, n);
  if (count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ScriptedAgentParams draw_params(Rng& rng, const PopulationConfig& p) {
  ScriptedAgentParams a;
  a.latent_stance = rng.uniform(p.stance_range.first, p.stance_range.second);
  a.activity_rate = rng.uniform(p.activity_range.first, p.activity_range.second);
  a.homophily = rng.uniform(p.homophily_range.first, p.homophily_range.second);
  a.toxicity_propensity = rng.uniform(p.toxicity_range.first, p.toxicity_range.second);
  a.adoption_rate = rng.uniform(p.adoption_range.first, p.adoption_range.second);
  if (rng.bernoulli(p.confrontational_fraction)) {
    a.toxicity_propensity = rng.uniform(p.confrontational_toxicity.first, p.confrontational_toxicity.second);
  }
  return a;
}

std::string padded_id(std::size_t i, std::size_t n) {
  const std::size_t width = std::max<std::size_t>(3, std::to_string(n > 0 ? n - 1 : 0).size());
  std::string digits = std::to_string(i);
  return "u" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

struct Decision {
  std::optional<PostId> message;
  std::string_view channel;
  DecisionResult result;
  std::vector<ToxicityScore> toxicity;  // aligned with result.bundle.actions
};

struct MemoryOutcome {
  std::size_t fallbacks = 0;
  StanceInference stance;
};

/// Subtracts the mean row and rescales each row to unit norm. Hashed text
/// embeddings share a large common component; removing it leaves the
/// differences between users (or posts) that the bandit has to learn from.
void center_rows(std::vector<std::vector<double>>& rows) {
  if (rows.empty()) return;
  std::vector<double> mean(rows.front().size(), 0.0);
  for (const auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) mean[k] += r[k];
  }
  for (double& m : mean) m /= static_cast<double>(rows.size());
  for (auto& r : rows) {
    for (std::size_t k = 0; k < r.size(); ++k) r[k] -= mean[k];
    normalize(r);
  }
}

nlohmann::json arm_json(const PendingArm& p) {
  return {{"kind", to_string(p.arm.kind)}, {"user", p.arm.user},     {"post", p.arm.post},
          {"level", p.arm.level},          {"context", p.arm.context}, {"seq", p.seq},
          {"mis_prev", p.mis_prev},        {"sender", p.sender}};
}

PendingArm arm_from_json(const nlohmann::json& j) {
  PendingArm p;
  auto kind = parse_arm_kind(j.at("kind").get<std::string>());
  if (!kind) throw Error(ErrorCode::kParse, "unknown arm kind in snapshot");
  p.arm.kind = *kind;
  p.arm.user = j.at("user").get<std::string>();
  p.arm.post = j.at("post").get<PostId>();
  p.arm.level = j.at("level").get<double>();
  p.arm.context = j.at("context").get<std::vector<double>>();
  p.seq = j.at("seq").get<std::int64_t>();
  p.mis_prev = j.at("mis_prev").get<std::map<UserId, int>>();
  p.sender = j.at("sender").get<std::string>();
  return p;
}

}  // namespace

Simulation::Simulation(RunConfig config, Components components) : config_(std::move(config)) {
  config_.validate();
  build_components(std::move(components));
  initialize();
}

Simulation::Simulation(Resume, RunConfig config, Components components) : config_(std::move(config)) {
  config_.validate();
  build_components(std::move(components));
}

void Simulation::build_components(Components c) {
  backend_ = std::move(c.backend);
  embedder_ = std::move(c.embedder);
  toxicity_ = std::move(c.toxicity);
  if (!backend_) {
    if (config_.backend.mode == BackendMode::kScripted) {
      backend_ = std::make_unique<ScriptedBackend>(config_.scripted, config_.topic);
    } else {
      LlmBackendConfig llm;
      llm.endpoint.url = config_.backend.url;
      llm.endpoint.timeout = std::chrono::seconds(config_.backend.timeout_seconds);
      llm.endpoint.retry.max_retries = config_.backend.retries;
      if (!config_.backend.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.backend.api_key_env.c_str())) llm.endpoint.api_key = key;
      }
      llm.chat = {config_.backend.model, config_.backend.temperature, config_.backend.max_tokens};
      const auto dir = config_.backend.template_dir.empty() ? default_template_dir()
                                                            : std::filesystem::path(config_.backend.template_dir);
      backend_ = std::make_unique<LlmBackend>(llm, PromptLibrary::load(dir));
    }
  }
  if (!embedder_) {
    if (config_.embedding.remote) {
      HttpEndpoint ep;
      ep.url = config_.embedding.url;
      embedder_ = std::make_unique<RemoteEmbedder>(ep, config_.embedding.dimension, config_.embedding.model);
    } else {
      embedder_ = std::make_unique<HashedEmbedder>(config_.embedding.dimension);
    }
  }
  if (!toxicity_) {
    if (config_.toxicity.remote) {
      HttpEndpoint ep;
      ep.url = config_.toxicity.url;
      toxicity_ = std::make_unique<RemoteToxicityScorer>(ep);
    } else {
      toxicity_ = std::make_unique<LexiconToxicityScorer>();
    }
  }
}

std::int64_t Simulation::emit(int round, EventKind kind, nlohmann::json payload) {
  const std::int64_t seq = log_.append(round, kind, std::move(payload));
  world_.apply(log_.records()[static_cast<std::size_t>(seq)]);
  return seq;
}

void Simulation::initialize() {
  const auto& pop = config_.population;
  std::vector<UserId> ids;
  std::vector<AgentProfile> profiles;
  std::vector<ScriptedAgentParams> params;
  std::vector<std::pair<UserId, UserId>> edges;  // follower, followee
  std::vector<std::pair<UserId, std::string>> history;

  if (!pop.meta_dir.empty()) {
    IngestResult in = ingest(pop.meta_dir, *backend_);
    for (std::size_t i = 0; i < in.users.size(); ++i) {
      const auto& id = in.users[i].record.id;
      ids.push_back(id);
      profiles.push_back(in.profiles[i]);
      Rng rng(mix_seed({config_.seed, kTagPopulation, fnv1a(id)}));
      params.push_back(draw_params(rng, pop));
    }
    for (const auto& e : in.graph.edges()) edges.emplace_back(in.graph.node(e.follower), in.graph.node(e.followee));
    for (const auto& h : in.posts) history.emplace_back(h.author, h.content);
  } else {
    Rng rng(mix_seed({config_.seed, kTagPopulation}));
    for (std::size_t i = 0; i < pop.agents; ++i) {
      ids.push_back(padded_id(i, pop.agents));
      params.push_back(draw_params(rng, pop));
      profiles.push_back(scripted_profile(ids.back(), params.back(), config_.topic));
    }
    Rng g(mix_seed({config_.seed, kTagGraph}));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = 0; j < ids.size(); ++j) {
        if (i != j && g.bernoulli(pop.follow_probability)) edges.emplace_back(ids[i], ids[j]);
      }
    }
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const int s = scripted_stance(params[i].latent_stance, config_.scripted.dead_zone);
      history.emplace_back(ids[i], scripted_post_text(s, mix_seed({config_.seed, kTagHistory, i})));
    }
  }

  world_ = World(ids, config_.alpha, config_.misinfo.window, config_.exposure_default);
  agents_.clear();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    agents_.push_back({Agent{profiles[i], params[i]}, MemoryPool(config_.memory.capacity), {}});
  }

  nlohmann::json header = {{"config", to_json(config_)}, {"agents", ids}, {"profiles", nlohmann::json::array()}};
  for (const auto& p : profiles) header["profiles"].push_back(to_json(p));
  log_ = EventLog(std::move(header));

  // Initial stance from each agent's history, before anything is emitted.
  std::vector<std::vector<Action>> own(ids.size());
  for (const auto& [author, text] : history) {
    own[world_.graph().require_index(author)].push_back(Action{ActionKind::kTweet, text, std::nullopt, std::nullopt});
  }
  std::vector<StanceInference> s0(ids.size());
  parallel_for(ids.size(), config_.max_concurrency, [&](std::size_t i) {
    s0[i] = infer_discrete_stance(agents_[i].agent, own[i], *backend_, config_.topic, std::nullopt);
  });

  for (const auto& [a, b] : edges) {
    if (!world_.graph().has_edge(a, b)) emit(-1, EventKind::kFollow, {{"actor", a}, {"target", b}});
  }
  const std::size_t first_post = world_.posts().size();
  for (const auto& [author, text] : history) {
    emit(-1, EventKind::kPost,
         {{"post_id", world_.next_post_id()},
          {"author", author},
          {"content", text},
          {"stance_tag", s0[world_.graph().require_index(author)].value},
          {"misinfo", false},
          {"corrective", false},
          {"parent", nullptr},
          {"source", "history"}});
  }
  embed_new_posts(first_post);
  for (const auto& post : world_.posts()) {
    auto& pool = agents_[world_.graph().require_index(post.author)].memory;
    pool.insert(MemoryEntry{post.content, post.embedding, -1, MemoryKind::kShort});
  }

  std::vector<std::string> profile_texts;
  for (const auto& a : agents_) profile_texts.push_back(a.agent.profile.to_text());
  profile_embeddings_ = profile_texts.empty() ? std::vector<Embedding>{} : embedder_->embed(profile_texts);

  for (std::size_t i = 0; i < ids.size(); ++i) {
    StanceTrace probe(config_.alpha);
    probe.observe(s0[i].value);
    emit(-1, EventKind::kStanceUpdate,
         {{"user", ids[i]},
          {"discrete", s0[i].value},
          {"smoothed", probe.smoothed()},
          {"fallback", s0[i].fallback},
          {"memory_fallbacks", 0}});
  }
  next_round_ = 0;
  if (config_.rounds >= 1 && config_.objective != Objective::kNone) select_arms(-1);
}

void Simulation::embed_new_posts(std::size_t from) {
  const auto& posts = world_.posts();
  if (from >= posts.size()) return;
  std::vector<std::string> texts;
  for (std::size_t k = from; k < posts.size(); ++k) texts.push_back(posts[k].content);
  auto vectors = embedder_->embed(texts);
  for (std::size_t k = from; k < posts.size(); ++k) {
    world_.find_post(posts[k].post_id)->embedding = std::move(vectors[k - from]);
  }
}

Matrix Simulation::context_matrix() const {
  std::vector<std::string> texts;
  for (const auto& a : agents_) {
    std::string t = a.agent.profile.to_text();
    const auto& entries = a.memory.entries();
    const std::size_t n = std::min(config_.memory.sample_count, entries.size());
    for (std::size_t k = entries.size() - n; k < entries.size(); ++k) t += "\n" + entries[k].content;
    texts.push_back(std::move(t));
  }
  Matrix m = user_context_matrix(world_.graph(), texts, *embedder_, {config_.gamma, config_.hops});
  for (std::size_t r = 0; r < m.rows(); ++r) normalize(m.row(r));
  return m;
}

std::vector<Simulation::FeedItem> Simulation::feed_for(std::size_t i, int round, const Matrix& contexts) const {
  const UserId& user = world_.agents()[i];
  const auto& posts = world_.posts();
  const auto& exposure = world_.exposure();
  auto pass = [&](const std::vector<const Post*>& in) {
    std::vector<const Post*> out;
    for (const Post* p : in) {
      if (exposure_filter(*p, exposure, config_.seed, round, user)) out.push_back(p);
    }
    return out;
  };

  ChannelOutput ch;
  ch.relational = relational_feed(world_.graph(), posts, user, round, config_.feed.quota_relational);

  const Post* recommended = nullptr;
  for (const auto& p : pending_) {
    if (p.arm.kind == ArmKind::kRecommend && p.arm.user == user) recommended = world_.find_post(p.arm.post);
  }
  std::vector<const Post*> candidates;
  const int window = config_.feed.headline_window;
  for (const auto& p : posts) {
    if (p.round < round - window || p.round >= round) continue;
    if (p.author == user || &p == recommended) continue;
    candidates.push_back(&p);
  }
  const int quota = config_.feed.quota_personalized - (recommended ? 1 : 0);
  ch.personalized = personalized_feed(contexts.row(i), candidates, std::max(quota, 0));
  if (recommended) ch.personalized.insert(ch.personalized.begin(), recommended);
  ch.headline = headline_feed(posts, round, window, config_.feed.quota_headline);

  ch.relational = pass(ch.relational);
  ch.personalized = pass(ch.personalized);
  ch.headline = pass(ch.headline);
  FeedConfig cap = config_.feed;
  if (recommended && cap.quota_personalized == 0) cap.quota_personalized = 1;

  std::vector<FeedItem> out;
  for (const Post* p : compose_feed(ch, cap)) {
    std::string_view channel = "headline";
    if (std::find(ch.relational.begin(), ch.relational.end(), p) != ch.relational.end()) {
      channel = "relational";
    } else if (p == recommended) {
      channel = "recommended";
    } else if (std::find(ch.personalized.begin(), ch.personalized.end(), p) != ch.personalized.end()) {
      channel = "personalized";
    }
    out.push_back({p, channel});
  }
  return out;
}

std::string Simulation::memory_digest(const AgentRuntime& a, std::span<const double> query, int round,
                                      std::uint64_t seed) const {
  if (a.memory.empty()) return "";
  const auto weights = retrieval_weights(query, a.memory, config_.lambda, round);
  std::string out;
  for (const auto& e : sample_memories(a.memory, weights, config_.memory.sample_count, seed)) {
    if (!out.empty()) out += "\n";
    out += e.content;
  }
  return out;
}

int Simulation::last_discrete(const UserId& user) const { return world_.stance(user).last().value_or(0); }

void Simulation::step() {
  if (broken_) throw Error(ErrorCode::kInvalidArgument, "simulation failed mid-round; resume from a checkpoint");
  if (finished()) throw Error(ErrorCode::kInvalidArgument, "simulation already ran all rounds");
  const int t = next_round_;
  const std::size_t n = agents_.size();

  std::vector<std::string> news;
  std::vector<int> news_stance;
  for (const auto& item : config_.news) {
    if (item.round == t) {
      news.push_back(item.text);
      news_stance.push_back(item.stance);
    }
  }

  // Decision phase: reads round t-1 state only, emits nothing.
  const Matrix contexts = context_matrix();
  std::vector<std::vector<FeedItem>> feeds(n);
  for (std::size_t i = 0; i < n; ++i) feeds[i] = feed_for(i, t, contexts);

  std::vector<std::vector<Decision>> decisions(n);
  try {
    parallel_for(n, config_.max_concurrency, [&](std::size_t i) {
      const AgentRuntime& a = agents_[i];
      const UserId& self = world_.agents()[i];
      auto decide = [&](const FeedItem* item, std::size_t k) {
        DecisionContext ctx;
        ctx.topic = config_.topic;
        ctx.trigger_news = news;
        ctx.round = t;
        std::span<const double> query = profile_embeddings_[i];
        if (item) {
          const Post& p = *item->post;
          ctx.message = IncomingMessage{p.post_id, p.author, p.content, p.stance_tag,
                                        world_.graph().has_edge(self, p.author)};
          query = p.embedding;
        }
        ctx.memory_digest = memory_digest(a, query, t, mix_seed({config_.seed, kTagMemory, u64(t), i, k}));
        Decision d;
        if (item) {
          d.message = item->post->post_id;
          d.channel = item->channel;
        }
        d.result = backend_->decide(a.agent, ctx, mix_seed({config_.seed, kTagDecide, u64(t), i, k}));
        d.result.bundle = bind_targets(std::move(d.result.bundle), ctx.message);
        for (const auto& act : d.result.bundle.actions) {
          d.toxicity.push_back(act.content && !act.content->empty() ? toxicity_->score(*act.content)
                                                                    : ToxicityScore{});
        }
        decisions[i].push_back(std::move(d));
      };
      if (feeds[i].empty()) {
        decide(nullptr, 0);
      } else {
        for (std::size_t k = 0; k < feeds[i].size(); ++k) decide(&feeds[i][k], k);
      }
    });
  } catch (...) {
    if (!config_.checkpoint_dir.empty()) write_checkpoint(config_.checkpoint_dir);
    throw;
  }

  // Everything below mutates state. A failure here leaves a partial round,
  // so the pre-round state is kept for the abort checkpoint.
  // Post pointers do not survive the emissions below.
  std::vector<std::vector<PostId>> consumed(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& item : feeds[i]) consumed[i].push_back(item.post->post_id);
  }
  feeds.clear();

  nlohmann::json before;
  std::int64_t before_seq = world_.last_seq();
  if (!config_.checkpoint_dir.empty()) before = snapshot();
  try {
    for (std::size_t k = 0; k < news.size(); ++k) {
      emit(t, EventKind::kNewsInjection, {{"text", news[k]}, {"stance", news_stance[k]}});
    }
    const std::size_t first_post = world_.posts().size();

    for (std::size_t i = 0; i < n; ++i) {
      const UserId& self = world_.agents()[i];
      agents_[i].last_actions.clear();
      for (const auto& d : decisions[i]) {
        const auto& actions = d.result.bundle.actions;
        for (std::size_t k = 0; k < actions.size(); ++k) {
          const Action& act = actions[k];
          // Targets must be visible posts from earlier rounds. Looked up per
          // action since emitting a post may move the post store.
          const Post* target = act.target_post ? world_.find_post(*act.target_post)
                               : d.message   ? world_.find_post(*d.message)
                                             : nullptr;
          if (act.target_post && (!target || target->round >= t)) continue;
          if (act.target_user && (*act.target_user == self || !world_.graph().index_of(*act.target_user))) continue;

          nlohmann::json payload = {{"receiver", self},
                                    {"sender", target ? nlohmann::json(target->author) : nlohmann::json()},
                                    {"post", target ? nlohmann::json(target->post_id) : nlohmann::json()},
                                    {"action", to_string(act.kind)},
                                    {"toxicity", d.toxicity[k].value},
                                    {"toxicity_fallback", d.toxicity[k].fallback},
                                    {"parse_failed", d.result.parse_failed},
                                    {"channel", d.message ? nlohmann::json(d.channel) : nlohmann::json()}};
          if (act.kind == ActionKind::kFollow || act.kind == ActionKind::kUnfollow) {
            payload["sender"] = *act.target_user;
          }
          if (act.content) payload["content"] = *act.content;
          emit(t, EventKind::kReaction, std::move(payload));
          agents_[i].last_actions.push_back(act);

          switch (act.kind) {
            case ActionKind::kTweet:
            case ActionKind::kReply:
            case ActionKind::kRetweet: {
              const bool rt = act.kind == ActionKind::kRetweet;
              const char* source = rt ? "retweet" : act.kind == ActionKind::kReply ? "reply" : "tweet";
              const bool has_parent = act.kind != ActionKind::kTweet && target;
              emit(t, EventKind::kPost,
                   {{"post_id", world_.next_post_id()},
                    {"author", self},
                    {"content", act.content.value_or(rt && target ? target->content : "")},
                    {"stance_tag", rt && target ? target->stance_tag : last_discrete(self)},
                    {"misinfo", rt && target && target->misinfo},
                    {"corrective", rt && target && target->corrective},
                    {"parent", has_parent ? nlohmann::json(target->post_id) : nlohmann::json()},
                    {"source", source}});
              break;
            }
            case ActionKind::kFollow:
              if (!world_.graph().has_edge(self, *act.target_user)) {
                emit(t, EventKind::kFollow, {{"actor", self}, {"target", *act.target_user}});
              }
              break;
            case ActionKind::kUnfollow:
              if (world_.graph().has_edge(self, *act.target_user)) {
                emit(t, EventKind::kUnfollow, {{"actor", self}, {"target", *act.target_user}});
              }
              break;
            default:
              break;
          }
        }
      }
    }
    // Seeded posts close the round, so they are the newest round-t posts.
    if (t == 0 && config_.misinfo.fraction > 0.0) emit_seed_posts(t, false);
    if (t == config_.misinfo.corrective_round && config_.misinfo.corrective_fraction > 0.0) emit_seed_posts(t, true);
    embed_new_posts(first_post);

    // Latent drift of the scripted population: news first, then each
    // delivered message.
    if (backend_->scripted()) {
      for (std::size_t i = 0; i < n; ++i) {
        auto& p = agents_[i].agent.params;
        for (int s : news_stance) p.latent_stance = absorb_influence(p, s, config_.scripted.news_gain);
        for (PostId id : consumed[i]) {
          p.latent_stance = absorb_influence(p, world_.find_post(id)->stance_tag, config_.scripted.post_gain);
        }
      }
    }

    settle_rewards(t);
    update_memories_and_stances(t, consumed, news);
    emit(t, EventKind::kMetric, to_json(world_.compute_metrics(t)));
    if (t + 1 < config_.rounds && config_.objective != Objective::kNone) select_arms(t);
  } catch (...) {
    broken_ = true;
    if (!config_.checkpoint_dir.empty()) {
      EventLog head = log_;
      head.truncate(before_seq + 1);
      const std::filesystem::path dir = config_.checkpoint_dir;
      write_file(dir / "snapshot.json", before.dump(2) + "\n");
      head.write(dir / "events.jsonl");
    }
    throw;
  }
  next_round_ = t + 1;
  if (!config_.checkpoint_dir.empty() && (next_round_ % config_.checkpoint_every == 0 || finished())) {
    write_checkpoint(config_.checkpoint_dir);
  }
}

void Simulation::run() {
  while (!finished()) step();
}

void Simulation::emit_seed_posts(int round, bool corrective) {
  const std::size_t n = agents_.size();
  const double frac = corrective ? config_.misinfo.corrective_fraction : config_.misinfo.fraction;
  const auto count = static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9));
  Rng rng(mix_seed({config_.seed, kTagSeeding, corrective ? 1ULL : 0ULL}));
  auto chosen = rng.sample_without_replacement(n, count);
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t i : chosen) {
    emit(round, EventKind::kPost,
         {{"post_id", world_.next_post_id()},
          {"author", world_.agents()[i]},
          {"content", corrective ? config_.misinfo.corrective_text : config_.misinfo.text},
          {"stance_tag", corrective ? 0 : config_.misinfo.stance},
          {"misinfo", !corrective},
          {"corrective", corrective},
          {"parent", nullptr},
          {"source", corrective ? "correction" : "seed"}});
  }
}

void Simulation::settle_rewards(int round) {
  for (const auto& p : pending_) {
    double reward = 0.0;
    nlohmann::json reaction;
    if (config_.objective == Objective::kCrossView) {
      const ReactionRecord* best = nullptr;
      for (const auto& r : world_.round_reactions()) {
        if (r.receiver != p.arm.user || r.post != p.arm.post) continue;
        const auto& h = config_.bandit.engagement;
        if (!best || h[static_cast<std::size_t>(r.kind)] > h[static_cast<std::size_t>(best->kind)]) best = &r;
      }
      if (best) {
        ReactionOutcome o{best->receiver, best->kind, std::nullopt, best->toxicity,
                          config_.bandit.engagement[static_cast<std::size_t>(best->kind)]};
        reward = reward_cross_view(world_.smoothed(p.sender), world_.smoothed(p.arm.user), o, config_.mu);
        reaction = to_string(best->kind);
      }
    } else {
      for (const auto& [user, prev] : p.mis_prev) {
        reward += reward_misinfo(prev, world_.misinformed(user, round) ? 1 : 0);
      }
      reward /= static_cast<double>(std::max<std::size_t>(1, p.mis_prev.size()));
    }
    nlohmann::json payload = {{"recommendation_seq", p.seq}, {"user", p.arm.user}, {"reward", reward},
                              {"reaction", reaction}};
    if (p.arm.kind == ArmKind::kRecommend) {
      payload["post"] = p.arm.post;
    } else {
      payload["level"] = p.arm.level;
    }
    emit(round, EventKind::kReward, std::move(payload));
    bandit_->observe(p.arm.context, reward);
  }
  pending_.clear();
}

void Simulation::update_memories_and_stances(int round, const std::vector<std::vector<PostId>>& consumed,
                                             const std::vector<std::string>& news) {
  const std::size_t n = agents_.size();
  std::vector<MemoryOutcome> out(n);
  parallel_for(n, config_.max_concurrency, [&](std::size_t i) {
    AgentRuntime& a = agents_[i];
    MemoryOutcome& o = out[i];
    std::vector<std::string> items;
    for (PostId id : consumed[i]) items.push_back(world_.find_post(id)->content);
    for (const auto& s : news) items.push_back(s);
    for (const auto& text : items) {
      MemoryWrite w = encode_short_term(text, a.agent.profile, a.memory.latest(), *backend_, *embedder_, round,
                                        config_.memory);
      o.fallbacks += w.fallback ? 1 : 0;
      a.memory.insert(w.entry);
    }
    if (!items.empty()) {
      const Embedding query = embedder_->embed_one(items.front());
      const auto weights = retrieval_weights(query, a.memory, config_.lambda, round);
      const auto samples = sample_memories(a.memory, weights, config_.memory.sample_count,
                                           mix_seed({config_.seed, kTagMemory, u64(round), i, 0xffffULL}));
      MemoryWrite w = consolidate_long_term(items.front(), a.agent.profile, samples, *backend_, *embedder_, round,
                                            a.memory, config_.memory);
      o.fallbacks += w.fallback ? 1 : 0;
    }
    o.stance = infer_discrete_stance(a.agent, a.last_actions, *backend_, config_.topic,
                                     world_.stance(world_.agents()[i]).last());
  });
  for (std::size_t i = 0; i < n; ++i) {
    const UserId& user = world_.agents()[i];
    StanceTrace probe = world_.stance(user);
    probe.observe(out[i].stance.value);
    emit(round, EventKind::kStanceUpdate,
         {{"user", user},
          {"discrete", out[i].stance.value},
          {"smoothed", probe.smoothed()},
          {"fallback", out[i].stance.fallback},
          {"memory_fallbacks", out[i].fallbacks}});
  }
}

void Simulation::select_arms(int round) {
  const Matrix contexts = context_matrix();
  const std::size_t dim = contexts.cols();
  if (!bandit_) {
    const std::size_t extra = config_.bandit.kind == ArmKind::kExposure ? kExposureLevels.size() : 0;
    bandit_.emplace(2 * dim + extra, config_.bandit.net, mix_seed({config_.seed, kTagBandit}));
  }
  const auto& users = world_.agents();
  const std::uint64_t seed = mix_seed({config_.seed, kTagCandidates, u64(round)});

  std::vector<std::vector<double>> user_rows;
  for (std::size_t i = 0; i < contexts.rows(); ++i) {
    user_rows.emplace_back(contexts.row(i).begin(), contexts.row(i).end());
  }
  center_rows(user_rows);
  auto user_row = [&](const UserId& u) -> const std::vector<double>& {
    return user_rows[world_.graph().require_index(u)];
  };

  std::vector<Arm> arms;
  if (config_.bandit.kind == ArmKind::kRecommend) {
    std::vector<PostId> ids;
    for (const auto& p : world_.posts()) ids.push_back(p.post_id);
    for (auto& arm : build_candidates(users, ids, config_.bandit.sizes, recommended_, seed)) {
      if (world_.find_post(arm.post)->author != arm.user) arms.push_back(std::move(arm));
    }
    std::map<PostId, std::size_t> slot;
    std::vector<std::vector<double>> post_rows;
    for (const auto& arm : arms) {
      if (slot.emplace(arm.post, post_rows.size()).second) post_rows.push_back(world_.find_post(arm.post)->embedding);
    }
    center_rows(post_rows);
    for (auto& arm : arms) arm.context = concat(user_row(arm.user), post_rows[slot.at(arm.post)]);
  } else {
    for (const auto& author : exposure_overrides_) {
      emit(round, EventKind::kExposureChange, {{"author", author}, {"level", config_.exposure_default}});
    }
    exposure_overrides_.clear();
    std::map<UserId, const Post*> latest;
    for (const auto& p : world_.posts()) latest[p.author] = &p;
    arms = build_exposure_candidates(users, config_.bandit.sizes.n_users, seed);
    std::map<UserId, std::size_t> slot;
    std::vector<std::vector<double>> post_rows;
    for (const auto& arm : arms) {
      if (!slot.emplace(arm.user, post_rows.size()).second) continue;
      auto it = latest.find(arm.user);
      post_rows.push_back(it != latest.end() ? it->second->embedding : std::vector<double>(dim, 0.0));
    }
    center_rows(post_rows);
    for (auto& arm : arms) {
      // author context, latest post, one-hot level
      std::vector<double> tail = post_rows[slot.at(arm.user)];
      for (double level : kExposureLevels) tail.push_back(level == arm.level ? 1.0 : 0.0);
      arm.context = concat(user_row(arm.user), tail);
    }
  }

  const auto chosen = bandit_->select(arms, config_.bandit.budget, mix_seed({config_.seed, kTagSelect, u64(round)}));
  for (std::size_t idx : chosen) {
    PendingArm p;
    p.arm = arms[idx];
    p.arm.selected_round = round;
    nlohmann::json payload = {{"kind", to_string(p.arm.kind)},
                              {"user", p.arm.user},
                              {"score", bandit_->score(p.arm.context)}};
    if (p.arm.kind == ArmKind::kRecommend) {
      payload["post"] = p.arm.post;
      p.sender = world_.find_post(p.arm.post)->author;
      recommended_.insert(p.arm.post);
    } else {
      payload["level"] = p.arm.level;
      p.sender = p.arm.user;
    }
    p.seq = emit(round, EventKind::kRecommendation, std::move(payload));
    if (p.arm.kind == ArmKind::kExposure) {
      emit(round, EventKind::kExposureChange, {{"author", p.arm.user}, {"level", p.arm.level}});
      exposure_overrides_.insert(p.arm.user);
    }
    std::vector<UserId> audience;
    if (p.arm.kind == ArmKind::kExposure) {
      for (std::size_t f : world_.graph().followers(world_.graph().require_index(p.arm.user))) {
        audience.push_back(world_.agents()[f]);
      }
    }
    if (audience.empty()) audience.push_back(p.arm.user);
    for (const auto& u : audience) p.mis_prev[u] = world_.misinformed(u, round) ? 1 : 0;
    pending_.push_back(std::move(p));
  }
}

nlohmann::json Simulation::snapshot() const {
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& a : agents_) {
    nlohmann::json actions = nlohmann::json::array();
    for (const auto& act : a.last_actions) actions.push_back(to_json(act));
    agents.push_back({{"params", to_json(a.agent.params)},
                      {"profile", to_json(a.agent.profile)},
                      {"memory", to_json(a.memory)},
                      {"last_actions", actions}});
  }
  nlohmann::json pending = nlohmann::json::array();
  for (const auto& p : pending_) pending.push_back(arm_json(p));
  return {{"config", to_json(config_)},
          {"next_round", next_round_},
          {"last_seq", world_.last_seq()},
          {"agents", agents},
          {"bandit", bandit_ ? to_json(*bandit_) : nlohmann::json()},
          {"pending", pending},
          {"recommended", recommended_},
          {"exposure_overrides", exposure_overrides_}};
}

void Simulation::write_checkpoint(const std::filesystem::path& dir) const {
  write_file(dir / "snapshot.json", snapshot().dump(2) + "\n");
  log_.write(dir / "events.jsonl");
}

void Simulation::restore_state(const nlohmann::json& s) {
  const auto& agents = s.at("agents");
  if (agents.size() != world_.agents().size()) throw Error(ErrorCode::kCorruptLog, "snapshot agent count differs");
  agents_.clear();
  for (const auto& a : agents) {
    AgentRuntime rt{Agent{profile_from_json(a.at("profile")), params_from_json(a.at("params"))},
                    pool_from_json(a.at("memory")),
                    {}};
    for (const auto& act : a.at("last_actions")) {
      auto kind = parse_action_kind(act.at("action").get<std::string>());
      if (!kind) throw Error(ErrorCode::kParse, "unknown action in snapshot");
      Action x{*kind, std::nullopt, std::nullopt, std::nullopt};
      if (act.contains("content")) x.content = act["content"].get<std::string>();
      if (act.contains("target_post")) x.target_post = act["target_post"].get<PostId>();
      if (act.contains("target_user")) x.target_user = act["target_user"].get<std::string>();
      rt.last_actions.push_back(std::move(x));
    }
    agents_.push_back(std::move(rt));
  }
  if (!s.at("bandit").is_null()) bandit_ = bandit_from_json(s.at("bandit"));
  for (const auto& p : s.at("pending")) pending_.push_back(arm_from_json(p));
  recommended_ = s.at("recommended").get<std::set<PostId>>();
  exposure_overrides_ = s.at("exposure_overrides").get<std::set<UserId>>();
  next_round_ = s.at("next_round").get<int>();
}

Simulation Simulation::resume(const nlohmann::json& snapshot, const EventLog& log, Components components) {
  Simulation sim(Resume{}, config_from_json(snapshot.at("config")), std::move(components));
  const auto last_seq = snapshot.at("last_seq").get<std::int64_t>();
  if (log.next_seq() <= last_seq) throw Error(ErrorCode::kCorruptLog, "log ends before the snapshot");
  sim.log_ = log;
  sim.log_.truncate(last_seq + 1);
  sim.world_ = World::from_header(sim.log_.header());
  for (const auto& r : sim.log_.records()) sim.world_.apply(r);
  sim.embed_new_posts(0);
  sim.restore_state(snapshot);
  std::vector<std::string> texts;
  for (const auto& a : sim.agents_) texts.push_back(a.agent.profile.to_text());
  sim.profile_embeddings_ = texts.empty() ? std::vector<Embedding>{} : sim.embedder_->embed(texts);
  return sim;
}

Simulation Simulation::resume(const std::filesystem::path& dir, Components components) {
  nlohmann::json snap;
  try {
    snap = nlohmann::json::parse(read_file(dir / "snapshot.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("bad snapshot: ") + e.what());
  }
  return resume(snap, EventLog::read(dir / "events.jsonl"), std::move(components));
}

}  // namespace policysim
