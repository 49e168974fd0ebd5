#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <map>

#include "fakes.hpp"
#include "policysim/error.hpp"
#include "policysim/simulation.hpp"

using namespace policysim;
using nlohmann::json;

namespace {

RunConfig small_config(std::uint64_t seed, std::size_t agents = 12, int rounds = 3) {
  RunConfig c;
  c.seed = seed;
  c.rounds = rounds;
  c.population.agents = agents;
  c.population.follow_probability = 0.2;
  c.max_concurrency = 4;
  return c;
}

// Hands-built world fed through apply().
struct Script {
  World world{{"a", "b", "c"}, 0.8, 3, 1.0};
  std::int64_t seq = 0;

  void add(int round, EventKind kind, json payload) {
    world.apply({seq, round, kind, std::move(payload)});
    ++seq;
  }
  void stance(int round, const char* user, int d) {
    StanceTrace probe = world.stance(user);
    probe.observe(d);
    add(round, EventKind::kStanceUpdate, {{"user", user}, {"discrete", d}, {"smoothed", probe.smoothed()}});
  }
  void post(int round, const char* author, int tag, bool misinfo = false, const char* source = "tweet") {
    add(round, EventKind::kPost,
        {{"post_id", world.next_post_id()}, {"author", author}, {"content", "text"}, {"stance_tag", tag},
         {"misinfo", misinfo}, {"corrective", false}, {"source", source}});
  }
  void react(int round, const char* receiver, std::optional<PostId> post, const char* action, double tox = 0.0) {
    json p = {{"receiver", receiver}, {"action", action}, {"toxicity", tox}, {"sender", nullptr}, {"post", nullptr}};
    if (post) {
      p["post"] = *post;
      p["sender"] = world.find_post(*post)->author;
    }
    add(round, EventKind::kReaction, std::move(p));
  }
};

// Delegates to the scripted backend but goes down once round `fail_round`
// is reached.
class Flaky final : public DecisionBackend {
 public:
  explicit Flaky(int fail_round) : fail_round_(fail_round) {}
  [[nodiscard]] bool scripted() const noexcept override { return true; }
  std::optional<std::string> complete(std::string_view, const PromptFields&, std::string_view) override {
    return std::nullopt;
  }
  DecisionResult decide(const Agent& a, const DecisionContext& c, std::uint64_t seed) override {
    if (c.round >= fail_round_) throw BackendUnavailable("endpoint unreachable");
    return inner_.decide(a, c, seed);
  }
  int infer_stance(const Agent& a, std::span<const Action> h, std::string_view topic) override {
    return inner_.infer_stance(a, h, topic);
  }

 private:
  int fail_round_;
  ScriptedBackend inner_;
};

std::filesystem::path fresh_dir(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("metrics from a hand-built round") {
  Script s;
  s.stance(-1, "a", 1);
  s.stance(-1, "b", -1);
  s.stance(-1, "c", 0);
  s.post(-1, "a", 1);
  s.post(-1, "b", -1);
  s.react(0, "b", 1, "reply", 0.5);
  s.react(0, "a", 2, "like");
  s.react(0, "c", 1, "like", 0.0);
  s.react(0, "c", std::nullopt, "do_nothing");
  s.react(0, "a", std::nullopt, "tweet", 0.3);
  const auto m = s.world.compute_metrics(0);
  CHECK(m.stance_mean == 0.0);
  CHECK(m.stance_std == doctest::Approx(std::sqrt(2.0 / 3.0)));
  // Four non-idle actions, toxicity 0.5 + 0.3.
  CHECK(m.mean_toxicity == doctest::Approx(0.8 / 4));
  // Three sender-bearing interactions; c is neutral, so only a<->b cross.
  CHECK(m.cross_interaction_ratio == doctest::Approx(2.0 / 3));
  CHECK(m.action_counts[static_cast<std::size_t>(ActionKind::kLike)] == 2);
  CHECK(m.action_counts[static_cast<std::size_t>(ActionKind::kDoNothing)] == 1);
  CHECK(s.world.find_post(1)->engagement.likes == 1);
  CHECK(s.world.find_post(1)->engagement.replies == 1);
  CHECK(s.world.find_post(2)->engagement.likes == 1);
  // Recorded metrics are checked against the recomputed ones.
  json bad = to_json(m);
  bad["mean_toxicity"] = 0.9;
  CHECK_THROWS_AS(s.add(0, EventKind::kMetric, bad), Error);
  s.add(0, EventKind::kMetric, to_json(m));
  CHECK(s.world.last_complete_round() == 0);
}

TEST_CASE("empty rounds have zero ratios") {
  Script s;
  for (auto u : {"a", "b", "c"}) s.stance(-1, u, 1);
  const auto m = s.world.compute_metrics(0);
  CHECK(m.stance_mean == 1.0);
  CHECK(m.stance_std == 0.0);
  CHECK(m.mean_toxicity == 0.0);
  CHECK(m.cross_interaction_ratio == 0.0);
}

TEST_CASE("misinformation tracking") {
  Script s;
  for (auto u : {"a", "b", "c"}) s.stance(-1, u, 0);
  s.post(0, "a", -1, true, "seed");
  CHECK(s.world.misinformed("a", 0));
  CHECK(s.world.misinformation_ratio(0) == doctest::Approx(1.0 / 3));
  s.react(1, "b", 1, "retweet");
  CHECK(s.world.misinformed("b", 1));
  CHECK(s.world.misinformed("b", 3));
  CHECK_FALSE(s.world.misinformed("b", 4));  // window of three rounds
  CHECK_FALSE(s.world.misinformed("a", 3));
  s.react(1, "c", 1, "reply");
  CHECK_FALSE(s.world.misinformed("c", 1));  // replies do not adopt
  s.add(1, EventKind::kPost,
        {{"post_id", 2}, {"author", "c"}, {"content", "check"}, {"stance_tag", 0}, {"misinfo", false},
         {"corrective", true}, {"source", "tweet"}});
  s.react(2, "b", 2, "like");
  CHECK_FALSE(s.world.misinformed("b", 2));
}

TEST_CASE("world rejects inconsistent events") {
  auto corrupt = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code() == ErrorCode::kCorruptLog;
    }
    return false;
  };
  Script s;
  s.stance(-1, "a", 1);
  CHECK(corrupt([&] { s.world.apply({5, 0, EventKind::kNewsInjection, json::object()}); }));
  s.post(0, "a", 1);
  CHECK(corrupt([&] { s.react(0, "b", 1, "like"); }));  // same-round post
  Script t;
  CHECK(corrupt([&] { t.add(0, EventKind::kFollow, {{"actor", "a"}, {"target", "zz"}}); }));
  Script u;
  u.add(0, EventKind::kFollow, {{"actor", "a"}, {"target", "b"}});
  CHECK(corrupt([&] { u.add(0, EventKind::kFollow, {{"actor", "a"}, {"target", "b"}}); }));
  Script v;
  CHECK(corrupt([&] { v.add(0, EventKind::kReward, {{"recommendation_seq", 0}}); }));
  Script w;
  CHECK(corrupt([&] { w.add(0, EventKind::kStanceUpdate, {{"user", "a"}, {"discrete", 1}, {"smoothed", 0.5}}); }));
  Script x;
  CHECK(corrupt([&] { x.add(0, EventKind::kPost, {{"post_id", 1}}); }));
}

TEST_CASE("zero rounds writes only initialization") {
  auto c = small_config(3, 8, 0);
  Simulation sim(c);
  CHECK(sim.finished());
  CHECK(sim.metrics().empty());
  for (const auto& r : sim.log().records()) CHECK(r.round == -1);
  CHECK_THROWS_AS(sim.step(), Error);
  const auto rep = replay(sim.log());
  CHECK(rep.rounds_replayed == 0);
}

TEST_CASE("runs are deterministic for a seed") {
  for (std::size_t n : {2, 12}) {
    Simulation a(small_config(7, n, 3));
    Simulation b(small_config(7, n, 3));
    a.run();
    b.run();
    CHECK(a.log().serialize() == b.log().serialize());
    CHECK(a.metrics().size() == 3);
  }
  Simulation a(small_config(7));
  Simulation other(small_config(8));
  a.run();
  other.run();
  CHECK(a.log().serialize() != other.log().serialize());
}

TEST_CASE("thread count does not change the outcome") {
  auto one = small_config(11, 16, 3);
  one.max_concurrency = 1;
  auto many = one;
  many.max_concurrency = 8;
  Simulation a(one), b(many);
  a.run();
  b.run();
  // The header records the config, so compare records only.
  CHECK(a.log().records() == b.log().records());
}

TEST_CASE("misinformation seeding picks a fixed share of agents") {
  auto c = small_config(2, 50, 1);
  c.misinfo.fraction = 0.2;
  Simulation sim(c);
  sim.run();
  int seeded = 0;
  for (const auto& p : sim.world().posts()) seeded += p.misinfo && p.round == 0 && !p.corrective ? 1 : 0;
  int seed_events = 0;
  for (const auto& r : sim.log().records())
    if (r.kind == EventKind::kPost && r.payload.value("source", "") == "seed") ++seed_events;
  CHECK(seed_events == 10);
  CHECK(seeded >= 10);  // plus retweets, none of which happen in round 0
  CHECK(sim.metrics()[0].misinformation_ratio == doctest::Approx(0.2));
}

TEST_CASE("replay reproduces the metrics") {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto c = small_config(seed, 15, 4);
    c.misinfo.fraction = 0.2;
    c.news = {{1, "Officials announce the legislation passed", 1}};
    Simulation sim(c);
    sim.run();
    const auto parsed = EventLog::parse(sim.log().serialize());
    const auto rep = replay(parsed);
    CHECK(rep.metrics == sim.metrics());
    CHECK(rep.world.smoothed_vector() == sim.world().smoothed_vector());
    CHECK(rep.world.graph().edges().size() == sim.world().graph().edges().size());
  }
}

TEST_CASE("replay of a truncated log stops at the last complete round") {
  Simulation sim(small_config(4, 10, 3));
  sim.run();
  auto log = sim.log();
  std::int64_t cut = 0;
  for (const auto& r : log.records())
    if (r.round == 2 && r.kind == EventKind::kReaction) cut = r.seq;
  log.truncate(cut + 1);
  const auto rep = replay(log);
  CHECK(rep.rounds_replayed == 2);
  CHECK(rep.metrics[0] == sim.metrics()[0]);
  CHECK(rep.metrics[1] == sim.metrics()[1]);
}

TEST_CASE("tampered stance values fail replay") {
  Simulation sim(small_config(4, 6, 2));
  sim.run();
  EventLog tampered(sim.log().header());
  bool done = false;
  for (const auto& r : sim.log().records()) {
    json p = r.payload;
    if (!done && r.round == 0 && r.kind == EventKind::kStanceUpdate) {
      p["smoothed"] = p["smoothed"].get<double>() + 1e-9;
      done = true;
    }
    tampered.append(r.round, r.kind, p);
  }
  REQUIRE(done);
  CHECK(replay(sim.log()).rounds_replayed == 2);
  CHECK_THROWS_AS(replay(tampered), Error);
}

TEST_CASE("no reaction targets a post from its own round") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Simulation sim(small_config(seed, 20, 3));
    sim.run();
    std::map<PostId, int> post_round;
    for (const auto& r : sim.log().records()) {
      if (r.kind == EventKind::kPost) post_round[r.payload.at("post_id").get<PostId>()] = r.round;
      if (r.kind == EventKind::kReaction && !r.payload.at("post").is_null()) {
        CHECK(post_round.at(r.payload.at("post").get<PostId>()) < r.round);
      }
    }
  }
}

TEST_CASE("every reward settles exactly one recommendation") {
  for (auto objective : {Objective::kCrossView, Objective::kMisinfo}) {
    auto c = small_config(5, 20, 4);
    c.objective = objective;
    c.bandit.budget = 4;
    c.misinfo.fraction = 0.2;
    if (objective == Objective::kMisinfo) c.bandit.kind = ArmKind::kExposure;
    Simulation sim(c);
    sim.run();
    std::map<std::int64_t, int> recs;
    std::size_t rewards = 0;
    for (const auto& r : sim.log().records()) {
      if (r.kind == EventKind::kRecommendation) recs[r.seq] = 0;
      if (r.kind == EventKind::kReward) {
        ++rewards;
        const double v = r.payload.at("reward").get<double>();
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
        auto it = recs.find(r.payload.at("recommendation_seq").get<std::int64_t>());
        REQUIRE(it != recs.end());
        ++it->second;
      }
    }
    CHECK(rewards == recs.size());
    CHECK(rewards == 4 * 4);
    for (const auto& [seq, n] : recs) CHECK(n == 1);
    CHECK(sim.world().open_recommendations().empty());
    CHECK(replay(sim.log()).metrics == sim.metrics());
  }
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  auto dir = fresh_dir("policysim_resume_test");
  auto c = small_config(6, 14, 5);
  c.objective = Objective::kCrossView;
  c.bandit.budget = 3;
  Simulation full(c);
  full.run();

  auto part = c;
  part.checkpoint_dir = dir.string();
  part.checkpoint_every = 2;
  {
    Simulation sim(part);
    sim.step();
    sim.step();
  }
  auto resumed = Simulation::resume(dir);
  CHECK(resumed.next_round() == 2);
  resumed.run();
  CHECK(resumed.log().records() == full.log().records());
  CHECK(resumed.metrics() == full.metrics());
  std::filesystem::remove_all(dir);
}

TEST_CASE("a backend outage leaves a resumable checkpoint") {
  auto dir = fresh_dir("policysim_outage_test");
  auto c = small_config(9, 10, 4);
  c.checkpoint_dir = dir.string();
  c.checkpoint_every = 100;
  Components comps;
  comps.backend = std::make_unique<Flaky>(2);
  Simulation sim(c, std::move(comps));
  sim.step();
  sim.step();
  CHECK_THROWS_AS(sim.step(), BackendUnavailable);
  CHECK(sim.next_round() == 2);
  const auto log = EventLog::read(dir / "events.jsonl");
  CHECK(replay(log).rounds_replayed == 2);

  auto resumed = Simulation::resume(dir);
  resumed.run();
  auto clean = c;
  clean.checkpoint_dir.clear();
  Simulation reference(clean);
  reference.run();
  CHECK(resumed.log().records() == reference.log().records());
  std::filesystem::remove_all(dir);
}

TEST_CASE("stance inference failures carry the previous value") {
  auto c = small_config(1, 4, 1);
  Components comps;
  auto backend = std::make_unique<fake::Backend>(std::nullopt, false);
  backend->stance = -1;
  comps.backend = std::move(backend);
  Simulation sim(c, std::move(comps));
  sim.run();
  for (const auto& u : sim.world().agents()) CHECK(sim.world().stance(u).history() == std::vector<int>{-1, -1});
}
