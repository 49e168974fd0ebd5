#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "policysim/agent.hpp"
#include "policysim/backend.hpp"
#include "policysim/error.hpp"
#include "policysim/prompt.hpp"
#include "policysim/rng.hpp"

using namespace policysim;

namespace {

constexpr std::size_t idx(ActionKind k) { return static_cast<std::size_t>(k); }

Agent make_agent(double latent, double activity, double homophily, double toxicity, double adoption) {
  Agent a;
  a.profile.user_id = "u1";
  a.params = {latent, activity, homophily, toxicity, adoption};
  return a;
}

DecisionContext with_message(int stance, bool followed) {
  DecisionContext c;
  c.topic = "the legislation";
  c.round = 2;
  c.message = IncomingMessage{7, "u2", "some post about the bill", stance, followed};
  return c;
}

}  // namespace

TEST_CASE("action labels round-trip and accept the post alias") {
  for (std::size_t k = 0; k < kActionKindCount; ++k) {
    const auto kind = static_cast<ActionKind>(k);
    CHECK(parse_action_kind(to_string(kind)) == kind);
  }
  CHECK(parse_action_kind("post") == ActionKind::kTweet);
  CHECK_FALSE(parse_action_kind("shout").has_value());
}

TEST_CASE("action field invariants") {
  CHECK(is_valid(Action{ActionKind::kTweet, "hi", {}, {}}));
  CHECK_FALSE(is_valid(Action{ActionKind::kTweet, {}, {}, {}}));
  CHECK(is_valid(Action{ActionKind::kReply, "no", 3, {}}));
  CHECK_FALSE(is_valid(Action{ActionKind::kReply, "no", {}, {}}));
  CHECK(is_valid(Action{ActionKind::kLike, {}, 3, {}}));
  CHECK_FALSE(is_valid(Action{ActionKind::kLike, "x", 3, {}}));
  CHECK(is_valid(Action{ActionKind::kFollow, {}, {}, "u2"}));
  CHECK_FALSE(is_valid(Action{ActionKind::kFollow, {}, {}, ""}));
  CHECK(is_valid(Action{}));
  CHECK_FALSE(is_valid(Action{ActionKind::kDoNothing, "x", {}, {}}));
}

TEST_CASE("bundle invariants") {
  ActionBundle ok{{Action{ActionKind::kLike, {}, 1, {}}, Action{ActionKind::kFollow, {}, {}, "b"}}, 0};
  CHECK(is_valid(ok));
  ActionBundle dup{{Action{ActionKind::kFollow, {}, {}, "b"}, Action{ActionKind::kUnfollow, {}, {}, "b"}}, 0};
  CHECK_FALSE(is_valid(dup));
  CHECK_FALSE(is_valid(ActionBundle{{}, 0}));
  ActionBundle four{{Action{ActionKind::kLike, {}, 1, {}}, Action{ActionKind::kLike, {}, 2, {}},
                     Action{ActionKind::kLike, {}, 3, {}}, Action{ActionKind::kLike, {}, 4, {}}},
                    0};
  CHECK_FALSE(is_valid(four));
  CHECK(is_valid(four, 4));
}

TEST_CASE("parse_actions examples") {
  auto single = parse_actions(R"([{"action":"do_nothing"}])");
  REQUIRE(single.bundle.actions.size() == 1);
  CHECK(single.bundle.actions[0].kind == ActionKind::kDoNothing);

  auto fenced = parse_actions(
      "I agree with this one.\n```json\n[\n  {\"action\": \"retweet\", \"content\": \"so true\"},\n"
      "  {\"action\": \"follow\"}\n]\n```");
  REQUIRE(fenced.bundle.actions.size() == 2);
  CHECK(fenced.bundle.actions[0].kind == ActionKind::kRetweet);
  CHECK(fenced.bundle.actions[0].content == "so true");
  CHECK(fenced.bundle.actions[1].kind == ActionKind::kFollow);
  CHECK(fenced.reasoning.find("I agree") != std::string::npos);

  std::string ten = "[";
  for (int i = 0; i < 10; ++i) ten += std::string(i ? "," : "") + R"({"action":"tweet","content":"t)" + std::to_string(i) + "\"}";
  ten += "]";
  auto capped = parse_actions(ten, 3);
  CHECK(capped.bundle.actions.size() == 3);
  CHECK(capped.bundle.actions[2].content == "t2");
  CHECK_FALSE(capped.warnings.empty());

  auto unknown = parse_actions(R"([{"action":"shout","content":"x"},{"action":"like"}])");
  REQUIRE(unknown.bundle.actions.size() == 1);
  CHECK(unknown.bundle.actions[0].kind == ActionKind::kLike);
  CHECK(unknown.warnings.size() == 1);

  try {
    (void)parse_actions("no array here {\"action\": \"like\"}");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
  }
}

TEST_CASE("parse_actions inverts serialize_actions on valid bundles") {
  Rng rng(5);
  const char* texts[] = {"plain", "with \"quotes\" and [brackets]", "unicode caf\xc3\xa9", "commas, and: colons"};
  for (int trial = 0; trial < 200; ++trial) {
    ActionBundle b;
    b.round = 4;
    const std::size_t n = 1 + rng.below(3);
    std::set<std::string> users;
    while (b.actions.size() < n) {
      const auto kind = static_cast<ActionKind>(rng.below(kActionKindCount));
      Action a;
      a.kind = kind;
      switch (kind) {
        case ActionKind::kTweet: a.content = texts[rng.below(4)]; break;
        case ActionKind::kRetweet:
        case ActionKind::kReply:
          a.content = texts[rng.below(4)];
          a.target_post = static_cast<PostId>(1 + rng.below(50));
          break;
        case ActionKind::kLike:
        case ActionKind::kDislike: a.target_post = static_cast<PostId>(1 + rng.below(50)); break;
        case ActionKind::kFollow:
        case ActionKind::kUnfollow: {
          a.target_user = "u" + std::to_string(rng.below(4));
          if (!users.insert(*a.target_user).second) continue;
          break;
        }
        case ActionKind::kDoNothing: continue;
      }
      b.actions.push_back(a);
    }
    REQUIRE(is_valid(b));
    auto parsed = parse_actions(serialize_actions(b), kMaxActionsPerRound, 4);
    CHECK(parsed.bundle == b);
    CHECK(parsed.warnings.empty());
  }
}

TEST_CASE("bind_targets fills targets from the message") {
  IncomingMessage msg{12, "u9", "original text", 1, false};
  ActionBundle b{{Action{ActionKind::kRetweet, {}, {}, {}}, Action{ActionKind::kFollow, {}, {}, {}}}, 0};
  auto bound = bind_targets(b, msg);
  REQUIRE(bound.actions.size() == 2);
  CHECK(bound.actions[0].target_post == 12);
  CHECK(bound.actions[0].content == "original text");
  CHECK(bound.actions[1].target_user == "u9");
  CHECK(is_valid(bound));

  auto orphan = bind_targets(ActionBundle{{Action{ActionKind::kLike, {}, {}, {}}}, 0}, std::nullopt);
  REQUIRE(orphan.actions.size() == 1);
  CHECK(orphan.actions[0].kind == ActionKind::kDoNothing);
}

TEST_CASE("scripted distribution matches hand-computed weights") {
  // latent 0.5 vs tag -1: A = -0.5, pos 0, neg 0.5, damp 1.
  // Raw weights like .30 retweet .15 reply .60 dislike .50 tweet .25 (sum 1.8),
  // scaled by activity 0.6.
  ScriptedAgentParams p{0.5, 0.6, 0.8, 0.1, 0.4};
  auto d = scripted_distribution(p, -1, true);
  CHECK(d.primary[idx(ActionKind::kReply)] == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(d.primary[idx(ActionKind::kDislike)] == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
  CHECK(d.primary[idx(ActionKind::kLike)] == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(d.primary[idx(ActionKind::kRetweet)] == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(d.primary[idx(ActionKind::kTweet)] == doctest::Approx(1.0 / 12.0).epsilon(1e-12));
  CHECK(d.primary[idx(ActionKind::kDoNothing)] == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(d.follow == 0.0);
  CHECK(d.unfollow == doctest::Approx(0.4));

  // No message: active agents tweet with probability idle_tweet.
  auto idle = scripted_distribution(p, std::nullopt, false);
  CHECK(idle.primary[idx(ActionKind::kTweet)] == doctest::Approx(0.15));
  CHECK(idle.primary[idx(ActionKind::kDoNothing)] == doctest::Approx(0.85));
}

TEST_CASE("scripted distribution sums to one over a parameter grid") {
  const double grid[] = {0.0, 0.3, 1.0};
  const double stances[] = {-1.0, -0.4, 0.0, 0.7, 1.0};
  for (double l : stances)
    for (double act : grid)
      for (double h : grid)
        for (double ad : grid)
          for (int tag : {-1, 0, 1})
            for (bool f : {false, true}) {
              auto d = scripted_distribution({l, act, h, 0.1, ad}, tag, f);
              double s = 0.0;
              for (double v : d.primary) {
                CHECK(v >= 0.0);
                s += v;
              }
              CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
              CHECK(d.follow + d.unfollow <= 1.0);
            }
}

TEST_CASE("aligned corner agent always likes or retweets") {
  ScriptedBackend backend;
  const Agent a = make_agent(1.0, 1.0, 1.0, 0.0, 1.0);
  auto d = scripted_distribution(a.params, 1, false);
  CHECK(d.primary[idx(ActionKind::kLike)] + d.primary[idx(ActionKind::kRetweet)] == doctest::Approx(1.0));
  for (std::uint64_t seed = 0; seed < 300; ++seed) {
    auto r = backend.decide(a, with_message(1, false), seed);
    const auto k = r.bundle.actions.front().kind;
    CHECK((k == ActionKind::kLike || k == ActionKind::kRetweet));
  }
}

TEST_CASE("inactive agent always does nothing") {
  ScriptedBackend backend;
  const Agent a = make_agent(0.3, 0.0, 0.5, 0.5, 0.5);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto r = backend.decide(a, with_message(-1, true), seed);
    REQUIRE(r.bundle.actions.size() == 1);
    CHECK(r.bundle.actions[0].kind == ActionKind::kDoNothing);
  }
}

TEST_CASE("scripted decide frequencies follow the analytic distribution") {
  ScriptedBackend backend;
  const Agent a = make_agent(0.5, 0.6, 0.8, 0.1, 0.4);
  const auto d = scripted_distribution(a.params, -1, true);
  const int draws = 20000;
  std::array<int, kActionKindCount> counts{};
  int unfollows = 0, active = 0;
  for (int s = 0; s < draws; ++s) {
    auto r = backend.decide(a, with_message(-1, true), mix_seed({42, static_cast<std::uint64_t>(s)}));
    ++counts[idx(r.bundle.actions[0].kind)];
    if (r.bundle.actions[0].kind != ActionKind::kDoNothing) {
      ++active;
      if (r.bundle.actions.size() == 2 && r.bundle.actions[1].kind == ActionKind::kUnfollow) ++unfollows;
    }
  }
  for (std::size_t k = 0; k < kActionKindCount; ++k) {
    const double p = d.primary[k];
    const double sigma = std::sqrt(draws * p * (1 - p));
    CHECK(std::abs(counts[k] - draws * p) <= 4 * sigma + 1e-9);
  }
  const double sigma = std::sqrt(active * d.unfollow * (1 - d.unfollow));
  CHECK(std::abs(unfollows - active * d.unfollow) <= 4 * sigma);
}

TEST_CASE("scripted decide is pure and always valid") {
  ScriptedBackend backend;
  const double grid[] = {0.0, 0.5, 1.0};
  for (double l : {-1.0, -0.3, 0.0, 0.6, 1.0})
    for (double act : grid)
      for (double h : grid)
        for (double t : grid)
          for (double ad : grid)
            for (int tag : {-1, 0, 1}) {
              const Agent a = make_agent(l, act, h, t, ad);
              for (std::uint64_t seed : {1u, 2u}) {
                auto ctx = with_message(tag, seed == 2);
                auto r1 = backend.decide(a, ctx, seed);
                auto r2 = backend.decide(a, ctx, seed);
                CHECK(r1.bundle == r2.bundle);
                CHECK(is_valid(r1.bundle));
                auto idle = backend.decide(a, DecisionContext{}, seed);
                CHECK(is_valid(idle.bundle));
              }
            }
}

TEST_CASE("scripted stance uses the dead zone") {
  CHECK(scripted_stance(0.9) == 1);
  CHECK(scripted_stance(0.1) == 0);
  CHECK(scripted_stance(-0.19) == 0);
  CHECK(scripted_stance(-0.2) == -1);
  ScriptedBackend backend;
  CHECK(backend.infer_stance(make_agent(0.9, 1, 1, 0, 1), {}, "x") == 1);
  CHECK(backend.infer_stance(make_agent(0.1, 1, 1, 0, 1), {}, "x") == 0);
}

TEST_CASE("absorb_influence moves toward agreeing sources and away from opposed ones") {
  ScriptedAgentParams p{0.2, 0.5, 0.5, 0.1, 1.0};
  // factor = adoption * gain * ((1 - h) + h * A) with A = 0.2 * 1.
  const double expect = 0.2 + 1.0 * 0.5 * (0.5 + 0.5 * 0.2) * (1.0 - 0.2);
  CHECK(absorb_influence(p, 1, 0.5) == doctest::Approx(expect).epsilon(1e-14));
  ScriptedAgentParams stubborn{0.9, 0.5, 1.0, 0.1, 1.0};
  CHECK(absorb_influence(stubborn, -1, 0.5) > 0.9);
  ScriptedAgentParams edge{1.0, 0.5, 0.0, 0.1, 1.0};
  CHECK(absorb_influence(edge, 1, 1.0) == 1.0);
}

TEST_CASE("prompt rendering") {
  PromptLibrary lib;
  lib.add("plain", "nothing to fill {\"json\": 1}");
  CHECK(lib.render("plain", {}) == "nothing to fill {\"json\": 1}");
  lib.add("t", "a {x} b {{x}} c {y}");
  CHECK(lib.render("t", {{"x", "1"}, {"y", "2"}}) == "a 1 b {x} c 2");
  try {
    (void)lib.render("t", {{"x", "1"}});
    FAIL("expected template error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTemplate);
    CHECK(std::string(e.what()).find("y") != std::string::npos);
  }
  CHECK_THROWS_AS((void)lib.render("missing", {}), Error);
}

TEST_CASE("shipped actions template renders every decision field") {
  const auto lib = PromptLibrary::load(default_template_dir());
  for (auto id : {templates::kProfileSynthesis, templates::kShortMemory, templates::kLongMemory,
                  templates::kActionsCalling, templates::kStance})
    CHECK(lib.contains(id));
  const std::string text = lib.render(templates::kActionsCalling, {{"profile", "P-PROFILE"},
                                                                   {"topic", "T-TOPIC"},
                                                                   {"news", "N-NEWS"},
                                                                   {"memory", "M-MEMORY"},
                                                                   {"message", "G-MESSAGE"},
                                                                   {"followed", "True"}});
  for (auto s : {"T-TOPIC", "N-NEWS", "M-MEMORY", "G-MESSAGE", "P-PROFILE"})
    CHECK(text.find(s) != std::string::npos);
}

TEST_CASE("prompt library loads external files") {
  const auto dir = std::filesystem::temp_directory_path() / "policysim_prompt_test";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "hello.txt") << "Hi {name}";
  const auto lib = PromptLibrary::load(dir);
  CHECK(lib.render("hello", {{"name", "Ada"}}) == "Hi Ada");
  std::filesystem::remove_all(dir);
}

TEST_CASE("profile synthesis heuristics") {
  ScriptedBackend backend;
  UserRecord r;
  r.id = "42";
  r.description = "Retired teacher";
  r.tweets = {"Go vote! The election matters #WakeUpAmerica", "Congress must act on the legislation"};
  const auto p = synthesize_profile(r, backend);
  CHECK(std::find(p.interested_areas.begin(), p.interested_areas.end(), "politics") != p.interested_areas.end());
  CHECK(p.likely_identity == "educator");
  CHECK_FALSE(p.posting_style.empty());
  CHECK_FALSE(p.interaction_behavior.empty());
  CHECK(to_json(synthesize_profile(r, backend)).dump() == to_json(p).dump());

  UserRecord desc_only;
  desc_only.id = "43";
  desc_only.description = "Nurse, climate volunteer";
  const auto q = synthesize_profile(desc_only, backend);
  CHECK(q.interested_areas.front() == "environment");
  CHECK(q.likely_identity == "healthcare worker");

  UserRecord empty;
  empty.id = "44";
  CHECK_THROWS_AS(synthesize_profile(empty, backend), Error);
}

TEST_CASE("profile json round-trip") {
  AgentProfile p;
  p.user_id = "u7";
  p.likely_identity = "writer";
  p.interested_areas = {"sports", "health"};
  p.posting_style = "long-form posts";
  p.interaction_behavior = "broadcaster";
  p.raw_metadata = nlohmann::json{{"k", 1}};
  CHECK(profile_from_json(to_json(p)) == p);
  const std::string text = p.to_text();
  for (auto s : {"writer", "sports, health", "long-form posts", "broadcaster"}) CHECK(text.find(s) != std::string::npos);

  ScriptedAgentParams params{0.1, 0.2, 0.3, 0.4, 0.5};
  CHECK(params_from_json(to_json(params)) == params);
  CHECK_THROWS_AS(ScriptedAgentParams({2.0, 0.5, 0.5, 0.5, 0.5}).validate(), Error);
}

TEST_CASE("extract_json_field finds the first object with the key") {
  CHECK(extract_json_field("noise {\"a\": 1} then {\"summary\": \"ok\"}", "summary") == "ok");
  CHECK(extract_json_field("{\"p\": {\"x\": 1}}", "p") == "{\"x\":1}");
  CHECK_FALSE(extract_json_field("nothing", "p").has_value());
}
