#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <set>

#include "policysim/dataprep.hpp"
#include "policysim/error.hpp"
#include "policysim/rng.hpp"

using namespace policysim;
using nlohmann::json;

namespace {

const std::filesystem::path kMeta = std::filesystem::path(POLICYSIM_FIXTURE_DIR) / "metadata";

AgentProfile profile(const UserId& id) {
  AgentProfile p;
  p.user_id = id;
  p.likely_identity = "resident of " + id;
  p.interested_areas = {"chess"};
  p.posting_style = "short sentences";
  p.interaction_behavior = "calm";
  return p;
}

std::map<UserId, AgentProfile> profiles(int n) {
  std::map<UserId, AgentProfile> out;
  for (int i = 0; i < n; ++i) out.emplace("u" + std::to_string(i), profile("u" + std::to_string(i)));
  return out;
}

const char* kWords[] = {"budget", "schools", "roads", "taxes", "vote", "rally", "clinic", "housing", "rent", "park"};

std::vector<BehaviorTuple> random_tuples(std::size_t n, int users, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<BehaviorTuple> out;
  for (std::size_t i = 0; i < n; ++i) {
    BehaviorTuple t;
    t.event = std::string("news about ") + kWords[rng.below(10)];
    t.user = "u" + std::to_string(rng.below(static_cast<std::uint64_t>(users)));
    t.action = static_cast<ActionKind>(rng.below(kActionKindCount));
    if (t.action == ActionKind::kTweet || t.action == ActionKind::kReply) {
      t.content = std::string(kWords[rng.below(10)]) + " " + kWords[rng.below(10)] + " " + kWords[rng.below(10)];
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_CASE("metadata record parsing") {
  json j = {{"ID", "7"},
            {"profile",
             {{"name", "N"},
              {"screen_name", "n"},
              {"description", "d"},
              {"created_at", "x"},
              {"followers_count", " 12 "},
              {"friends_count", 3}}},
            {"tweet", json::array()},
            {"neighbor", {{"following", {"8"}}, {"follower", json::array()}}}};
  for (int i = 0; i < 25; ++i) j["tweet"].push_back("t" + std::to_string(i));
  const auto m = parse_metadata(j);
  CHECK(m.record.id == "7");
  CHECK(m.record.followers_count == 12);
  CHECK(m.record.friends_count == 3);
  REQUIRE(m.record.tweets.size() == kMaxHistoricalTweets);
  CHECK(m.record.tweets.front() == "t0");
  CHECK(m.record.tweets.back() == "t19");
  CHECK(m.following == std::vector<std::string>{"8"});

  auto bad = j;
  bad["profile"]["followers_count"] = "twelve";
  CHECK_THROWS_AS(parse_metadata(bad), Error);
  bad = j;
  bad.erase("ID");
  CHECK_THROWS_AS(parse_metadata(bad), Error);
}

TEST_CASE("metadata documents in each accepted layout") {
  CHECK(parse_metadata_document(R"({"ID": "1"})").size() == 1);
  CHECK(parse_metadata_document(R"([{"ID": "1"}, {"ID": "2"}])").size() == 2);
  const auto loose = parse_metadata_document("\"ID\": \"1\",\n\"tweet\": [\"a\", \"b\",],\n");
  REQUIRE(loose.size() == 1);
  CHECK(loose[0].at("tweet").size() == 2);
  CHECK_THROWS_AS(parse_metadata_document("{\"ID\": "), Error);
}

TEST_CASE("fixture directory ingest") {
  ScriptedBackend backend;
  const auto in = ingest(kMeta, backend);
  CHECK(in.report.files == 7);
  CHECK(in.report.records == 6);
  CHECK(in.users.size() == 6);
  CHECK(in.profiles.size() == 6);
  CHECK(in.report.dropped_neighbors == 2);
  CHECK(in.report.errors ==
        std::vector<std::string>{"batch.json[1]: record has no ID", "broken.json: not valid JSON"});
  CHECK(in.posts.size() == 26);

  // Oracle: follow relations listed by either side, restricted to ingested ids.
  const std::set<std::pair<std::string, std::string>> expect{{"1001", "1002"}, {"1001", "1003"}, {"1002", "1001"},
                                                             {"1004", "1002"}, {"1005", "1001"}, {"1006", "1003"},
                                                             {"1006", "1004"}};
  std::set<std::pair<std::string, std::string>> got;
  for (const auto& e : in.graph.edges()) got.emplace(in.graph.node(e.follower), in.graph.node(e.followee));
  CHECK(got == expect);

  const auto& ivy = in.users[4];
  CHECK(ivy.record.id == "1005");
  CHECK(ivy.record.followers_count == 12);
  CHECK(ivy.record.description == "Nurse and parent");  // trimmed
  for (std::size_t i = 0; i < in.users.size(); ++i) CHECK(in.profiles[i].user_id == in.users[i].record.id);

  const auto again = ingest(kMeta, backend);
  CHECK(again.report.to_json() == in.report.to_json());
  CHECK(again.graph.edges().size() == in.graph.edges().size());
  CHECK_THROWS_AS(ingest(kMeta / "missing", backend), Error);
}

TEST_CASE("sft export skips unknown users") {
  auto tuples = random_tuples(100, 5, 1);
  for (std::size_t i : {7, 40, 93}) tuples[i].user = "ghost" + std::to_string(i);
  const auto out = export_sft(tuples, profiles(5));
  CHECK(out.records.size() == 97);
  CHECK(out.skipped_unknown_user == 3);
  std::size_t k = 0;
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    if (tuples[i].user.rfind("ghost", 0) == 0) continue;
    const auto& r = out.records[k++];
    CHECK(r.user == tuples[i].user);
    CHECK(r.action == tuples[i].action);
    CHECK(r.instruction.find(tuples[i].event) != std::string::npos);
    const auto back = sft_record_from_json(to_json(r));
    CHECK(back.instruction == r.instruction);
    CHECK(back.response == r.response);
  }
}

TEST_CASE("sft schema violations") {
  json good = {{"instruction", "i"}, {"response", "Action: like"}, {"user", "u"}, {"action", "like"}};
  CHECK_NOTHROW(sft_record_from_json(good));
  auto extra = good;
  extra["score"] = 1;
  CHECK_THROWS_AS(sft_record_from_json(extra), Error);
  auto label = good;
  label["action"] = "Like";
  CHECK_THROWS_AS(sft_record_from_json(label), Error);
  auto empty = good;
  empty["response"] = "";
  CHECK_THROWS_AS(sft_record_from_json(empty), Error);
}

TEST_CASE("negative admissibility") {
  const Candidate like{ActionKind::kLike, ""};
  CHECK(admissible({ActionKind::kReply, "x"}, like, 1.0, 0.8));
  CHECK(admissible(like, like, 0.79, 0.8));
  CHECK_FALSE(admissible(like, like, 0.8, 0.8));
}

TEST_CASE("negative selection matches an exhaustive oracle") {
  HashedEmbedder emb(32);
  const DpoConfig cfg{3, 0.8};
  const auto corpus = random_tuples(50, 4, 9);
  const auto gen = log_sampled_candidates(corpus, 12, 4);
  std::size_t checked = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const Candidate preferred{corpus[i].action, corpus[i].content};
    const auto pool = gen(corpus[i], i);
    CHECK(pool.size() == 12);
    // Oracle: dedupe, then repeatedly take the best remaining admissible
    // candidate by (same action, similarity, first position).
    std::vector<Candidate> unique;
    for (const auto& c : pool)
      if (std::find(unique.begin(), unique.end(), c) == unique.end()) unique.push_back(c);
    const auto ref = emb.embed_one(response_text(preferred.action, preferred.content));
    std::vector<bool> taken(unique.size(), false);
    std::vector<Candidate> expect;
    for (std::size_t round = 0; round < cfg.negatives; ++round) {
      std::optional<std::size_t> best;
      double best_sim = 0.0;
      bool best_same = true;
      for (std::size_t k = 0; k < unique.size(); ++k) {
        if (taken[k]) continue;
        const double sim = cosine(ref, emb.embed_one(response_text(unique[k].action, unique[k].content)));
        if (!admissible(unique[k], preferred, sim, cfg.similarity_threshold)) continue;
        const bool same = unique[k].action == preferred.action;
        if (!best || (!same && best_same) || (same == best_same && sim < best_sim)) {
          best = k;
          best_sim = sim;
          best_same = same;
        }
      }
      if (!best) break;
      taken[*best] = true;
      expect.push_back(unique[*best]);
    }
    const auto got = select_negatives(preferred, pool, emb, cfg);
    if (expect.size() < cfg.negatives) {
      CHECK_FALSE(got.has_value());
    } else {
      REQUIRE(got.has_value());
      CHECK(*got == expect);
      ++checked;
    }
  }
  CHECK(checked > 40);
}

TEST_CASE("dpo export") {
  HashedEmbedder emb(32);
  auto tuples = random_tuples(60, 4, 2);
  tuples[3].user = "ghost";
  const auto gen = log_sampled_candidates(tuples, 12, 1);
  const auto out = export_dpo(tuples, profiles(4), gen, emb, {3, 0.8});
  CHECK(out.skipped_unknown_user == 1);
  CHECK(out.records.size() + out.dropped_insufficient == 59);
  for (const auto& r : out.records) {
    REQUIRE(r.rejected.size() == 3);
    std::set<std::string> distinct;
    for (const auto& c : r.rejected) {
      distinct.insert(response_text(c.action, c.content));
      const double sim = cosine(emb.embed_one(response_text(c.action, c.content)),
                                emb.embed_one(response_text(r.preferred.action, r.preferred.content)));
      CHECK(admissible(c, r.preferred, sim, 0.8));
    }
    CHECK(distinct.size() == 3);
    const auto back = dpo_record_from_json(to_json(r));
    CHECK(back.preferred == r.preferred);
    CHECK(back.rejected == r.rejected);
  }
  // A pool that is too small drops the tuple.
  const auto tiny = export_dpo(tuples, profiles(4), log_sampled_candidates(tuples, 2, 1), emb, {3, 0.8});
  CHECK(tiny.records.empty());
  CHECK(tiny.dropped_insufficient == 59);
  CHECK_THROWS_AS(dpo_record_from_json(json{{"instruction", "i"}, {"chosen", "Act: x"}, {"rejected", json::array()},
                                            {"user", "u"}}),
                  Error);
}

TEST_CASE("corpus files carry a header and a manifest") {
  const auto dir = std::filesystem::temp_directory_path() / "policysim_corpus_test";
  std::filesystem::create_directories(dir);
  const auto sft = export_sft(random_tuples(10, 2, 3), profiles(2));
  write_sft(dir / "sft.jsonl", sft);
  const auto text = read_file(dir / "sft.jsonl");
  const auto head = json::parse(text.substr(0, text.find('\n')));
  CHECK(head.at("schema") == kSftSchema);
  CHECK(head.at("count") == 10);
  CHECK(std::count(text.begin(), text.end(), '\n') == 11);
  const auto manifest = json::parse(read_file(dir / "sft.jsonl.manifest.json"));
  CHECK(manifest.at("records") == 10);
  std::filesystem::remove_all(dir);
}

TEST_CASE("tuples read from json lines or arrays") {
  const auto dir = std::filesystem::temp_directory_path() / "policysim_tuple_test";
  std::filesystem::create_directories(dir);
  const auto tuples = random_tuples(5, 2, 4);
  json arr = json::array();
  std::string lines;
  for (const auto& t : tuples) {
    arr.push_back(to_json(t));
    lines += to_json(t).dump() + "\n";
  }
  write_file(dir / "a.json", arr.dump());
  write_file(dir / "b.jsonl", lines);
  for (const auto* name : {"a.json", "b.jsonl"}) {
    const auto back = read_tuples(dir / name);
    REQUIRE(back.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(back[i].user == tuples[i].user);
      CHECK(back[i].action == tuples[i].action);
      CHECK(back[i].content == tuples[i].content);
    }
  }
  std::filesystem::remove_all(dir);
}
