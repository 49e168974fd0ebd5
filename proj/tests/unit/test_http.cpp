#include <doctest.h>

#include <deque>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "policysim/backend.hpp"
#include "policysim/embedding.hpp"
#include "policysim/error.hpp"
#include "policysim/http_client.hpp"
#include "policysim/prompt.hpp"
#include "policysim/toxicity.hpp"

using namespace policysim;
using nlohmann::json;

namespace {

// Local server answering POSTs from a queue of (status, body) pairs; the
// last entry repeats once the queue runs dry.
class Stub {
 public:
  Stub() {
    server_.Post(".*", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu_);
      requests.push_back(json::parse(req.body, nullptr, false));
      auth.push_back(req.get_header_value("Authorization"));
      auto [status, body] = replies_.front();
      if (replies_.size() > 1) replies_.pop_front();
      res.status = status;
      res.set_content(body, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~Stub() {
    server_.stop();
    thread_.join();
  }

  void reply(int status, std::string body) {
    std::lock_guard lock(mu_);
    replies_.emplace_back(status, std::move(body));
  }
  void chat(const std::string& content) {
    reply(200, json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}.dump());
  }

  [[nodiscard]] HttpEndpoint endpoint(int retries = 2) const {
    HttpEndpoint ep;
    ep.url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/x";
    ep.timeout = std::chrono::seconds(5);
    ep.retry.max_retries = retries;
    ep.retry.base_delay = std::chrono::milliseconds(1);
    return ep;
  }
  std::size_t hits() {
    std::lock_guard lock(mu_);
    return requests.size();
  }

  std::vector<json> requests;
  std::vector<std::string> auth;

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::mutex mu_;
  std::deque<std::pair<int, std::string>> replies_;
};

Agent agent() {
  Agent a;
  a.profile.user_id = "u1";
  a.profile.likely_identity = "teacher";
  a.profile.interested_areas = {"schools"};
  a.profile.posting_style = "brief";
  a.profile.interaction_behavior = "polite";
  return a;
}

LlmBackend llm(const Stub& s) {
  LlmBackendConfig c;
  c.endpoint = s.endpoint(0);
  return LlmBackend(c, PromptLibrary::load(default_template_dir()));
}

}  // namespace

TEST_CASE("retry delays grow geometrically") {
  RetryPolicy p;
  CHECK(p.delay(1).count() == 500);
  CHECK(p.delay(3).count() == 2000);
}

TEST_CASE("server errors are retried") {
  for (int status : {500, 503, 429}) {
    Stub s;
    s.reply(status, "{}");
    s.reply(200, R"({"ok": true})");
    CHECK(post_json(s.endpoint(), {{"q", 1}}) == json{{"ok", true}});
    CHECK(s.hits() == 2);
    CHECK(s.requests[0] == json{{"q", 1}});
  }
}

TEST_CASE("client errors are not retried") {
  Stub s;
  s.reply(400, "{}");
  try {
    (void)post_json(s.endpoint(), json::object());
    FAIL("expected an error");
  } catch (const BackendUnavailable&) {
    FAIL("4xx is not an outage");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBackend);
  }
  CHECK(s.hits() == 1);
}

TEST_CASE("exhausted retries report an outage") {
  Stub s;
  s.reply(502, "{}");
  CHECK_THROWS_AS((void)post_json(s.endpoint(3), json::object()), BackendUnavailable);
  CHECK(s.hits() == 4);

  HttpEndpoint dead;
  dead.url = "http://127.0.0.1:1/none";
  dead.retry.max_retries = 1;
  dead.retry.base_delay = std::chrono::milliseconds(1);
  dead.timeout = std::chrono::seconds(1);
  CHECK_THROWS_AS((void)post_json(dead, json::object()), BackendUnavailable);
  dead.url = "127.0.0.1:1/none";
  CHECK_THROWS_AS((void)post_json(dead, json::object()), Error);
}

TEST_CASE("non-json bodies are parse errors") {
  Stub s;
  s.reply(200, "<html>");
  try {
    (void)post_json(s.endpoint(), json::object());
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kParse);
  }
}

TEST_CASE("chat client request and response") {
  Stub s;
  s.chat("hello there");
  auto ep = s.endpoint();
  ep.api_key = "secret";
  ChatClient client(ep, {"m1", 0.5, 64});
  CHECK(client.complete("sys", "usr") == "hello there");
  const auto& req = s.requests.at(0);
  CHECK(req.at("model") == "m1");
  CHECK(req.at("max_tokens") == 64);
  CHECK(req.at("messages").at(0).at("content") == "sys");
  CHECK(req.at("messages").at(1).at("role") == "user");
  CHECK(s.auth.at(0) == "Bearer secret");

  Stub bad;
  bad.reply(200, R"({"choices": []})");
  CHECK_THROWS_AS((void)ChatClient(bad.endpoint(), {}).complete("a", "b"), Error);
}

TEST_CASE("remote embeddings are normalized and checked") {
  Stub s;
  s.reply(200, R"({"data": [{"embedding": [3, 4]}, {"embedding": [0, 2]}]})");
  RemoteEmbedder emb(s.endpoint(), 2, "e1");
  const auto v = emb.embed({"a", "b"});
  CHECK(v[0] == std::vector<double>{0.6, 0.8});
  CHECK(v[1] == std::vector<double>{0.0, 1.0});
  CHECK(s.requests[0].at("input") == json{"a", "b"});
  CHECK(s.requests[0].at("model") == "e1");

  Stub wrong;
  wrong.reply(200, R"({"data": [{"embedding": [1, 2, 3]}]})");
  CHECK_THROWS_AS(RemoteEmbedder(wrong.endpoint(), 2).embed({"a"}), Error);
  Stub few;
  few.reply(200, R"({"data": [{"embedding": [1, 2]}]})");
  CHECK_THROWS_AS(RemoteEmbedder(few.endpoint(), 2).embed({"a", "b"}), Error);
}

TEST_CASE("remote toxicity falls back to the lexicon") {
  Stub s;
  s.reply(200, R"({"score": 0.42})");
  s.reply(200, R"({"score": 7})");
  RemoteToxicityScorer scorer(s.endpoint(0));
  const auto ok = scorer.score("some text");
  CHECK(ok.value == 0.42);
  CHECK_FALSE(ok.fallback);
  const auto out = scorer.score("you idiot");
  CHECK(out.fallback);
  CHECK(out.value == LexiconToxicityScorer().score_text("you idiot"));
  CHECK_THROWS_AS(scorer.score(""), Error);
}

TEST_CASE("llm backend decisions") {
  Stub s;
  s.chat("Thinking it over.\n[{\"action\": \"reply\", \"content\": \"Not convinced\"}]");
  auto backend = llm(s);
  DecisionContext ctx;
  ctx.topic = "the legislation";
  ctx.round = 2;
  ctx.message = IncomingMessage{5, "u9", "The bill is great", 1, true};
  const auto r = backend.decide(agent(), ctx, 0);
  CHECK_FALSE(r.parse_failed);
  REQUIRE(r.bundle.actions.size() == 1);
  CHECK(r.bundle.actions[0].kind == ActionKind::kReply);
  CHECK(r.bundle.actions[0].target_post == 5);
  CHECK(r.bundle.round == 2);
  const std::string prompt = s.requests[0].at("messages").at(1).at("content");
  CHECK(prompt.find("The bill is great") != std::string::npos);
  CHECK(prompt.find("teacher") != std::string::npos);
}

TEST_CASE("llm backend repairs one unparseable answer") {
  Stub s;
  s.chat("I would like it");
  s.chat(R"([{"action": "like"}])");
  auto backend = llm(s);
  DecisionContext ctx;
  ctx.message = IncomingMessage{3, "u2", "Vote yes", 1, false};
  const auto r = backend.decide(agent(), ctx, 0);
  CHECK_FALSE(r.parse_failed);
  CHECK(r.bundle.actions.at(0).kind == ActionKind::kLike);
  CHECK(s.hits() == 2);
  const std::string retry = s.requests[1].at("messages").at(1).at("content");
  CHECK(retry.find("I would like it") != std::string::npos);

  Stub never;
  never.chat("no idea");
  auto stubborn = llm(never);
  const auto fail = stubborn.decide(agent(), ctx, 0);
  CHECK(fail.parse_failed);
  REQUIRE(fail.bundle.actions.size() == 1);
  CHECK(fail.bundle.actions[0].kind == ActionKind::kDoNothing);
  CHECK(never.hits() == 2);
}

TEST_CASE("llm backend stance and field extraction") {
  Stub s;
  s.chat("My stance: -1");
  s.chat(R"(Sure: {"short_term_memory": "short note"})");
  s.chat("no json");
  auto backend = llm(s);
  CHECK(backend.infer_stance(agent(), {}, "the legislation") == -1);
  PromptFields fields{{"synthetic_profile", "p"}, {"message", "c"}, {"memory", "none"}};
  CHECK(backend.complete(templates::kShortMemory, fields, "short_term_memory") == "short note");
  CHECK_THROWS_AS(backend.complete(templates::kShortMemory, fields, "short_term_memory"), Error);

  Stub down;
  down.reply(503, "{}");
  auto offline = llm(down);
  CHECK_THROWS_AS(offline.decide(agent(), {}, 0), BackendUnavailable);
}
