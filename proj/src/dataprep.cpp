#include "policysim/dataprep.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>

#include "policysim/error.hpp"
#include "policysim/matrix.hpp"
#include "policysim/rng.hpp"

namespace policysim {

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string id_string(const nlohmann::json& v, const char* what) {
  if (v.is_string()) {
    auto s = trim(v.get<std::string>());
    if (s.empty()) throw Error(ErrorCode::kParse, std::string("empty ") + what);
    return s;
  }
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  throw Error(ErrorCode::kParse, std::string("bad ") + what + ": " + v.dump());
}

std::int64_t count_value(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return 0;
  if (it->is_number_integer()) return it->get<std::int64_t>();
  if (it->is_string()) {
    const auto s = trim(it->get<std::string>());
    if (s.empty()) return 0;
    std::size_t used = 0;
    try {
      const auto v = std::stoll(s, &used);
      if (used == s.size()) return v;
    } catch (const std::exception&) {
    }
  }
  throw Error(ErrorCode::kParse, std::string("bad ") + key + ": " + it->dump());
}

std::string text_value(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw Error(ErrorCode::kParse, std::string("bad ") + key + ": " + it->dump());
  return trim(it->get<std::string>());
}

std::vector<std::string> id_list(const nlohmann::json& obj, const char* key) {
  std::vector<std::string> out;
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return out;
  if (!it->is_array()) throw Error(ErrorCode::kParse, std::string(key) + " must be a list");
  for (const auto& v : *it) out.push_back(id_string(v, key));
  return out;
}

// Drops commas that directly precede a closing bracket, outside strings.
std::string strip_trailing_commas(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool in_string = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      out.push_back(c);
      if (c == '\\' && i + 1 < text.size()) out.push_back(text[++i]);
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    if (c == ',') {
      std::size_t j = i + 1;
      while (j < text.size() && std::isspace(static_cast<unsigned char>(text[j]))) ++j;
      if (j < text.size() && (text[j] == '}' || text[j] == ']')) continue;
    }
    out.push_back(c);
  }
  return out;
}

}  // namespace

UserMetadata parse_metadata(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::kParse, "record must be an object");
  UserMetadata m;
  auto id = j.find("ID");
  if (id == j.end()) id = j.find("id");
  if (id == j.end()) throw Error(ErrorCode::kParse, "record has no ID");
  m.record.id = id_string(*id, "ID");

  if (auto p = j.find("profile"); p != j.end() && !p->is_null()) {
    if (!p->is_object()) throw Error(ErrorCode::kParse, "profile must be an object");
    m.record.name = text_value(*p, "name");
    m.record.screen_name = text_value(*p, "screen_name");
    m.record.description = text_value(*p, "description");
    m.record.created_at = text_value(*p, "created_at");
    m.record.followers_count = count_value(*p, "followers_count");
    m.record.friends_count = count_value(*p, "friends_count");
  }
  auto t = j.find("tweet");
  if (t == j.end()) t = j.find("tweets");
  if (t != j.end() && !t->is_null()) {
    if (!t->is_array()) throw Error(ErrorCode::kParse, "tweet must be a list");
    for (const auto& v : *t) {
      if (!v.is_string()) throw Error(ErrorCode::kParse, "tweets must be strings");
      if (m.record.tweets.size() < kMaxHistoricalTweets) m.record.tweets.push_back(v.get<std::string>());
    }
  }
  if (auto n = j.find("neighbor"); n != j.end() && !n->is_null()) {
    if (!n->is_object()) throw Error(ErrorCode::kParse, "neighbor must be an object");
    m.following = id_list(*n, "following");
    m.follower = id_list(*n, "follower");
  }
  return m;
}

std::vector<nlohmann::json> parse_metadata_document(std::string_view text) {
  auto doc = nlohmann::json::parse(text, nullptr, false);
  if (doc.is_discarded()) {
    std::string relaxed(text);
    const auto first = relaxed.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && relaxed[first] == '"') relaxed = "{" + relaxed + "}";
    doc = nlohmann::json::parse(strip_trailing_commas(relaxed), nullptr, false);
  }
  if (doc.is_discarded()) throw Error(ErrorCode::kParse, "not valid JSON");
  if (doc.is_object()) return {doc};
  if (doc.is_array()) return doc.get<std::vector<nlohmann::json>>();
  throw Error(ErrorCode::kParse, "expected an object or an array of objects");
}

nlohmann::json IngestReport::to_json() const {
  return {{"files", files},
          {"records", records},
          {"dropped_neighbors", dropped_neighbors},
          {"errors", errors},
          {"warnings", warnings}};
}

IngestResult ingest(const std::filesystem::path& dir, DecisionBackend& backend) {
  IngestResult out;
  if (!std::filesystem::is_directory(dir)) throw Error(ErrorCode::kIo, "not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  out.report.files = files.size();

  std::map<std::string, UserMetadata> by_id;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    std::vector<nlohmann::json> docs;
    try {
      docs = parse_metadata_document(read_file(f));
    } catch (const Error& e) {
      out.report.errors.push_back(name + ": " + e.what());
      continue;
    }
    for (std::size_t i = 0; i < docs.size(); ++i) {
      try {
        auto m = parse_metadata(docs[i]);
        if (m.record.tweets.empty() && m.record.description.empty()) {
          throw Error(ErrorCode::kParse, "record " + m.record.id + " has neither tweets nor a description");
        }
        if (by_id.contains(m.record.id)) throw Error(ErrorCode::kParse, "duplicate ID " + m.record.id);
        by_id.emplace(m.record.id, std::move(m));
      } catch (const Error& e) {
        out.report.errors.push_back(name + "[" + std::to_string(i) + "]: " + e.what());
      }
    }
  }
  if (by_id.empty()) out.report.warnings.push_back("no users ingested from " + dir.string());

  std::vector<UserId> ids;
  for (auto& [id, m] : by_id) {
    ids.push_back(id);
    out.users.push_back(std::move(m));
  }
  out.report.records = out.users.size();
  out.graph = SocialGraph(ids);
  auto link = [&](const std::string& a, const std::string& b) {
    if (a == b) return;
    if (!out.graph.index_of(a) || !out.graph.index_of(b)) {
      ++out.report.dropped_neighbors;
      return;
    }
    out.graph.apply(a, b, RelationKind::kFollow, -1);
  };
  for (const auto& u : out.users) {
    for (const auto& f : u.following) link(u.record.id, f);
    for (const auto& f : u.follower) link(f, u.record.id);
  }
  if (out.report.dropped_neighbors > 0) {
    out.report.warnings.push_back(std::to_string(out.report.dropped_neighbors) +
                                  " neighbor references outside the ingested set were dropped");
  }
  for (const auto& u : out.users) {
    out.profiles.push_back(synthesize_profile(u.record, backend));
    for (const auto& t : u.record.tweets) out.posts.push_back({u.record.id, t});
  }
  return out;
}

// ---------------------------------------------------------------------------

BehaviorTuple tuple_from_json(const nlohmann::json& j) {
  BehaviorTuple t;
  try {
    t.event = j.at("event").get<std::string>();
    t.user = j.at("user").is_string() ? j.at("user").get<std::string>() : std::to_string(j.at("user").get<std::int64_t>());
    auto kind = parse_action_kind(j.at("action").get<std::string>());
    if (!kind) throw Error(ErrorCode::kParse, "unknown action " + j.at("action").dump());
    t.action = *kind;
    t.content = j.value("content", "");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed tuple: ") + e.what());
  }
  return t;
}

nlohmann::json to_json(const BehaviorTuple& t) {
  return {{"event", t.event}, {"user", t.user}, {"action", to_string(t.action)}, {"content", t.content}};
}

std::vector<BehaviorTuple> read_tuples(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::vector<BehaviorTuple> out;
  auto doc = nlohmann::json::parse(text, nullptr, false);
  if (!doc.is_discarded() && doc.is_array()) {
    for (const auto& j : doc) out.push_back(tuple_from_json(j));
    return out;
  }
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    const auto line = trim(std::string_view(text).substr(start, end - start));
    if (!line.empty()) {
      auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) throw Error(ErrorCode::kParse, "bad tuple line: " + line.substr(0, 60));
      out.push_back(tuple_from_json(j));
    }
    start = end + 1;
  }
  return out;
}

std::vector<BehaviorTuple> tuples_from_log(const EventLog& log) {
  std::map<PostId, std::string> content;
  std::map<int, std::string> news;
  std::vector<BehaviorTuple> out;
  for (const auto& r : log.records()) {
    const auto& p = r.payload;
    if (r.kind == EventKind::kPost) {
      content[p.at("post_id").get<PostId>()] = p.at("content").get<std::string>();
    } else if (r.kind == EventKind::kNewsInjection) {
      auto& s = news[r.round];
      if (!s.empty()) s += " | ";
      s += p.at("text").get<std::string>();
    } else if (r.kind == EventKind::kReaction) {
      auto kind = parse_action_kind(p.at("action").get<std::string>());
      if (!kind || *kind == ActionKind::kDoNothing) continue;
      BehaviorTuple t;
      t.user = p.at("receiver").get<std::string>();
      t.action = *kind;
      t.content = p.value("content", "");
      if (p.contains("post") && !p["post"].is_null() && content.contains(p["post"].get<PostId>())) {
        t.event = content[p["post"].get<PostId>()];
      } else if (news.contains(r.round)) {
        t.event = news[r.round];
      } else {
        t.event = log.header().value("config", nlohmann::json::object()).value("topic", "");
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

std::map<UserId, AgentProfile> profiles_from_log(const EventLog& log) {
  std::map<UserId, AgentProfile> out;
  if (!log.header().contains("profiles")) return out;
  for (const auto& j : log.header().at("profiles")) {
    auto p = profile_from_json(j);
    out.emplace(p.user_id, std::move(p));
  }
  return out;
}

std::string instruction_text(std::string_view event, const AgentProfile& profile) {
  return "Event: " + std::string(event) + "\nProfile:\n" + profile.to_text();
}

std::string response_text(ActionKind action, std::string_view content) {
  std::string out = "Action: " + std::string(to_string(action));
  if (!content.empty()) out += "\nContent: " + std::string(content);
  return out;
}

nlohmann::json to_json(const SftRecord& r) {
  return {{"instruction", r.instruction}, {"response", r.response}, {"user", r.user}, {"action", to_string(r.action)}};
}

SftRecord sft_record_from_json(const nlohmann::json& j) {
  SftRecord r;
  try {
    r.instruction = j.at("instruction").get<std::string>();
    r.response = j.at("response").get<std::string>();
    r.user = j.at("user").get<std::string>();
    auto kind = parse_action_kind(j.at("action").get<std::string>());
    if (!kind || to_string(*kind) != j.at("action").get<std::string>()) {
      throw Error(ErrorCode::kParse, "action label outside the vocabulary");
    }
    r.action = *kind;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed SFT record: ") + e.what());
  }
  if (r.instruction.empty() || r.response.empty()) throw Error(ErrorCode::kParse, "empty instruction or response");
  if (j.size() != 4) throw Error(ErrorCode::kParse, "unexpected fields in SFT record");
  return r;
}

SftExport export_sft(const std::vector<BehaviorTuple>& tuples, const std::map<UserId, AgentProfile>& profiles) {
  SftExport out;
  for (const auto& t : tuples) {
    auto it = profiles.find(t.user);
    if (it == profiles.end()) {
      ++out.skipped_unknown_user;
      continue;
    }
    out.records.push_back({instruction_text(t.event, it->second), response_text(t.action, t.content), t.user, t.action});
  }
  return out;
}

CandidateGenerator log_sampled_candidates(std::vector<BehaviorTuple> corpus, std::size_t count, std::uint64_t seed) {
  return [corpus = std::move(corpus), count, seed](const BehaviorTuple&, std::size_t index) {
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (i != index) others.push_back(i);
    }
    Rng rng(mix_seed({seed, static_cast<std::uint64_t>(index)}));
    std::vector<Candidate> out;
    for (std::size_t k : rng.sample_without_replacement(others.size(), std::min(count, others.size()))) {
      const auto& t = corpus[others[k]];
      out.push_back({t.action, t.content});
    }
    return out;
  };
}

CandidateGenerator backend_candidates(DecisionBackend& backend, std::map<UserId, Agent> agents, std::size_t count,
                                      std::uint64_t seed) {
  return [&backend, agents = std::move(agents), count, seed](const BehaviorTuple& t, std::size_t index) {
    std::vector<Candidate> out;
    auto it = agents.find(t.user);
    if (it == agents.end()) return out;
    for (std::size_t k = 0; k < count; ++k) {
      DecisionContext ctx;
      ctx.topic = t.event;
      ctx.trigger_news = {t.event};
      auto res = backend.decide(it->second, ctx, mix_seed({seed, static_cast<std::uint64_t>(index), k}));
      for (const auto& a : res.bundle.actions) out.push_back({a.kind, a.content.value_or("")});
    }
    return out;
  };
}

nlohmann::json to_json(const DpoRecord& r) {
  nlohmann::json rejected = nlohmann::json::array();
  for (const auto& c : r.rejected) rejected.push_back(response_text(c.action, c.content));
  return {{"instruction", r.instruction},
          {"chosen", response_text(r.preferred.action, r.preferred.content)},
          {"rejected", rejected},
          {"user", r.user}};
}

namespace {

Candidate candidate_from_response(const std::string& text) {
  static constexpr std::string_view kAction = "Action: ";
  static constexpr std::string_view kContent = "\nContent: ";
  if (text.rfind(kAction, 0) != 0) throw Error(ErrorCode::kParse, "response must start with an action label");
  const auto nl = text.find(kContent);
  const std::string label = text.substr(kAction.size(), nl == std::string::npos ? std::string::npos : nl - kAction.size());
  auto kind = parse_action_kind(label);
  if (!kind || to_string(*kind) != label) throw Error(ErrorCode::kParse, "unknown action label '" + label + "'");
  return {*kind, nl == std::string::npos ? std::string() : text.substr(nl + kContent.size())};
}

}  // namespace

DpoRecord dpo_record_from_json(const nlohmann::json& j) {
  DpoRecord r;
  try {
    r.instruction = j.at("instruction").get<std::string>();
    r.preferred = candidate_from_response(j.at("chosen").get<std::string>());
    for (const auto& x : j.at("rejected")) r.rejected.push_back(candidate_from_response(x.get<std::string>()));
    r.user = j.at("user").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("malformed DPO record: ") + e.what());
  }
  if (r.instruction.empty()) throw Error(ErrorCode::kParse, "empty instruction");
  return r;
}

bool admissible(const Candidate& negative, const Candidate& preferred, double similarity, double threshold) {
  return negative.action != preferred.action || similarity < threshold;
}

std::optional<std::vector<Candidate>> select_negatives(const Candidate& preferred, const std::vector<Candidate>& pool,
                                                       EmbeddingProvider& embedder, const DpoConfig& config) {
  std::vector<Candidate> unique;
  for (const auto& c : pool) {
    if (std::find(unique.begin(), unique.end(), c) == unique.end()) unique.push_back(c);
  }
  std::vector<std::string> texts{response_text(preferred.action, preferred.content)};
  for (const auto& c : unique) texts.push_back(response_text(c.action, c.content));
  const auto emb = embedder.embed(texts);

  struct Scored {
    bool same_action;
    double similarity;
    std::size_t order;
  };
  std::vector<Scored> ok;
  for (std::size_t i = 0; i < unique.size(); ++i) {
    const double sim = cosine(emb[0], emb[i + 1]);
    if (admissible(unique[i], preferred, sim, config.similarity_threshold)) {
      ok.push_back({unique[i].action == preferred.action, sim, i});
    }
  }
  if (ok.size() < config.negatives) return std::nullopt;
  std::sort(ok.begin(), ok.end(), [](const Scored& a, const Scored& b) {
    if (a.same_action != b.same_action) return !a.same_action;
    if (a.similarity != b.similarity) return a.similarity < b.similarity;
    return a.order < b.order;
  });
  std::vector<Candidate> out;
  for (std::size_t k = 0; k < config.negatives; ++k) out.push_back(unique[ok[k].order]);
  return out;
}

DpoExport export_dpo(const std::vector<BehaviorTuple>& tuples, const std::map<UserId, AgentProfile>& profiles,
                     const CandidateGenerator& generator, EmbeddingProvider& embedder, const DpoConfig& config) {
  DpoExport out;
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    const auto& t = tuples[i];
    auto it = profiles.find(t.user);
    if (it == profiles.end()) {
      ++out.skipped_unknown_user;
      continue;
    }
    const Candidate preferred{t.action, t.content};
    auto negatives = select_negatives(preferred, generator(t, i), embedder, config);
    if (!negatives) {
      ++out.dropped_insufficient;
      continue;
    }
    out.records.push_back({instruction_text(t.event, it->second), preferred, std::move(*negatives), t.user});
  }
  return out;
}

namespace {

void write_corpus(const std::filesystem::path& path, std::string_view schema, std::size_t count,
                  const std::vector<nlohmann::json>& rows, nlohmann::json manifest) {
  std::string body = nlohmann::json{{"schema", schema}, {"version", kCorpusVersion}, {"count", count}}.dump() + "\n";
  for (const auto& r : rows) body += r.dump() + "\n";
  write_file(path, body);
  manifest["schema"] = schema;
  manifest["version"] = kCorpusVersion;
  manifest["records"] = count;
  manifest["file"] = path.filename().string();
  write_file(path.string() + ".manifest.json", manifest.dump(2) + "\n");
}

}  // namespace

void write_sft(const std::filesystem::path& path, const SftExport& data) {
  std::vector<nlohmann::json> rows;
  for (const auto& r : data.records) rows.push_back(to_json(r));
  write_corpus(path, kSftSchema, rows.size(), rows,
               {{"skipped_unknown_user", data.skipped_unknown_user},
                {"training", {{"objective", "sft"}, {"loss", "response negative log-likelihood"}}}});
}

void write_dpo(const std::filesystem::path& path, const DpoExport& data, const DpoConfig& config) {
  std::vector<nlohmann::json> rows;
  for (const auto& r : data.records) rows.push_back(to_json(r));
  write_corpus(path, kDpoSchema, rows.size(), rows,
               {{"skipped_unknown_user", data.skipped_unknown_user},
                {"dropped_insufficient", data.dropped_insufficient},
                {"negatives", config.negatives},
                {"similarity_threshold", config.similarity_threshold},
                {"training", {{"objective", "dpo"}, {"beta", 0.1}}}});
}

}  // namespace policysim
