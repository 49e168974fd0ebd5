#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "policysim/agent.hpp"
#include "policysim/backend.hpp"
#include "policysim/embedding.hpp"
#include "policysim/events.hpp"
#include "policysim/graph.hpp"

namespace policysim {

inline constexpr std::size_t kMaxHistoricalTweets = 20;

struct UserMetadata {
  UserRecord record;
  std::vector<std::string> following;
  std::vector<std::string> follower;
};

/// One account in the ingest format: "ID", "profile" {name, screen_name,
/// description, created_at, followers_count, friends_count}, "tweet" (list),
/// "neighbor" {following, follower}. Counts may be numbers or numeric
/// strings with stray whitespace. Tweets beyond the first 20 are dropped.
/// Throws kParse on a malformed record.
UserMetadata parse_metadata(const nlohmann::json& j);

/// Parses a metadata file body: one object, an array of objects, or the
/// brace-less key list with trailing commas seen in hand-written samples.
std::vector<nlohmann::json> parse_metadata_document(std::string_view text);

struct HistoricalPost {
  UserId author;
  std::string content;
};

struct IngestReport {
  std::size_t files = 0;
  std::size_t records = 0;
  std::size_t dropped_neighbors = 0;
  std::vector<std::string> errors;    // "<file>: <reason>"
  std::vector<std::string> warnings;

  [[nodiscard]] nlohmann::json to_json() const;
};

struct IngestResult {
  std::vector<UserMetadata> users;  // sorted by id
  std::vector<AgentProfile> profiles;  // aligned with users
  SocialGraph graph;
  std::vector<HistoricalPost> posts;  // author order, then tweet order
  IngestReport report;
};

/// Reads every *.json file of `dir` in name order. Malformed records are
/// skipped and reported; neighbor ids outside the ingested set are dropped.
IngestResult ingest(const std::filesystem::path& dir, DecisionBackend& backend);

// ---------------------------------------------------------------------------
// Training corpora.

inline constexpr std::string_view kSftSchema = "policysim.sft";
inline constexpr std::string_view kDpoSchema = "policysim.dpo";
inline constexpr int kCorpusVersion = 1;

struct BehaviorTuple {
  std::string event;
  UserId user;
  ActionKind action = ActionKind::kDoNothing;
  std::string content;
};

BehaviorTuple tuple_from_json(const nlohmann::json& j);
nlohmann::json to_json(const BehaviorTuple& t);

/// Reads tuples from a JSON array or one object per line.
std::vector<BehaviorTuple> read_tuples(const std::filesystem::path& path);

/// Tuples observed in a simulation log: every non-idle reaction, with the
/// message it answered (or the round's news) as event text.
std::vector<BehaviorTuple> tuples_from_log(const EventLog& log);

/// Profiles stored in a simulation log header.
std::map<UserId, AgentProfile> profiles_from_log(const EventLog& log);

std::string instruction_text(std::string_view event, const AgentProfile& profile);
std::string response_text(ActionKind action, std::string_view content);

struct SftRecord {
  std::string instruction;
  std::string response;
  UserId user;
  ActionKind action = ActionKind::kDoNothing;
};

nlohmann::json to_json(const SftRecord& r);
/// Throws kParse when a record violates the published schema.
SftRecord sft_record_from_json(const nlohmann::json& j);

struct SftExport {
  std::vector<SftRecord> records;
  std::size_t skipped_unknown_user = 0;
};

SftExport export_sft(const std::vector<BehaviorTuple>& tuples, const std::map<UserId, AgentProfile>& profiles);

struct Candidate {
  ActionKind action = ActionKind::kDoNothing;
  std::string content;

  bool operator==(const Candidate&) const = default;
};

/// Alternatives for tuple `index`; used as the pool of rejected responses.
using CandidateGenerator = std::function<std::vector<Candidate>(const BehaviorTuple&, std::size_t index)>;

/// `count` responses drawn (seeded, without replacement) from the other
/// tuples of the corpus.
CandidateGenerator log_sampled_candidates(std::vector<BehaviorTuple> corpus, std::size_t count, std::uint64_t seed);

/// `count` fresh decisions from `backend` with the tuple event as news.
CandidateGenerator backend_candidates(DecisionBackend& backend, std::map<UserId, Agent> agents, std::size_t count,
                                      std::uint64_t seed);

struct DpoConfig {
  std::size_t negatives = 3;       // J
  double similarity_threshold = 0.8;
};

struct DpoRecord {
  std::string instruction;
  Candidate preferred;
  std::vector<Candidate> rejected;
  UserId user;
};

nlohmann::json to_json(const DpoRecord& r);
DpoRecord dpo_record_from_json(const nlohmann::json& j);

/// A negative is admissible when its action differs from the preferred one
/// or its response similarity is below the threshold.
bool admissible(const Candidate& negative, const Candidate& preferred, double similarity, double threshold);

/// Picks J admissible negatives: different action first, then lowest
/// similarity, then generator order. nullopt when fewer than J qualify.
/// Duplicate candidates are considered once.
std::optional<std::vector<Candidate>> select_negatives(const Candidate& preferred, const std::vector<Candidate>& pool,
                                                       EmbeddingProvider& embedder, const DpoConfig& config);

struct DpoExport {
  std::vector<DpoRecord> records;
  std::size_t skipped_unknown_user = 0;
  std::size_t dropped_insufficient = 0;
};

DpoExport export_dpo(const std::vector<BehaviorTuple>& tuples, const std::map<UserId, AgentProfile>& profiles,
                     const CandidateGenerator& generator, EmbeddingProvider& embedder, const DpoConfig& config);

/// JSONL with a schema header line; a manifest with counts and downstream
/// training hyperparameters goes to `<path>.manifest.json`.
void write_sft(const std::filesystem::path& path, const SftExport& data);
void write_dpo(const std::filesystem::path& path, const DpoExport& data, const DpoConfig& config);

}  // namespace policysim
