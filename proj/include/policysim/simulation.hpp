#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "policysim/agent.hpp"
#include "policysim/backend.hpp"
#include "policysim/bandit.hpp"
#include "policysim/config.hpp"
#include "policysim/embedding.hpp"
#include "policysim/events.hpp"
#include "policysim/graph.hpp"
#include "policysim/intervention.hpp"
#include "policysim/memory.hpp"
#include "policysim/stance.hpp"
#include "policysim/toxicity.hpp"

namespace policysim {

struct RoundMetrics {
  int round = 0;
  double stance_mean = 0.0;
  double stance_std = 0.0;
  double mean_toxicity = 0.0;
  double cross_interaction_ratio = 0.0;
  double misinformation_ratio = 0.0;
  std::array<std::int64_t, kActionKindCount> action_counts{};

  bool operator==(const RoundMetrics&) const = default;
};

nlohmann::json to_json(const RoundMetrics& m);
RoundMetrics metrics_from_json(const nlohmann::json& j);
/// Header plus one row per round.
std::string metrics_csv(const std::vector<RoundMetrics>& rows);

struct ReactionRecord {
  std::int64_t seq = 0;
  int round = 0;
  UserId receiver;
  std::optional<UserId> sender;
  std::optional<PostId> post;
  ActionKind kind = ActionKind::kDoNothing;
  double toxicity = 0.0;
  int sender_sign = 0;    // smoothed-stance signs when the reaction happened
  int receiver_sign = 0;
};

/// Everything that can be rebuilt from the event log alone: graph, posts
/// with engagement, stance traces, misinformation tracking, exposure table,
/// the current round's reactions and per-round metrics. The live run feeds
/// it the same events it writes, so replay matches by construction; replay
/// additionally cross-checks recorded stance and metric values.
class World {
 public:
  World() = default;
  World(std::vector<UserId> agents, double alpha, int misinfo_window, double exposure_default);
  /// Builds an empty world from a log header.
  static World from_header(const nlohmann::json& header);

  /// Throws kCorruptLog on a sequence gap or inconsistent payload.
  void apply(const EventRecord& record);

  [[nodiscard]] const SocialGraph& graph() const noexcept { return graph_; }
  [[nodiscard]] const std::vector<UserId>& agents() const noexcept { return agents_; }
  [[nodiscard]] const std::vector<Post>& posts() const noexcept { return posts_; }
  [[nodiscard]] const Post* find_post(PostId id) const;
  Post* find_post(PostId id);
  [[nodiscard]] PostId next_post_id() const noexcept { return static_cast<PostId>(posts_.size()) + 1; }

  [[nodiscard]] const StanceTrace& stance(const UserId& user) const;
  [[nodiscard]] double smoothed(const UserId& user) const { return stance(user).smoothed(); }
  [[nodiscard]] std::vector<double> smoothed_vector() const;

  /// Adopted (liked, retweeted or seeded) a misinformation post within the
  /// last `window` rounds and has not adopted a corrective post since.
  [[nodiscard]] bool misinformed(const UserId& user, int round) const;
  [[nodiscard]] double misinformation_ratio(int round) const;

  [[nodiscard]] const ExposureTable& exposure() const noexcept { return exposure_; }
  [[nodiscard]] const std::vector<ReactionRecord>& round_reactions() const noexcept { return reactions_; }

  [[nodiscard]] RoundMetrics compute_metrics(int round) const;
  [[nodiscard]] const std::vector<RoundMetrics>& metrics() const noexcept { return metrics_; }

  [[nodiscard]] std::int64_t last_seq() const noexcept { return last_seq_; }
  [[nodiscard]] int current_round() const noexcept { return round_; }
  [[nodiscard]] std::optional<int> last_complete_round() const noexcept { return complete_; }
  [[nodiscard]] const std::set<std::int64_t>& open_recommendations() const noexcept { return open_recs_; }

 private:
  struct MisState {
    std::optional<int> adopted_round;
    std::int64_t adopted_seq = -1;
    std::int64_t corrected_seq = -1;
  };

  void adopt(const UserId& user, const Post& post, int round, std::int64_t seq);

  std::vector<UserId> agents_;
  double alpha_ = 0.8;
  int window_ = 3;
  SocialGraph graph_;
  std::vector<Post> posts_;
  std::map<UserId, StanceTrace> stances_;
  std::map<UserId, MisState> mis_;
  ExposureTable exposure_;
  std::vector<ReactionRecord> reactions_;
  std::vector<RoundMetrics> metrics_;
  std::set<std::int64_t> open_recs_;
  std::int64_t last_seq_ = -1;
  int round_ = -1;
  std::optional<int> complete_;
};

struct ReplayResult {
  World world;
  std::vector<RoundMetrics> metrics;
  int rounds_replayed = 0;
};

/// Rebuilds state from a log without any backend. Events after the last
/// completed round are ignored.
ReplayResult replay(const EventLog& log);

struct AgentRuntime {
  Agent agent;
  MemoryPool memory;
  std::vector<Action> last_actions;
};

struct PendingArm {
  Arm arm;
  std::int64_t seq = 0;  // recommendation event
  /// Misinformed flags at selection time of the users that score the arm:
  /// the receiver of a recommendation, or the followers of an exposure
  /// arm's author (the author alone when nobody follows them).
  std::map<UserId, int> mis_prev;
  UserId sender;  // author of the recommended post
};

/// Optional overrides for the backends a config would otherwise build.
struct Components {
  std::unique_ptr<DecisionBackend> backend;
  std::unique_ptr<EmbeddingProvider> embedder;
  std::unique_ptr<ToxicityScorer> toxicity;
};

/// Round loop. Construction builds the population and writes the
/// initialization events (round -1); each step() runs one round.
class Simulation {
 public:
  explicit Simulation(RunConfig config, Components components = {});

  /// Runs the next round. A backend outage propagates as BackendUnavailable
  /// and leaves the state at the last completed round (a checkpoint is
  /// written first when a checkpoint directory is configured).
  void step();
  void run();

  [[nodiscard]] bool finished() const noexcept { return next_round_ >= config_.rounds; }
  [[nodiscard]] int next_round() const noexcept { return next_round_; }
  [[nodiscard]] const RunConfig& config() const noexcept { return config_; }
  [[nodiscard]] const World& world() const noexcept { return world_; }
  [[nodiscard]] const EventLog& log() const noexcept { return log_; }
  [[nodiscard]] const std::vector<RoundMetrics>& metrics() const noexcept { return world_.metrics(); }
  [[nodiscard]] const std::vector<AgentRuntime>& agents() const noexcept { return agents_; }
  [[nodiscard]] const std::optional<NeuralBandit>& bandit() const noexcept { return bandit_; }
  [[nodiscard]] const std::vector<PendingArm>& pending_arms() const noexcept { return pending_; }

  /// State that the log does not carry: agent parameters, profiles and
  /// memories, bandit nets, pending arms.
  [[nodiscard]] nlohmann::json snapshot() const;
  /// Writes snapshot.json and events.jsonl into `dir`.
  void write_checkpoint(const std::filesystem::path& dir) const;
  /// Continues a run from a snapshot and its log. Log records beyond the
  /// snapshot are discarded and regenerated.
  static Simulation resume(const nlohmann::json& snapshot, const EventLog& log, Components components = {});
  static Simulation resume(const std::filesystem::path& dir, Components components = {});

 private:
  struct Resume {};
  Simulation(Resume, RunConfig config, Components components);

  void build_components(Components components);
  void initialize();
  std::int64_t emit(int round, EventKind kind, nlohmann::json payload);
  void embed_new_posts(std::size_t from);
  Matrix context_matrix() const;
  struct FeedItem {
    const Post* post = nullptr;
    std::string_view channel;
  };
  std::vector<FeedItem> feed_for(std::size_t agent, int round, const Matrix& contexts) const;
  std::string memory_digest(const AgentRuntime& a, std::span<const double> query, int round, std::uint64_t seed) const;
  void select_arms(int round);
  void settle_rewards(int round);
  void update_memories_and_stances(int round, const std::vector<std::vector<PostId>>& consumed,
                                   const std::vector<std::string>& news);
  void emit_seed_posts(int round, bool corrective);
  void restore_state(const nlohmann::json& snapshot);
  [[nodiscard]] int last_discrete(const UserId& user) const;

  RunConfig config_;
  std::unique_ptr<DecisionBackend> backend_;
  std::unique_ptr<EmbeddingProvider> embedder_;
  std::unique_ptr<ToxicityScorer> toxicity_;
  std::vector<AgentRuntime> agents_;  // node order
  World world_;
  EventLog log_;
  std::optional<NeuralBandit> bandit_;
  std::vector<PendingArm> pending_;
  std::set<PostId> recommended_;
  std::set<UserId> exposure_overrides_;
  std::vector<Embedding> profile_embeddings_;
  int next_round_ = 0;
  bool broken_ = false;  // a step failed after emitting events
};

}  // namespace policysim
