#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "policysim/backend.hpp"
#include "policysim/bandit.hpp"
#include "policysim/intervention.hpp"
#include "policysim/memory.hpp"

namespace policysim {

enum class Objective { kNone, kCrossView, kMisinfo };
std::string_view to_string(Objective o) noexcept;

struct NewsItem {
  int round = 0;
  std::string text;
  int stance = 0;
};

struct MisinfoConfig {
  double fraction = 0.0;  // of agents that author the flagged post at round 0
  std::string text = "Leaked memo proves the legislation was secretly rewritten overnight, share before it is deleted";
  int stance = -1;
  int window = 3;  // rounds an adoption keeps a user misinformed
  // Optional correction wave.
  int corrective_round = -1;
  double corrective_fraction = 0.0;
  std::string corrective_text = "Fact check: the memo about the legislation is fabricated, the text was never changed";
};

/// Generated scripted population (used when meta_dir is empty). Latent
/// stances are drawn uniformly from stance_range, the other parameters from
/// their ranges; a `confrontational_fraction` of agents instead draws
/// toxicity from confrontational_toxicity.
struct PopulationConfig {
  std::string meta_dir;
  std::size_t agents = 50;
  double follow_probability = 0.1;
  std::pair<double, double> stance_range{-1.0, 1.0};
  std::pair<double, double> activity_range{0.5, 0.9};
  std::pair<double, double> homophily_range{0.2, 0.9};
  std::pair<double, double> toxicity_range{0.0, 0.2};
  std::pair<double, double> adoption_range{0.2, 0.8};
  double confrontational_fraction = 0.1;
  std::pair<double, double> confrontational_toxicity{0.6, 0.9};
};

struct BanditSection {
  ArmKind kind = ArmKind::kRecommend;
  CandidateSizes sizes;
  std::size_t budget = 16;
  BanditConfig net;
  EngagementTable engagement = default_engagement_table();
};

enum class BackendMode { kScripted, kLlm };

struct BackendSection {
  BackendMode mode = BackendMode::kScripted;
  std::string url;
  std::string model = "default";
  double temperature = 0.9;
  int max_tokens = 512;
  int timeout_seconds = 30;
  int retries = 2;
  std::string api_key_env;  // name of the environment variable holding the key
  std::string template_dir;  // empty: templates shipped with the build
};

struct EmbeddingSection {
  bool remote = false;
  std::size_t dimension = 64;
  std::string url;
  std::string model = "default";
};

struct ToxicitySection {
  bool remote = false;
  std::string url;
};

struct RunConfig {
  std::uint64_t seed = 1;
  int rounds = 10;
  std::string topic = "the legislation";
  double alpha = 0.8;
  double lambda = 1.0;
  double gamma = 0.5;
  int hops = 1;
  double mu = 4.0;
  FeedConfig feed;
  double exposure_default = 1.0;
  Objective objective = Objective::kNone;
  BanditSection bandit;
  BackendSection backend;
  EmbeddingSection embedding;
  ToxicitySection toxicity;
  std::vector<NewsItem> news;
  MisinfoConfig misinfo;
  PopulationConfig population;
  MemoryConfig memory;
  ScriptedModel scripted;
  std::size_t max_concurrency = 8;
  int checkpoint_every = 10;
  std::string checkpoint_dir;  // empty: no checkpoints

  /// Throws kConfig naming the offending field.
  void validate() const;
};

/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace policysim
