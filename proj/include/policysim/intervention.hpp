#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "policysim/agent.hpp"
#include "policysim/embedding.hpp"
#include "policysim/graph.hpp"

namespace policysim {

struct Engagement {
  std::int64_t likes = 0;
  std::int64_t retweets = 0;
  std::int64_t replies = 0;

  [[nodiscard]] std::int64_t score() const noexcept { return likes + retweets + replies; }
  bool operator==(const Engagement&) const = default;
};

struct Post {
  PostId post_id = 0;
  UserId author;
  std::string content;
  int round = 0;
  int stance_tag = 0;
  bool misinfo = false;
  bool corrective = false;
  Engagement engagement;
  Embedding embedding;
};

struct FeedConfig {
  int quota_relational = 2;
  int quota_personalized = 2;
  int quota_headline = 1;
  int headline_window = 3;

  [[nodiscard]] int total() const noexcept { return quota_relational + quota_personalized + quota_headline; }
  void validate() const;
};

/// Per-author probability that one delivery of their post passes filtering.
class ExposureTable {
 public:
  explicit ExposureTable(double default_probability = 1.0);

  [[nodiscard]] double get(const UserId& author) const;
  void set(const UserId& author, double probability);
  [[nodiscard]] double default_probability() const noexcept { return default_; }
  [[nodiscard]] const std::map<UserId, double>& overrides() const noexcept { return table_; }

 private:
  double default_;
  std::map<UserId, double> table_;
};

/// Posts created in round `now - 1` by accounts `user` follows, newest first.
std::vector<const Post*> relational_feed(const SocialGraph& graph, std::span<const Post> posts, const UserId& user,
                                         int now, int quota);

/// Top `quota` candidates by cosine to the user context (compared at 1e-12
/// resolution); ties by post id.
std::vector<const Post*> personalized_feed(std::span<const double> user_context,
                                           std::span<const Post* const> candidates, int quota);

/// Top `quota` posts of rounds [now - window, now - 1] by likes + retweets +
/// replies; ties by newer round, then lower post id.
std::vector<const Post*> headline_feed(std::span<const Post> posts, int now, int window, int quota);

/// Seeded Bernoulli(exposure(author)) draw for one delivery.
bool exposure_filter(const Post& post, const ExposureTable& table, std::uint64_t run_seed, int round,
                     const UserId& receiver);

struct ChannelOutput {
  std::vector<const Post*> relational;
  std::vector<const Post*> personalized;
  std::vector<const Post*> headline;
};

/// Relational, then personalized, then headline; first occurrence of each
/// post wins and the result is capped at the total quota.
std::vector<const Post*> compose_feed(const ChannelOutput& channels, const FeedConfig& config);

}  // namespace policysim
