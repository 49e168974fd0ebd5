#include "policysim/intervention.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "policysim/error.hpp"
#include "policysim/matrix.hpp"
#include "policysim/rng.hpp"

namespace policysim {

void FeedConfig::validate() const {
  if (quota_relational < 0 || quota_personalized < 0 || quota_headline < 0) {
    throw Error(ErrorCode::kConfig, "feed quotas must be non-negative");
  }
  if (total() < 1) throw Error(ErrorCode::kConfig, "total feed quota must be at least 1");
  if (headline_window < 1) throw Error(ErrorCode::kConfig, "headline window must be at least 1");
}

ExposureTable::ExposureTable(double default_probability) : default_(default_probability) {
  if (!(default_ >= 0.0 && default_ <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "exposure must lie in [0,1]");
}

double ExposureTable::get(const UserId& author) const {
  auto it = table_.find(author);
  return it == table_.end() ? default_ : it->second;
}

void ExposureTable::set(const UserId& author, double probability) {
  if (!(probability >= 0.0 && probability <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "exposure must lie in [0,1]");
  }
  table_[author] = probability;
}

std::vector<const Post*> relational_feed(const SocialGraph& graph, std::span<const Post> posts, const UserId& user,
                                         int now, int quota) {
  std::vector<const Post*> out;
  if (quota <= 0) return out;
  const std::size_t me = graph.require_index(user);
  const auto& followees = graph.followees(me);
  if (followees.empty()) return out;
  for (const auto& p : posts) {
    if (p.round != now - 1) continue;
    auto author = graph.index_of(p.author);
    if (author && std::binary_search(followees.begin(), followees.end(), *author)) out.push_back(&p);
  }
  std::sort(out.begin(), out.end(), [](const Post* a, const Post* b) { return a->post_id > b->post_id; });
  if (out.size() > static_cast<std::size_t>(quota)) out.resize(static_cast<std::size_t>(quota));
  return out;
}

std::vector<const Post*> personalized_feed(std::span<const double> user_context,
                                           std::span<const Post* const> candidates, int quota) {
  if (quota <= 0) return {};
  std::vector<std::pair<double, const Post*>> scored;
  scored.reserve(candidates.size());
  // Cosines are snapped to a 1e-12 grid so that values equal up to summation
  // order tie and fall through to the post id.
  for (const Post* p : candidates) {
    scored.emplace_back(std::round(cosine(user_context, p->embedding) * 1e12), p);
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->post_id < b.second->post_id;
  });
  std::vector<const Post*> out;
  for (std::size_t i = 0; i < scored.size() && i < static_cast<std::size_t>(quota); ++i) out.push_back(scored[i].second);
  return out;
}

std::vector<const Post*> headline_feed(std::span<const Post> posts, int now, int window, int quota) {
  if (window < 1) throw Error(ErrorCode::kInvalidArgument, "headline window must be at least 1");
  std::vector<const Post*> pool;
  if (quota <= 0) return pool;
  for (const auto& p : posts) {
    if (p.round >= now - window && p.round <= now - 1) pool.push_back(&p);
  }
  std::sort(pool.begin(), pool.end(), [](const Post* a, const Post* b) {
    if (a->engagement.score() != b->engagement.score()) return a->engagement.score() > b->engagement.score();
    if (a->round != b->round) return a->round > b->round;
    return a->post_id < b->post_id;
  });
  if (pool.size() > static_cast<std::size_t>(quota)) pool.resize(static_cast<std::size_t>(quota));
  return pool;
}

bool exposure_filter(const Post& post, const ExposureTable& table, std::uint64_t run_seed, int round,
                     const UserId& receiver) {
  const double p = table.get(post.author);
  if (p >= 1.0) return true;
  if (p <= 0.0) return false;
  Rng rng(mix_seed({run_seed, 0x6578706fULL, static_cast<std::uint64_t>(round),
                    static_cast<std::uint64_t>(post.post_id), fnv1a(receiver)}));
  return rng.uniform() < p;
}

std::vector<const Post*> compose_feed(const ChannelOutput& channels, const FeedConfig& config) {
  std::vector<const Post*> out;
  std::set<PostId> seen;
  const auto cap = static_cast<std::size_t>(config.total());
  for (const auto* channel : {&channels.relational, &channels.personalized, &channels.headline}) {
    for (const Post* p : *channel) {
      if (out.size() >= cap) return out;
      if (seen.insert(p->post_id).second) out.push_back(p);
    }
  }
  return out;
}

}  // namespace policysim
