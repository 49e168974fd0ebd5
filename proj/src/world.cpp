#include "policysim/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "policysim/error.hpp"

namespace policysim {

namespace {

[[noreturn]] void corrupt(const EventRecord& r, const std::string& what) {
  throw Error(ErrorCode::kCorruptLog, "event " + std::to_string(r.seq) + " (" + std::string(to_string(r.kind)) +
                                          "): " + what);
}

std::optional<UserId> opt_user(const nlohmann::json& p, const char* key) {
  auto it = p.find(key);
  if (it == p.end() || it->is_null()) return std::nullopt;
  return it->get<std::string>();
}

std::optional<PostId> opt_post(const nlohmann::json& p, const char* key) {
  auto it = p.find(key);
  if (it == p.end() || it->is_null()) return std::nullopt;
  return it->get<PostId>();
}

}  // namespace

nlohmann::json to_json(const RoundMetrics& m) {
  nlohmann::json counts = nlohmann::json::object();
  for (std::size_t k = 0; k < kActionKindCount; ++k) {
    counts[std::string(to_string(static_cast<ActionKind>(k)))] = m.action_counts[k];
  }
  return {{"round", m.round},
          {"stance_mean", m.stance_mean},
          {"stance_std", m.stance_std},
          {"mean_toxicity", m.mean_toxicity},
          {"cross_interaction_ratio", m.cross_interaction_ratio},
          {"misinformation_ratio", m.misinformation_ratio},
          {"action_counts", counts}};
}

RoundMetrics metrics_from_json(const nlohmann::json& j) {
  RoundMetrics m;
  m.round = j.at("round").get<int>();
  m.stance_mean = j.at("stance_mean").get<double>();
  m.stance_std = j.at("stance_std").get<double>();
  m.mean_toxicity = j.at("mean_toxicity").get<double>();
  m.cross_interaction_ratio = j.at("cross_interaction_ratio").get<double>();
  m.misinformation_ratio = j.at("misinformation_ratio").get<double>();
  for (const auto& [label, v] : j.at("action_counts").items()) {
    auto kind = parse_action_kind(label);
    if (!kind) throw Error(ErrorCode::kParse, "unknown action in metrics: " + label);
    m.action_counts[static_cast<std::size_t>(*kind)] = v.get<std::int64_t>();
  }
  return m;
}

std::string metrics_csv(const std::vector<RoundMetrics>& rows) {
  std::ostringstream out;
  out.precision(17);
  out << "round,stance_mean,stance_std,mean_toxicity,cross_interaction_ratio,misinformation_ratio";
  for (std::size_t k = 0; k < kActionKindCount; ++k) out << ",count_" << to_string(static_cast<ActionKind>(k));
  out << "\n";
  for (const auto& m : rows) {
    out << m.round << ',' << m.stance_mean << ',' << m.stance_std << ',' << m.mean_toxicity << ','
        << m.cross_interaction_ratio << ',' << m.misinformation_ratio;
    for (auto c : m.action_counts) out << ',' << c;
    out << "\n";
  }
  return out.str();
}

World::World(std::vector<UserId> agents, double alpha, int misinfo_window, double exposure_default)
    : alpha_(alpha), window_(misinfo_window), graph_(agents), exposure_(exposure_default) {
  agents_.assign(graph_.nodes().begin(), graph_.nodes().end());
  for (const auto& a : agents_) stances_.emplace(a, StanceTrace(alpha_));
}

World World::from_header(const nlohmann::json& header) {
  try {
    const auto& cfg = header.at("config");
    return World(header.at("agents").get<std::vector<UserId>>(), cfg.at("alpha").get<double>(),
                 cfg.at("misinfo").at("window").get<int>(), cfg.at("exposure").at("default").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptLog, std::string("log header lacks run settings: ") + e.what());
  }
}

const Post* World::find_post(PostId id) const {
  if (id < 1 || id > static_cast<PostId>(posts_.size())) return nullptr;
  return &posts_[static_cast<std::size_t>(id - 1)];
}

Post* World::find_post(PostId id) {
  return const_cast<Post*>(static_cast<const World&>(*this).find_post(id));
}

const StanceTrace& World::stance(const UserId& user) const {
  auto it = stances_.find(user);
  if (it == stances_.end()) throw Error(ErrorCode::kUnknownId, "unknown agent " + user);
  return it->second;
}

std::vector<double> World::smoothed_vector() const {
  std::vector<double> out;
  for (const auto& a : agents_) out.push_back(stances_.at(a).smoothed());
  return out;
}

bool World::misinformed(const UserId& user, int round) const {
  auto it = mis_.find(user);
  if (it == mis_.end() || !it->second.adopted_round) return false;
  const auto& s = it->second;
  return round - *s.adopted_round < window_ && s.corrected_seq < s.adopted_seq;
}

double World::misinformation_ratio(int round) const {
  if (agents_.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& a : agents_) n += misinformed(a, round) ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(agents_.size());
}

void World::adopt(const UserId& user, const Post& post, int round, std::int64_t seq) {
  if (post.misinfo) {
    auto& s = mis_[user];
    s.adopted_round = round;
    s.adopted_seq = seq;
  } else if (post.corrective) {
    mis_[user].corrected_seq = seq;
  }
}

RoundMetrics World::compute_metrics(int round) const {
  RoundMetrics m;
  m.round = round;
  const auto s = smoothed_vector();
  if (!s.empty()) {
    double sum = 0.0;
    for (double v : s) sum += v;
    m.stance_mean = sum / static_cast<double>(s.size());
    double var = 0.0;
    for (double v : s) var += (v - m.stance_mean) * (v - m.stance_mean);
    m.stance_std = std::sqrt(var / static_cast<double>(s.size()));
  }
  double tox = 0.0;
  std::size_t active = 0, interactions = 0, cross = 0;
  for (const auto& r : reactions_) {
    if (r.round != round) continue;
    ++m.action_counts[static_cast<std::size_t>(r.kind)];
    if (r.kind == ActionKind::kDoNothing) continue;
    ++active;
    tox += r.toxicity;
    if (!r.sender) continue;
    ++interactions;
    if (r.sender_sign * r.receiver_sign == -1) ++cross;
  }
  m.mean_toxicity = active ? tox / static_cast<double>(active) : 0.0;
  m.cross_interaction_ratio = interactions ? static_cast<double>(cross) / static_cast<double>(interactions) : 0.0;
  m.misinformation_ratio = misinformation_ratio(round);
  return m;
}

void World::apply(const EventRecord& r) {
  if (r.seq != last_seq_ + 1) {
    throw Error(ErrorCode::kCorruptLog, "sequence gap: expected seq " + std::to_string(last_seq_ + 1) + ", found " +
                                            std::to_string(r.seq));
  }
  if (r.round < round_) corrupt(r, "round went backwards");
  if (r.round != round_) {
    reactions_.clear();
    round_ = r.round;
  }
  const auto& p = r.payload;
  try {
    switch (r.kind) {
      case EventKind::kPost: {
        Post post;
        post.post_id = p.at("post_id").get<PostId>();
        if (post.post_id != next_post_id()) corrupt(r, "post ids must be consecutive");
        post.author = p.at("author").get<std::string>();
        (void)graph_.require_index(post.author);
        post.content = p.at("content").get<std::string>();
        post.round = r.round;
        post.stance_tag = p.at("stance_tag").get<int>();
        post.misinfo = p.at("misinfo").get<bool>();
        post.corrective = p.at("corrective").get<bool>();
        if (post.misinfo && post.corrective) corrupt(r, "post cannot be both misinformation and corrective");
        posts_.push_back(post);
        const auto source = p.value("source", "");
        if (source == "seed" || source == "correction") adopt(post.author, posts_.back(), r.round, r.seq);
        break;
      }
      case EventKind::kReaction: {
        ReactionRecord rec;
        rec.seq = r.seq;
        rec.round = r.round;
        rec.receiver = p.at("receiver").get<std::string>();
        rec.sender = opt_user(p, "sender");
        rec.post = opt_post(p, "post");
        auto kind = parse_action_kind(p.at("action").get<std::string>());
        if (!kind) corrupt(r, "unknown action");
        rec.kind = *kind;
        rec.toxicity = p.at("toxicity").get<double>();
        rec.receiver_sign = stance_sign(stance(rec.receiver).smoothed());
        if (rec.sender) rec.sender_sign = stance_sign(stance(*rec.sender).smoothed());
        if (rec.post) {
          Post* target = find_post(*rec.post);
          if (!target) corrupt(r, "reaction to unknown post");
          if (target->round >= r.round) corrupt(r, "reaction to a post from the same round");
          switch (rec.kind) {
            case ActionKind::kLike:
              ++target->engagement.likes;
              adopt(rec.receiver, *target, r.round, r.seq);
              break;
            case ActionKind::kRetweet:
              ++target->engagement.retweets;
              adopt(rec.receiver, *target, r.round, r.seq);
              break;
            case ActionKind::kReply:
              ++target->engagement.replies;
              break;
            default:
              break;
          }
        }
        reactions_.push_back(std::move(rec));
        break;
      }
      case EventKind::kFollow:
      case EventKind::kUnfollow: {
        const auto actor = p.at("actor").get<std::string>();
        const auto target = p.at("target").get<std::string>();
        const auto kind = r.kind == EventKind::kFollow ? RelationKind::kFollow : RelationKind::kUnfollow;
        if (!graph_.apply(actor, target, kind, r.round)) corrupt(r, "relationship event changed nothing");
        break;
      }
      case EventKind::kRecommendation:
        open_recs_.insert(r.seq);
        break;
      case EventKind::kReward: {
        const auto ref = p.at("recommendation_seq").get<std::int64_t>();
        if (open_recs_.erase(ref) != 1) corrupt(r, "reward without a matching open recommendation");
        break;
      }
      case EventKind::kExposureChange:
        exposure_.set(p.at("author").get<std::string>(), p.at("level").get<double>());
        break;
      case EventKind::kStanceUpdate: {
        auto it = stances_.find(p.at("user").get<std::string>());
        if (it == stances_.end()) corrupt(r, "stance for unknown agent");
        const int d = p.at("discrete").get<int>();
        if (d < -1 || d > 1) corrupt(r, "discrete stance out of range");
        it->second.observe(d);
        if (it->second.smoothed() != p.at("smoothed").get<double>()) corrupt(r, "smoothed stance does not match");
        break;
      }
      case EventKind::kNewsInjection:
        break;
      case EventKind::kMetric: {
        const RoundMetrics m = compute_metrics(r.round);
        if (m != metrics_from_json(p)) corrupt(r, "recorded metrics differ from recomputed ones");
        metrics_.push_back(m);
        complete_ = r.round;
        break;
      }
    }
  } catch (const nlohmann::json::exception& e) {
    corrupt(r, std::string("malformed payload: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kCorruptLog) throw;
    corrupt(r, e.what());
  }
  last_seq_ = r.seq;
}

ReplayResult replay(const EventLog& log) {
  ReplayResult out{World::from_header(log.header()), {}, 0};
  std::optional<int> last_complete;
  for (const auto& r : log.records()) {
    if (r.kind == EventKind::kMetric) last_complete = r.round;
  }
  const int limit = last_complete.value_or(-1);
  for (const auto& r : log.records()) {
    if (r.round > limit) break;
    out.world.apply(r);
  }
  out.metrics = out.world.metrics();
  out.rounds_replayed = static_cast<int>(out.metrics.size());
  return out;
}

}  // namespace policysim
