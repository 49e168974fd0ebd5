#include "policysim/events.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "policysim/error.hpp"

namespace policysim {

namespace {

constexpr std::array<std::string_view, 10> kKindNames = {
    "post",     "reaction",      "follow",       "unfollow",       "recommendation",
    "exposure_change", "reward", "stance_update", "news_injection", "metric"};

}  // namespace

std::string_view to_string(EventKind kind) noexcept { return kKindNames[static_cast<std::size_t>(kind)]; }

std::optional<EventKind> parse_event_kind(std::string_view label) noexcept {
  for (std::size_t i = 0; i < kKindNames.size(); ++i) {
    if (kKindNames[i] == label) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

nlohmann::json to_json(const EventRecord& r) {
  return {{"seq", r.seq}, {"round", r.round}, {"kind", to_string(r.kind)}, {"payload", r.payload}};
}

EventRecord record_from_json(const nlohmann::json& j) {
  EventRecord r;
  try {
    r.seq = j.at("seq").get<std::int64_t>();
    r.round = j.at("round").get<int>();
    auto kind = parse_event_kind(j.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::kCorruptLog, "unknown event kind " + j.at("kind").dump());
    r.kind = *kind;
    r.payload = j.at("payload");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptLog, std::string("malformed event record: ") + e.what());
  }
  return r;
}

EventLog::EventLog(const EventLog& other) {
  std::lock_guard lock(other.mu_);
  header_ = other.header_;
  records_ = other.records_;
}

EventLog& EventLog::operator=(const EventLog& other) {
  if (this == &other) return *this;
  std::scoped_lock lock(mu_, other.mu_);
  header_ = other.header_;
  records_ = other.records_;
  return *this;
}

std::int64_t EventLog::append(int round, EventKind kind, nlohmann::json payload) {
  std::lock_guard lock(mu_);
  const auto seq = static_cast<std::int64_t>(records_.size());
  records_.push_back(EventRecord{seq, round, kind, std::move(payload)});
  return seq;
}

void EventLog::truncate(std::int64_t seq) {
  std::lock_guard lock(mu_);
  if (seq < 0) seq = 0;
  if (static_cast<std::size_t>(seq) < records_.size()) records_.resize(static_cast<std::size_t>(seq));
}

std::string EventLog::serialize() const {
  std::lock_guard lock(mu_);
  std::string out;
  nlohmann::json head = header_;
  head["schema"] = kLogSchema;
  head["version"] = kLogVersion;
  out += head.dump();
  out += '\n';
  for (const auto& r : records_) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

void EventLog::write(const std::filesystem::path& path) const { write_file(path, serialize()); }

EventLog EventLog::parse(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    if (end > start) lines.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  if (lines.empty()) throw Error(ErrorCode::kCorruptLog, "event log is empty");
  const bool torn_tail = text.back() != '\n';

  auto header = nlohmann::json::parse(lines.front(), nullptr, false);
  if (header.is_discarded() || !header.is_object() || header.value("schema", "") != kLogSchema) {
    throw Error(ErrorCode::kCorruptLog, "missing or invalid event log header");
  }
  if (header.value("version", 0) != kLogVersion) {
    throw Error(ErrorCode::kCorruptLog, "unsupported event log version " + header["version"].dump());
  }
  EventLog log(header);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto j = nlohmann::json::parse(lines[i], nullptr, false);
    if (j.is_discarded()) {
      if (i + 1 == lines.size() && torn_tail) break;
      throw Error(ErrorCode::kCorruptLog, "unparseable event on line " + std::to_string(i + 1));
    }
    EventRecord r = record_from_json(j);
    const std::int64_t expected = log.next_seq();
    if (r.seq != expected) {
      throw Error(ErrorCode::kCorruptLog, "sequence gap: expected seq " + std::to_string(expected) + ", found " +
                                              std::to_string(r.seq));
    }
    log.records_.push_back(std::move(r));
  }
  return log;
}

EventLog EventLog::read(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

}  // namespace policysim
