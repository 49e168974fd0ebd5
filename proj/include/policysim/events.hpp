#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace policysim {

enum class EventKind {
  kPost,
  kReaction,
  kFollow,
  kUnfollow,
  kRecommendation,
  kExposureChange,
  kReward,
  kStanceUpdate,
  kNewsInjection,
  kMetric,
};

std::string_view to_string(EventKind kind) noexcept;
std::optional<EventKind> parse_event_kind(std::string_view label) noexcept;

inline constexpr std::string_view kLogSchema = "policysim.events";
inline constexpr int kLogVersion = 1;

struct EventRecord {
  std::int64_t seq = 0;
  int round = 0;
  EventKind kind = EventKind::kMetric;
  nlohmann::json payload;

  bool operator==(const EventRecord&) const = default;
};

nlohmann::json to_json(const EventRecord& record);
EventRecord record_from_json(const nlohmann::json& j);

/// Append-only JSONL log: a header line, then one record per line with
/// sequence numbers 0, 1, 2, ... Keys are written sorted and doubles with
/// round-trip precision, so equal logs are byte-identical.
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(nlohmann::json header) : header_(std::move(header)) {}
  EventLog(const EventLog& other);
  EventLog& operator=(const EventLog& other);

  /// Thread-safe. Returns the assigned sequence number.
  std::int64_t append(int round, EventKind kind, nlohmann::json payload);

  [[nodiscard]] const nlohmann::json& header() const noexcept { return header_; }
  void set_header(nlohmann::json header) { header_ = std::move(header); }
  [[nodiscard]] const std::vector<EventRecord>& records() const noexcept { return records_; }
  [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
  [[nodiscard]] std::int64_t next_seq() const noexcept { return static_cast<std::int64_t>(records_.size()); }

  /// Drops every record with seq >= `seq`.
  void truncate(std::int64_t seq);

  [[nodiscard]] std::string serialize() const;
  void write(const std::filesystem::path& path) const;

  /// Parses a serialized log. A final line without a trailing newline that
  /// fails to parse is treated as a torn write and dropped. Throws
  /// kCorruptLog on a bad header, malformed records or a sequence gap.
  static EventLog parse(std::string_view text);
  static EventLog read(const std::filesystem::path& path);

 private:
  nlohmann::json header_ = nlohmann::json::object();
  std::vector<EventRecord> records_;
  mutable std::mutex mu_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace policysim
