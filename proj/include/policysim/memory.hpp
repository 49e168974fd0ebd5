#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "policysim/agent.hpp"
#include "policysim/backend.hpp"
#include "policysim/embedding.hpp"

namespace policysim {

enum class MemoryKind { kShort, kLong };

struct MemoryEntry {
  std::string content;
  Embedding embedding;  // unit norm
  int round = 0;
  MemoryKind kind = MemoryKind::kShort;

  bool operator==(const MemoryEntry&) const = default;
};

struct MemoryConfig {
  std::size_t capacity = 256;
  std::size_t bypass_chars = 120;  // shorter content is stored verbatim
  std::size_t fallback_tokens = 32;
  std::size_t long_term_chars = 280;
  std::size_t sample_count = 5;
};

/// Bounded pool in insertion order. When full, the oldest short-term entry
/// is evicted; long-term entries go only once no short-term entry is left.
class MemoryPool {
 public:
  explicit MemoryPool(std::size_t capacity = 256);

  void insert(MemoryEntry entry);

  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] const std::deque<MemoryEntry>& entries() const noexcept { return entries_; }
  [[nodiscard]] const MemoryEntry& operator[](std::size_t i) const { return entries_[i]; }
  [[nodiscard]] const MemoryEntry* latest() const { return entries_.empty() ? nullptr : &entries_.back(); }

 private:
  std::size_t capacity_;
  std::deque<MemoryEntry> entries_;
};

nlohmann::json to_json(const MemoryPool& pool);
MemoryPool pool_from_json(const nlohmann::json& j);

struct MemoryWrite {
  MemoryEntry entry;
  bool fallback = false;  // backend failed; deterministic path used
  bool backend_called = false;
};

/// Short-term encoding. Content under the bypass threshold is stored as is;
/// longer content goes through the backend, or is cut to the first
/// `fallback_tokens` whitespace tokens when the backend has no generative
/// path or fails.
MemoryWrite encode_short_term(const std::string& content, const AgentProfile& profile, const MemoryEntry* previous,
                              DecisionBackend& backend, EmbeddingProvider& embedder, int round,
                              const MemoryConfig& config = {});

/// Retrieval probabilities proportional to exp(-lambda * (now - round)) *
/// max(0, cos(query, entry)). Uniform when every term is zero.
std::vector<double> retrieval_weights(std::span<const double> query, const MemoryPool& pool, double lambda, int now);

/// Indices of n draws without replacement, renormalizing after each draw.
/// When n covers the pool, every index is returned by descending weight.
std::vector<std::size_t> sample_memory_indices(std::span<const double> weights, std::size_t n, std::uint64_t seed);

std::vector<MemoryEntry> sample_memories(const MemoryPool& pool, std::span<const double> weights, std::size_t n,
                                         std::uint64_t seed);

/// Long-term consolidation of `content` with sampled memories; the entry is
/// inserted into `pool` and returned.
MemoryWrite consolidate_long_term(const std::string& content, const AgentProfile& profile,
                                  std::span<const MemoryEntry> samples, DecisionBackend& backend,
                                  EmbeddingProvider& embedder, int round, MemoryPool& pool,
                                  const MemoryConfig& config = {});

/// Cuts at a byte limit without splitting a UTF-8 sequence.
std::string truncate_utf8(const std::string& text, std::size_t max_bytes);

}  // namespace policysim
