#include "policysim/memory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "policysim/error.hpp"
#include "policysim/matrix.hpp"
#include "policysim/rng.hpp"

namespace policysim {

MemoryPool::MemoryPool(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error(ErrorCode::kConfig, "memory capacity must be positive");
}

void MemoryPool::insert(MemoryEntry entry) {
  if (entries_.size() >= capacity_) {
    auto victim = std::find_if(entries_.begin(), entries_.end(),
                               [](const MemoryEntry& e) { return e.kind == MemoryKind::kShort; });
    if (victim == entries_.end()) victim = entries_.begin();
    entries_.erase(victim);
  }
  entries_.push_back(std::move(entry));
}

nlohmann::json to_json(const MemoryPool& pool) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : pool.entries()) {
    entries.push_back({{"content", e.content},
                       {"embedding", e.embedding},
                       {"round", e.round},
                       {"kind", e.kind == MemoryKind::kShort ? "short" : "long"}});
  }
  return {{"capacity", pool.capacity()}, {"entries", entries}};
}

MemoryPool pool_from_json(const nlohmann::json& j) {
  MemoryPool pool(j.at("capacity").get<std::size_t>());
  for (const auto& e : j.at("entries")) {
    pool.insert({e.at("content").get<std::string>(), e.at("embedding").get<Embedding>(), e.at("round").get<int>(),
                 e.at("kind").get<std::string>() == "short" ? MemoryKind::kShort : MemoryKind::kLong});
  }
  return pool;
}

std::string truncate_utf8(const std::string& text, std::size_t max_bytes) {
  if (text.size() <= max_bytes) return text;
  std::size_t cut = max_bytes;
  while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xC0) == 0x80) --cut;
  return text.substr(0, cut);
}

namespace {

std::string first_tokens(const std::string& text, std::size_t n) {
  std::istringstream in(text);
  std::string word, out;
  for (std::size_t i = 0; i < n && in >> word; ++i) {
    if (!out.empty()) out += ' ';
    out += word;
  }
  return out;
}

}  // namespace

MemoryWrite encode_short_term(const std::string& content, const AgentProfile& profile, const MemoryEntry* previous,
                              DecisionBackend& backend, EmbeddingProvider& embedder, int round,
                              const MemoryConfig& config) {
  if (content.empty()) throw Error(ErrorCode::kInvalidArgument, "short-term memory needs content");
  MemoryWrite out;
  out.entry.round = round;
  out.entry.kind = MemoryKind::kShort;
  if (content.size() < config.bypass_chars) {
    out.entry.content = content;
  } else {
    std::optional<std::string> summary;
    try {
      out.backend_called = !backend.scripted();
      summary = backend.complete(templates::kShortMemory,
                                 {{"synthetic_profile", profile.to_text()},
                                  {"message", content},
                                  {"memory", previous ? previous->content : "none"}},
                                 "short_term_memory");
    } catch (const Error&) {
      out.fallback = true;
    }
    out.entry.content = summary && !summary->empty() ? *summary : first_tokens(content, config.fallback_tokens);
  }
  out.entry.embedding = embedder.embed_one(out.entry.content);
  return out;
}

std::vector<double> retrieval_weights(std::span<const double> query, const MemoryPool& pool, double lambda, int now) {
  if (pool.empty()) throw Error(ErrorCode::kEmptyPool, "retrieval over an empty memory pool");
  if (!(lambda > 0.0)) throw Error(ErrorCode::kInvalidArgument, "decay rate lambda must be positive");
  std::vector<double> w(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) {
    const auto& e = pool[k];
    const double sim = std::max(0.0, cosine(query, e.embedding));
    w[k] = std::exp(-lambda * static_cast<double>(now - e.round)) * sim;
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total > 0.0) {
    for (double& x : w) x /= total;
  } else {
    std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(w.size()));
  }
  return w;
}

std::vector<std::size_t> sample_memory_indices(std::span<const double> weights, std::size_t n, std::uint64_t seed) {
  if (weights.empty()) throw Error(ErrorCode::kEmptyPool, "sampling from an empty memory pool");
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "sample count must be at least 1");
  std::vector<std::size_t> order(weights.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (n >= weights.size()) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return weights[a] > weights[b]; });
    return order;
  }
  Rng rng(seed);
  std::vector<double> remaining(weights.begin(), weights.end());
  std::vector<std::size_t> picked;
  picked.reserve(n);
  for (std::size_t draw = 0; draw < n; ++draw) {
    // Exclude already-picked entries even when all weights are zero.
    std::vector<double> w = remaining;
    double total = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(total > 0.0)) {
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::find(picked.begin(), picked.end(), i) == picked.end();
    }
    const std::size_t idx = rng.categorical(w);
    picked.push_back(idx);
    remaining[idx] = 0.0;
  }
  return picked;
}

std::vector<MemoryEntry> sample_memories(const MemoryPool& pool, std::span<const double> weights, std::size_t n,
                                         std::uint64_t seed) {
  if (weights.size() != pool.size()) throw Error(ErrorCode::kShape, "weights do not match pool size");
  std::vector<MemoryEntry> out;
  for (std::size_t i : sample_memory_indices(weights, n, seed)) out.push_back(pool[i]);
  return out;
}

MemoryWrite consolidate_long_term(const std::string& content, const AgentProfile& profile,
                                  std::span<const MemoryEntry> samples, DecisionBackend& backend,
                                  EmbeddingProvider& embedder, int round, MemoryPool& pool,
                                  const MemoryConfig& config) {
  std::string recalled;
  for (const auto& s : samples) {
    if (!recalled.empty()) recalled += " | ";
    recalled += s.content;
  }
  MemoryWrite out;
  out.entry.round = round;
  out.entry.kind = MemoryKind::kLong;
  std::optional<std::string> summary;
  try {
    out.backend_called = !backend.scripted();
    summary = backend.complete(templates::kLongMemory,
                               {{"synthetic_profile", profile.to_text()},
                                {"message", content},
                                {"short_memory", recalled.empty() ? "none" : recalled}},
                               "long_term_memory");
  } catch (const Error&) {
    out.fallback = true;
  }
  if (summary && !summary->empty()) {
    out.entry.content = *summary;
  } else {
    const std::string joined = recalled.empty() ? content : content + " | " + recalled;
    out.entry.content = truncate_utf8(joined, config.long_term_chars);
  }
  out.entry.embedding = embedder.embed_one(out.entry.content);
  pool.insert(out.entry);
  return out;
}

}  // namespace policysim
