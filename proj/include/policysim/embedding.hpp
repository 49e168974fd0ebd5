#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "policysim/http_client.hpp"

namespace policysim {

using Embedding = std::vector<double>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  [[nodiscard]] virtual std::size_t dimension() const noexcept = 0;
  /// Unit-norm vectors, one per input. Must be safe to call concurrently.
  virtual std::vector<Embedding> embed(const std::vector<std::string>& texts) = 0;

  Embedding embed_one(const std::string& text) { return embed({text}).front(); }
};

/// Character trigram counts hashed into `dimension` buckets (FNV-1a keyed by
/// the seed) and L2-normalized. Lowercased, with a space pad at both ends.
/// Distinct trigrams may share a bucket; with 64 buckets short texts collide
/// often, which only inflates similarity. Text without any trigram maps to
/// the first basis vector.
class HashedEmbedder final : public EmbeddingProvider {
 public:
  explicit HashedEmbedder(std::size_t dimension = 64, std::uint64_t seed = 0);

  [[nodiscard]] std::size_t dimension() const noexcept override { return dimension_; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;
  [[nodiscard]] Embedding embed_text(const std::string& text) const;

 private:
  std::size_t dimension_;
  std::uint64_t basis_;
};

/// OpenAI-style embedding endpoint: POST {"model", "input": [...]} returning
/// {"data": [{"embedding": [...]}, ...]}. Vectors are re-normalized and must
/// match the declared dimension.
class RemoteEmbedder final : public EmbeddingProvider {
 public:
  RemoteEmbedder(HttpEndpoint endpoint, std::size_t dimension, std::string model = "default");

  [[nodiscard]] std::size_t dimension() const noexcept override { return dimension_; }
  std::vector<Embedding> embed(const std::vector<std::string>& texts) override;

 private:
  HttpEndpoint endpoint_;
  std::size_t dimension_;
  std::string model_;
};

}  // namespace policysim
