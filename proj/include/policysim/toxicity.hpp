#pragma once

#include <set>
#include <string>
#include <string_view>

#include "policysim/http_client.hpp"

namespace policysim {

struct ToxicityScore {
  double value = 0.0;     // [0, 1]
  bool fallback = false;  // remote scorer failed, lexicon used
};

class ToxicityScorer {
 public:
  virtual ~ToxicityScorer() = default;
  /// Throws kInvalidArgument on empty text. Safe to call concurrently.
  virtual ToxicityScore score(std::string_view text) = 0;
};

/// Word-list scorer. With d the fraction of word tokens found in the
/// lexicon, score = cap * tanh(kappa * d) / tanh(kappa): 0 without matches,
/// exactly `cap` when every token matches.
class LexiconToxicityScorer final : public ToxicityScorer {
 public:
  static constexpr double kCap = 0.9;
  static constexpr double kKappa = 4.0;

  LexiconToxicityScorer();
  explicit LexiconToxicityScorer(std::set<std::string, std::less<>> lexicon);

  ToxicityScore score(std::string_view text) override { return {score_text(text), false}; }
  [[nodiscard]] double score_text(std::string_view text) const;
  [[nodiscard]] const std::set<std::string, std::less<>>& lexicon() const noexcept { return lexicon_; }

 private:
  std::set<std::string, std::less<>> lexicon_;
};

/// Remote scorer: POST {"text": ...} returning {"score": x} with x in [0, 1].
/// Any failure falls back to the lexicon and marks the result.
class RemoteToxicityScorer final : public ToxicityScorer {
 public:
  explicit RemoteToxicityScorer(HttpEndpoint endpoint) : endpoint_(std::move(endpoint)) {}
  ToxicityScore score(std::string_view text) override;

 private:
  HttpEndpoint endpoint_;
  LexiconToxicityScorer fallback_;
};

}  // namespace policysim
