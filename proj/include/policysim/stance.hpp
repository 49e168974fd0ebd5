#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "policysim/agent.hpp"
#include "policysim/backend.hpp"

namespace policysim {

/// Smoothed scores with |s| below this count as neutral in sign-based metrics.
inline constexpr double kNeutralBand = 0.05;

/// alpha * prev + (1 - alpha) * observed. Throws kConfig unless alpha is in
/// (0, 1).
double update_ema(double prev, int observed, double alpha);

/// Sign of a smoothed score with the neutral band applied.
int stance_sign(double smoothed, double band = kNeutralBand);

class StanceTrace {
 public:
  explicit StanceTrace(double alpha = 0.8);

  /// The first observation initializes the smoothed score directly; later
  /// ones go through the moving average.
  void observe(int discrete);

  [[nodiscard]] double smoothed() const noexcept { return smoothed_; }
  [[nodiscard]] double alpha() const noexcept { return alpha_; }
  [[nodiscard]] const std::vector<int>& history() const noexcept { return history_; }
  [[nodiscard]] std::optional<int> last() const {
    return history_.empty() ? std::nullopt : std::optional<int>(history_.back());
  }

  /// Rebuilds a trace from stored state (replay and checkpoints).
  static StanceTrace restore(double alpha, std::vector<int> history, double smoothed);

 private:
  double alpha_;
  double smoothed_ = 0.0;
  std::vector<int> history_;
};

struct StanceInference {
  int value = 0;
  bool fallback = false;  // backend failed; previous value carried forward
};

StanceInference infer_discrete_stance(const Agent& agent, std::span<const Action> history, DecisionBackend& backend,
                                      std::string_view topic, std::optional<int> previous);

}  // namespace policysim
