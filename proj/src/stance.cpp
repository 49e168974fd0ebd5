#include "policysim/stance.hpp"

#include <algorithm>

#include "policysim/error.hpp"

namespace policysim {

double update_ema(double prev, int observed, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kConfig, "alpha must lie in (0,1)");
  if (observed < -1 || observed > 1) throw Error(ErrorCode::kInvalidArgument, "discrete stance must be -1, 0 or 1");
  const double next = alpha * prev + (1.0 - alpha) * static_cast<double>(observed);
  return std::clamp(next, -1.0, 1.0);
}

int stance_sign(double smoothed, double band) {
  if (smoothed > band) return 1;
  if (smoothed < -band) return -1;
  return 0;
}

StanceTrace::StanceTrace(double alpha) : alpha_(alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::kConfig, "alpha must lie in (0,1)");
}

void StanceTrace::observe(int discrete) {
  if (history_.empty()) {
    if (discrete < -1 || discrete > 1) throw Error(ErrorCode::kInvalidArgument, "discrete stance must be -1, 0 or 1");
    smoothed_ = static_cast<double>(discrete);
  } else {
    smoothed_ = update_ema(smoothed_, discrete, alpha_);
  }
  history_.push_back(discrete);
}

StanceTrace StanceTrace::restore(double alpha, std::vector<int> history, double smoothed) {
  StanceTrace t(alpha);
  t.history_ = std::move(history);
  t.smoothed_ = smoothed;
  return t;
}

StanceInference infer_discrete_stance(const Agent& agent, std::span<const Action> history, DecisionBackend& backend,
                                      std::string_view topic, std::optional<int> previous) {
  try {
    const int v = backend.infer_stance(agent, history, topic);
    if (v < -1 || v > 1) throw Error(ErrorCode::kParse, "stance out of range");
    return {v, false};
  } catch (const Error&) {
    return {previous.value_or(0), true};
  }
}

}  // namespace policysim
