#pragma once

// Training objectives: summed binary cross-entropy on observed composed
// events, optionally plus a squared penalty pulling batch-mean predictions
// toward known aggregate rates (raw or exponentially smoothed batch means).

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "disentangle/event_graph.hpp"

namespace disentangle::loss {

using nn::Vector;

enum class Strategy { BCEL, AGGL, SAGG };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view name);

/// Population rate per variable (head, observed or aggregate-only node).
using AggregateTargets = std::map<std::string, double, std::less<>>;
using Means = std::map<std::string, double, std::less<>>;

struct BceResult {
  double value = 0.0;
  Vector grad;  // d value / d pred_i
};

/// Mean binary cross-entropy; predictions are clamped to [1e-7, 1-1e-7] and
/// the gradient is zero where clamping is active.
BceResult bce_loss(const Vector& pred, const Vector& labels);

struct AggregateResult {
  double value = 0.0;
  Means grad;  // d value / d mean_j for every target key
};

/// sum_j (target_j - mean_j)^2 over the target keys.
AggregateResult aggregate_loss(const Means& batch_means, const AggregateTargets& targets);

struct SmoothingState {
  Means smoothed;
  std::uint64_t batches = 0;
  double alpha = 0.8;
};

/// First batch copies the raw means; later batches blend alpha*raw + (1-alpha)*previous.
SmoothingState smoothed_update(SmoothingState state, const Means& raw_means);

struct LossReport {
  double bce = 0.0;
  double aggregate = 0.0;
  double total = 0.0;
  double lambda = 0.0;
};

struct LossResult {
  LossReport report;
  graph::Values head_grads;  // d total / d head output, per sample
};

/// Loss of one batch and its gradient with respect to every head output.
///
/// BCEL forces lambda to 0 but still reports the aggregate term when targets
/// are given, so BCEL and AGGL(lambda=0) take identical arithmetic paths.
/// SAGG with a non-null `smoothing` advances it by one batch; the history
/// term is held constant so the current batch receives alpha times the
/// gradient (the first batch receives all of it). With a null `smoothing`,
/// SAGG scores raw means, which is how validation loss is computed.
LossResult total_loss(Strategy strategy, const graph::EventGraph& graph,
                      const graph::Values& head_values, const graph::Values& labels,
                      const AggregateTargets& targets, double lambda,
                      SmoothingState* smoothing = nullptr);

}  // namespace disentangle::loss
