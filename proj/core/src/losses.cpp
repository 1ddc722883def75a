#include "disentangle/losses.hpp"

#include <cmath>

#include "disentangle/errors.hpp"

namespace disentangle::loss {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::BCEL:
      return "BCEL";
    case Strategy::AGGL:
      return "AGGL";
    case Strategy::SAGG:
      return "SAGG";
  }
  return "BCEL";
}

Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::BCEL, Strategy::AGGL, Strategy::SAGG})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown strategy '" + std::string(name) + "' (valid: BCEL, AGGL, SAGG)");
}

BceResult bce_loss(const Vector& pred, const Vector& labels) {
  if (pred.size() != labels.size())
    throw ShapeError("bce_loss: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(labels.size()) + " labels");
  if (pred.size() == 0) throw ShapeError("bce_loss: empty batch");
  constexpr double lo = nn::kProbabilityEpsilon;
  constexpr double hi = 1.0 - nn::kProbabilityEpsilon;
  const double n = static_cast<double>(pred.size());
  BceResult r;
  r.grad.resize(pred.size());
  double sum = 0.0;
  for (nn::Index i = 0; i < pred.size(); ++i) {
    const double raw = pred(i);
    const double p = raw < lo ? lo : (raw > hi ? hi : raw);
    const double y = labels(i);
    sum -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    r.grad(i) = (raw < lo || raw > hi) ? 0.0 : (p - y) / (n * p * (1.0 - p));
  }
  r.value = sum / n;
  return r;
}

AggregateResult aggregate_loss(const Means& batch_means, const AggregateTargets& targets) {
  AggregateResult r;
  for (const auto& [name, target] : targets) {
    auto it = batch_means.find(name);
    if (it == batch_means.end())
      throw ConfigError("aggregate_loss: no batch mean for target '" + name + "'");
    const double diff = target - it->second;
    r.value += diff * diff;
    r.grad.emplace(name, -2.0 * diff);
  }
  return r;
}

SmoothingState smoothed_update(SmoothingState state, const Means& raw_means) {
  if (state.batches == 0) {
    state.smoothed = raw_means;
  } else {
    for (const auto& [name, raw] : raw_means) {
      auto it = state.smoothed.find(name);
      if (it == state.smoothed.end())
        state.smoothed.emplace(name, raw);
      else
        it->second = state.alpha * raw + (1.0 - state.alpha) * it->second;
    }
  }
  ++state.batches;
  return state;
}

LossResult total_loss(Strategy strategy, const graph::EventGraph& graph,
                      const graph::Values& head_values, const graph::Values& labels,
                      const AggregateTargets& targets, double lambda, SmoothingState* smoothing) {
  if (strategy != Strategy::BCEL && targets.empty())
    throw ConfigError(std::string(to_string(strategy)) + " requires aggregate targets");
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw ConfigError("lambda must be a finite non-negative number");
  const double weight = strategy == Strategy::BCEL ? 0.0 : lambda;

  const graph::Values values = graph::eval_graph(graph, head_values);
  const nn::Index n = values.begin()->second.size();

  LossResult out;
  out.report.lambda = weight;
  graph::Values node_grads;

  for (const auto& name : graph.observed_names()) {
    auto lab = labels.find(name);
    if (lab == labels.end()) throw ConfigError("no labels for observed node '" + name + "'");
    const BceResult b = bce_loss(values.at(name), lab->second);
    out.report.bce += b.value;
    node_grads.emplace(name, b.grad);
  }

  if (!targets.empty()) {
    Means raw;
    for (const auto& [name, target] : targets) {
      auto it = values.find(name);
      if (it == values.end())
        throw ConfigError("aggregate target '" + name + "' is not a variable of the graph");
      raw.emplace(name, it->second.mean());
    }

    const Means* means = &raw;
    double chain = 1.0;
    SmoothingState next;
    if (strategy == Strategy::SAGG && smoothing != nullptr) {
      if (!(smoothing->alpha > 0.0 && smoothing->alpha <= 1.0))
        throw ConfigError("smoothing alpha must lie in (0, 1]");
      chain = smoothing->batches == 0 ? 1.0 : smoothing->alpha;
      next = smoothed_update(*smoothing, raw);
      means = &next.smoothed;
    }

    const AggregateResult agg = aggregate_loss(*means, targets);
    out.report.aggregate = agg.value;
    for (const auto& [name, g] : agg.grad) {
      const double per_sample = weight * chain * g / static_cast<double>(n);
      auto it = node_grads.find(name);
      if (it == node_grads.end())
        node_grads.emplace(name, Vector::Constant(n, per_sample));
      else
        it->second.array() += per_sample;
    }
    if (strategy == Strategy::SAGG && smoothing != nullptr) *smoothing = std::move(next);
  }

  out.report.total = out.report.bce + weight * out.report.aggregate;
  out.head_grads = graph::graph_backward(graph, head_values, node_grads);
  return out;
}

}  // namespace disentangle::loss
