#pragma once

// Mini-batch training of every head of an event graph under one loss
// strategy, best-validation-epoch model selection, and the three experiment
// protocols built on top: scenario benchmark, correctness (hidden variable)
// and consistency (agreement across seeds).

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "disentangle/datagen.hpp"
#include "disentangle/event_graph.hpp"
#include "disentangle/losses.hpp"
#include "disentangle/metrics.hpp"
#include "disentangle/nn.hpp"

namespace disentangle::train {

using nn::Index;
using nn::Matrix;

struct TrainConfig {
  loss::Strategy strategy = loss::Strategy::BCEL;
  double lambda = 1.0;
  double alpha = 0.8;
  int epochs = 50;
  std::size_t batch_size = 128;
  std::uint64_t seed = 1;
  nn::AdamConfig optimizer;
};

void validate(const TrainConfig& cfg);

struct EpochRecord {
  loss::LossReport train;       // mean over the epoch's batches
  loss::LossReport validation;  // whole validation split, raw means
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;  // -1 when no epoch ran
  loss::SmoothingState final_smoothing;
};

/// Heads of one graph; heads[k] belongs to graph.heads()[k].
struct Model {
  graph::EventGraph graph;
  std::vector<nn::Network> heads;

  [[nodiscard]] graph::Values predict_heads(const Matrix& features) const;
  /// Every head and composed node.
  [[nodiscard]] graph::Values predict(const Matrix& features) const;
};

Model init_model(const graph::EventGraph& graph, std::uint64_t seed);

struct TrainResult {
  Model model;  // parameters from the best validation epoch
  TrainHistory history;
};

/// Deterministic given cfg.seed. Throws NumericalError (with epoch and batch)
/// on a non-finite loss and ConfigError on unmet prerequisites.
TrainResult train(const graph::EventGraph& graph, const data::Dataset& ds, const TrainConfig& cfg,
                  const loss::AggregateTargets& targets = {});

/// Test-split (or other split) MSE/MAPE against the dataset's true probabilities.
/// An empty `variables` scores every graph variable that has a truth column.
metrics::EvalReport evaluate(const Model& model, const data::Dataset& ds, data::SplitName split,
                             const std::vector<std::string>& variables = {});

/// Per-head estimated/true ratio summaries on a split.
std::map<std::string, graph::ScaleDiagnostic> scale_diagnostics(const Model& model,
                                                                 const data::Dataset& ds,
                                                                 data::SplitName split);

/// The scenario's preset graph; heads read their generative feature subsets
/// when `known_partition`, otherwise every feature.
graph::EventGraph graph_for(const data::Dataset& ds, bool known_partition,
                            const std::vector<Index>& hidden_layers);

/// Hidden widths used by default: {3} for two-factor scenarios,
/// {70, 40, 20, 10} for the email and search surrogates.
std::vector<Index> default_hidden_layers(data::Scenario s);

inline const std::vector<double> kDefaultLambdaGrid = {0.1, 1.0, 10.0, 100.0};

struct LambdaChoice {
  double lambda = 0.0;
  TrainResult result;
  std::vector<std::pair<double, double>> scores;  // (lambda, best validation total loss)
};

/// BCEL trains once with lambda 0. AGGL/SAGG train once per grid value and
/// keep the lowest best-epoch validation total loss (earliest on ties).
LambdaChoice train_with_lambda_grid(const graph::EventGraph& graph, const data::Dataset& ds,
                                    const TrainConfig& cfg, const loss::AggregateTargets& targets,
                                    const std::vector<double>& grid);

struct ExperimentOptions {
  TrainConfig base;
  std::vector<double> lambda_grid = kDefaultLambdaGrid;
  std::optional<double> fixed_lambda;  // skips the grid
  std::vector<Index> hidden_layers;    // empty selects default_hidden_layers
  std::optional<bool> known_partition; // empty selects data::partition_known
  data::SplitName target_split = data::SplitName::Train;
  loss::AggregateTargets target_overrides;
  unsigned jobs = 1;  // parallel cells
};

struct BenchmarkCell {
  data::Scenario scenario;
  loss::Strategy strategy;
  double lambda = 0.0;
  metrics::EvalReport report;
  std::map<std::string, graph::ScaleDiagnostic> scale;
  TrainHistory history;
};

/// One cell per (scenario, strategy), in scenario-major order.
std::vector<BenchmarkCell> run_scenario_benchmark(const std::vector<data::ScenarioSpec>& scenarios,
                                                  const std::vector<loss::Strategy>& strategies,
                                                  const ExperimentOptions& options);

struct StrategyReport {
  loss::Strategy strategy;
  double lambda = 0.0;
  metrics::EvalReport report;
};

/// Hides Send, trains the email chain on Open/Click and scores all five variables.
std::vector<StrategyReport> run_correctness(const data::Dataset& ds,
                                            const std::vector<loss::Strategy>& strategies,
                                            const ExperimentOptions& options);

struct StrategyConsistency {
  loss::Strategy strategy;
  double lambda = 0.0;
  metrics::ConsistencyReport report;
};

/// Trains twice per strategy (lambda chosen on the first seed, reused for the
/// second) and reports test-split agreement for the tracked search variables.
std::vector<StrategyConsistency> run_consistency(const data::Dataset& ds,
                                                 const std::vector<loss::Strategy>& strategies,
                                                 std::pair<std::uint64_t, std::uint64_t> seeds,
                                                 const ExperimentOptions& options);

/// Targets used by the protocols: true aggregates on options.target_split,
/// restricted to `variables` when non-empty, then overridden.
loss::AggregateTargets experiment_targets(const data::Dataset& ds, const ExperimentOptions& options,
                                          const std::vector<std::string>& variables);

/// Writes/reads a model: graph summary plus one network record per head.
void write_model(std::ostream& os, const Model& model);
std::vector<nn::Network> read_model_heads(std::istream& is, const graph::EventGraph& graph);

}  // namespace disentangle::train
