#include "disentangle/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <thread>

#include "disentangle/errors.hpp"

namespace disentangle::train {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5851f42d4c957f2dULL));
}

constexpr std::uint64_t kShuffleStream = 1;
constexpr std::uint64_t kHeadStreamBase = 100;

Matrix columns(const Matrix& x, const std::vector<Index>& subset) {
  Matrix out(x.rows(), static_cast<Index>(subset.size()));
  for (std::size_t k = 0; k < subset.size(); ++k) out.col(static_cast<Index>(k)) = x.col(subset[k]);
  return out;
}

void accumulate(loss::LossReport& into, const loss::LossReport& r) {
  into.bce += r.bce;
  into.aggregate += r.aggregate;
  into.total += r.total;
  into.lambda = r.lambda;
}

// Runs fn(i) for i in [0, count) on up to `jobs` threads; rethrows the first failure.
template <typename Fn>
void parallel_for(std::size_t count, unsigned jobs, Fn&& fn) {
  if (jobs <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::jthread> workers;
  const unsigned n = std::min<unsigned>(jobs, static_cast<unsigned>(count));
  for (unsigned w = 0; w < n; ++w)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  workers.clear();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("epochs must be non-negative");
  if (cfg.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(cfg.lambda >= 0.0) || !std::isfinite(cfg.lambda)) throw ConfigError("lambda must be finite and >= 0");
  if (!(cfg.alpha > 0.0 && cfg.alpha <= 1.0)) throw ConfigError("alpha must lie in (0, 1]");
  if (!(cfg.optimizer.learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(cfg.optimizer.beta1 > 0.0 && cfg.optimizer.beta1 < 1.0) ||
      !(cfg.optimizer.beta2 > 0.0 && cfg.optimizer.beta2 < 1.0))
    throw ConfigError("moment decay rates must lie in (0, 1)");
}

graph::Values Model::predict_heads(const Matrix& features) const {
  graph::Values out;
  const auto hs = graph.heads();
  for (std::size_t k = 0; k < hs.size(); ++k)
    out.emplace(hs[k].name, nn::predict(heads[k], columns(features, hs[k].feature_subset)));
  return out;
}

graph::Values Model::predict(const Matrix& features) const {
  return graph::eval_graph(graph, predict_heads(features));
}

Model init_model(const graph::EventGraph& graph, std::uint64_t seed) {
  Model m;
  m.graph = graph;
  const auto hs = graph.heads();
  for (std::size_t k = 0; k < hs.size(); ++k) {
    const auto dims = hs[k].layer_dims();
    const auto acts = hs[k].activations();
    m.heads.push_back(nn::init_network(dims, acts, derive_seed(seed, kHeadStreamBase + k)));
  }
  return m;
}

TrainResult train(const graph::EventGraph& graph, const data::Dataset& ds, const TrainConfig& cfg,
                  const loss::AggregateTargets& targets) {
  validate(cfg);
  if (graph.required_feature_dim() > ds.features.cols())
    throw ConfigError("graph reads feature " + std::to_string(graph.required_feature_dim() - 1) +
                      " but the dataset has only " + std::to_string(ds.features.cols()) + " features");
  if (cfg.strategy != loss::Strategy::BCEL && targets.empty())
    throw ConfigError(std::string(loss::to_string(cfg.strategy)) + " needs aggregate targets");
  for (const auto& [name, t] : targets) {
    if (!graph.contains(name)) throw ConfigError("aggregate target for unknown variable '" + name + "'");
    if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("aggregate target for '" + name + "' must lie in [0, 1]");
  }
  const auto observed = graph.observed_names();
  for (const auto& name : observed)
    if (!ds.labels.contains(name))
      throw ConfigError("dataset has no labels for observed node '" + name + "'");
  if (ds.split.train.empty() || ds.split.validation.empty())
    throw ConfigError("training needs non-empty train and validation splits");

  TrainResult result;
  result.model = init_model(graph, cfg.seed);
  result.history.final_smoothing.alpha = cfg.alpha;
  if (cfg.epochs == 0) return result;

  auto& heads = result.model.heads;
  const auto head_decls = graph.heads();
  const std::size_t n_heads = head_decls.size();

  std::vector<Matrix> head_features;
  for (const auto& h : head_decls) head_features.push_back(columns(ds.features, h.feature_subset));

  const auto& val_rows = ds.split.validation;
  std::vector<Matrix> val_features;
  for (const auto& x : head_features) val_features.push_back(data::gather_rows(x, val_rows));
  graph::Values val_labels;
  for (const auto& name : observed) val_labels.emplace(name, data::gather(ds.labels.find(name)->second, val_rows));

  std::vector<nn::OptimizerState> optimizers;
  for (const auto& net : heads) optimizers.push_back(nn::make_optimizer_state(net, cfg.optimizer));

  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, kShuffleStream));
  std::vector<Index> order = ds.split.train;
  loss::SmoothingState smoothing;
  smoothing.alpha = cfg.alpha;
  loss::SmoothingState* smoothing_ptr = cfg.strategy == loss::Strategy::SAGG ? &smoothing : nullptr;

  double best_total = std::numeric_limits<double>::infinity();
  std::vector<nn::Network> best_heads = heads;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    EpochRecord record;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batches) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::vector<Index> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                    order.begin() + static_cast<std::ptrdiff_t>(stop));

      std::vector<nn::ForwardResult> fwd;
      fwd.reserve(n_heads);
      graph::Values head_values;
      for (std::size_t k = 0; k < n_heads; ++k) {
        fwd.push_back(nn::forward(heads[k], data::gather_rows(head_features[k], rows)));
        head_values.emplace(head_decls[k].name, fwd.back().probabilities);
      }
      graph::Values labels;
      for (const auto& name : observed) labels.emplace(name, data::gather(ds.labels.find(name)->second, rows));

      const loss::LossResult lr =
          loss::total_loss(cfg.strategy, graph, head_values, labels, targets, cfg.lambda, smoothing_ptr);
      if (!std::isfinite(lr.report.total))
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                             std::to_string(batches));
      accumulate(record.train, lr.report);

      for (std::size_t k = 0; k < n_heads; ++k) {
        const auto grads = nn::backward(heads[k], fwd[k].cache, lr.head_grads.at(head_decls[k].name));
        if (!grads.all_finite())
          throw NumericalError("non-finite gradient for head '" + head_decls[k].name + "' at epoch " +
                               std::to_string(epoch) + ", batch " + std::to_string(batches));
        nn::optimizer_step(heads[k], grads, optimizers[k]);
      }
    }
    const double nb = static_cast<double>(batches);
    record.train.bce /= nb;
    record.train.aggregate /= nb;
    record.train.total /= nb;

    graph::Values val_heads;
    for (std::size_t k = 0; k < n_heads; ++k)
      val_heads.emplace(head_decls[k].name, nn::predict(heads[k], val_features[k]));
    record.validation =
        loss::total_loss(cfg.strategy, graph, val_heads, val_labels, targets, cfg.lambda, nullptr).report;
    if (!std::isfinite(record.validation.total))
      throw NumericalError("non-finite validation loss at epoch " + std::to_string(epoch));

    if (record.validation.total < best_total) {
      best_total = record.validation.total;
      result.history.best_epoch = epoch;
      best_heads = heads;
    }
    result.history.epochs.push_back(record);
  }

  heads = std::move(best_heads);
  result.history.final_smoothing = smoothing;
  return result;
}

metrics::EvalReport evaluate(const Model& model, const data::Dataset& ds, data::SplitName split,
                             const std::vector<std::string>& variables) {
  const auto rows = ds.indices(split);
  if (rows.empty()) throw ConfigError("evaluate: split is empty");
  const auto values = model.predict(data::gather_rows(ds.features, rows));

  std::vector<std::string> names = variables;
  if (names.empty())
    for (const auto& v : model.graph.variable_names())
      if (ds.true_probs.contains(v)) names.push_back(v);

  metrics::EvalReport report;
  report.test_size = rows.size();
  for (const auto& name : names) {
    auto est = values.find(name);
    auto truth = ds.true_probs.find(name);
    if (est == values.end()) throw ConfigError("evaluate: '" + name + "' is not a graph variable");
    if (truth == ds.true_probs.end()) throw ConfigError("evaluate: no truth for '" + name + "'");
    const nn::Vector t = data::gather(truth->second, rows);
    metrics::VariableScore s;
    s.variable = name;
    const auto* node = model.graph.find_node(name);
    s.role = node != nullptr && node->role == graph::NodeRole::Observed ? metrics::Role::Observed
                                                                         : metrics::Role::Unobserved;
    s.mse = metrics::mse(est->second, t);
    const auto m = metrics::mape_detailed(est->second, t);
    s.mape = m.value;
    s.mape_filtered = m.filtered;
    report.scores.push_back(std::move(s));
  }
  return report;
}

std::map<std::string, graph::ScaleDiagnostic> scale_diagnostics(const Model& model,
                                                                 const data::Dataset& ds,
                                                                 data::SplitName split) {
  const auto rows = ds.indices(split);
  const auto heads = model.predict_heads(data::gather_rows(ds.features, rows));
  std::map<std::string, graph::ScaleDiagnostic> out;
  for (const auto& [name, est] : heads) {
    auto truth = ds.true_probs.find(name);
    if (truth == ds.true_probs.end()) continue;
    out.emplace(name, graph::scale_diagnostic(est, data::gather(truth->second, rows)));
  }
  return out;
}

std::vector<Index> default_hidden_layers(data::Scenario s) {
  if (s == data::Scenario::EmailChain || s == data::Scenario::SearchDag) return {70, 40, 20, 10};
  return {3};
}

graph::EventGraph graph_for(const data::Dataset& ds, bool known_partition,
                            const std::vector<Index>& hidden_layers) {
  auto desc = graph::preset_description(data::preset_for(ds.spec.scenario), ds.features.cols(),
                                        hidden_layers.empty() ? default_hidden_layers(ds.spec.scenario)
                                                              : hidden_layers);
  if (known_partition)
    for (auto& h : desc.heads) {
      auto it = ds.partition.find(h.name);
      if (it == ds.partition.end())
        throw ConfigError("dataset records no feature subset for head '" + h.name + "'");
      h.feature_subset = it->second;
    }
  return graph::build_graph(std::move(desc));
}

namespace {

double best_validation_total(const TrainHistory& h) {
  if (h.best_epoch < 0) return std::numeric_limits<double>::infinity();
  return h.epochs[static_cast<std::size_t>(h.best_epoch)].validation.total;
}

}  // namespace

LambdaChoice train_with_lambda_grid(const graph::EventGraph& graph, const data::Dataset& ds,
                                    const TrainConfig& cfg, const loss::AggregateTargets& targets,
                                    const std::vector<double>& grid) {
  LambdaChoice choice;
  if (cfg.strategy == loss::Strategy::BCEL) {
    TrainConfig c = cfg;
    c.lambda = 0.0;
    choice.lambda = 0.0;
    choice.result = train(graph, ds, c, targets);
    choice.scores.emplace_back(0.0, best_validation_total(choice.result.history));
    return choice;
  }
  if (grid.empty()) throw ConfigError("lambda grid is empty");
  double best = std::numeric_limits<double>::infinity();
  for (double lambda : grid) {
    TrainConfig c = cfg;
    c.lambda = lambda;
    TrainResult r = train(graph, ds, c, targets);
    const double score = best_validation_total(r.history);
    choice.scores.emplace_back(lambda, score);
    if (score < best || choice.scores.size() == 1) {
      best = score;
      choice.lambda = lambda;
      choice.result = std::move(r);
    }
  }
  return choice;
}

loss::AggregateTargets experiment_targets(const data::Dataset& ds, const ExperimentOptions& options,
                                          const std::vector<std::string>& variables) {
  auto all = data::true_aggregates(ds, options.target_split);
  loss::AggregateTargets out;
  if (variables.empty()) {
    out = std::move(all);
  } else {
    for (const auto& v : variables) {
      auto it = all.find(v);
      if (it == all.end()) throw ConfigError("no aggregate available for '" + v + "'");
      out.emplace(v, it->second);
    }
  }
  for (const auto& [k, v] : options.target_overrides) out[k] = v;
  return out;
}

namespace {

LambdaChoice run_strategy(const graph::EventGraph& graph, const data::Dataset& ds,
                          const ExperimentOptions& options, loss::Strategy strategy,
                          const loss::AggregateTargets& targets) {
  TrainConfig cfg = options.base;
  cfg.strategy = strategy;
  std::vector<double> grid = options.lambda_grid;
  if (options.fixed_lambda) grid = {*options.fixed_lambda};
  return train_with_lambda_grid(graph, ds, cfg, targets, grid);
}

bool known_for(const data::Dataset& ds, const ExperimentOptions& options) {
  return options.known_partition.value_or(data::partition_known(ds.spec.scenario));
}

}  // namespace

std::vector<BenchmarkCell> run_scenario_benchmark(const std::vector<data::ScenarioSpec>& scenarios,
                                                  const std::vector<loss::Strategy>& strategies,
                                                  const ExperimentOptions& options) {
  std::vector<data::Dataset> datasets;
  std::vector<graph::EventGraph> graphs;
  std::vector<loss::AggregateTargets> targets;
  for (const auto& spec : scenarios) {
    datasets.push_back(data::generate(spec));
    const auto& ds = datasets.back();
    graphs.push_back(graph_for(ds, known_for(ds, options), options.hidden_layers));
    targets.push_back(experiment_targets(ds, options, graph::reported_variables(data::preset_for(spec.scenario))));
  }

  std::vector<BenchmarkCell> cells(scenarios.size() * strategies.size());
  parallel_for(cells.size(), options.jobs, [&](std::size_t i) {
    const std::size_t s = i / strategies.size();
    const loss::Strategy strategy = strategies[i % strategies.size()];
    try {
      auto choice = run_strategy(graphs[s], datasets[s], options, strategy, targets[s]);
      auto& cell = cells[i];
      cell.scenario = scenarios[s].scenario;
      cell.strategy = strategy;
      cell.lambda = choice.lambda;
      cell.report = evaluate(choice.result.model, datasets[s], data::SplitName::Test);
      cell.scale = scale_diagnostics(choice.result.model, datasets[s], data::SplitName::Test);
      cell.history = std::move(choice.result.history);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(data::to_string(scenarios[s].scenario)) + "/" +
                           std::string(loss::to_string(strategy)) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(data::to_string(scenarios[s].scenario)) + "/" +
                        std::string(loss::to_string(strategy)) + ": " + e.what());
    }
  });
  return cells;
}

std::vector<StrategyReport> run_correctness(const data::Dataset& input,
                                            const std::vector<loss::Strategy>& strategies,
                                            const ExperimentOptions& options) {
  using namespace graph::names;
  if (input.spec.scenario != data::Scenario::EmailChain)
    throw ConfigError("correctness experiment needs an EMAIL_CHAIN dataset");
  for (auto v : {kSend, kOpen, kClick, kOpenGivenSend, kClickGivenOpen})
    if (!input.true_probs.contains(v))
      throw ConfigError("correctness dataset lacks truth for '" + std::string(v) + "'");

  const data::Dataset ds =
      input.labels.contains(kSend) ? data::hide_variable(input, kSend) : input;
  const auto graph = graph_for(ds, known_for(ds, options), options.hidden_layers);
  const auto variables = graph::reported_variables(graph::GraphPreset::EmailChain);
  const auto targets = experiment_targets(ds, options, variables);

  std::vector<StrategyReport> out(strategies.size());
  parallel_for(strategies.size(), options.jobs, [&](std::size_t i) {
    auto choice = run_strategy(graph, ds, options, strategies[i], targets);
    out[i] = {strategies[i], choice.lambda,
              evaluate(choice.result.model, ds, data::SplitName::Test, variables)};
  });
  return out;
}

std::vector<StrategyConsistency> run_consistency(const data::Dataset& ds,
                                                 const std::vector<loss::Strategy>& strategies,
                                                 std::pair<std::uint64_t, std::uint64_t> seeds,
                                                 const ExperimentOptions& options) {
  if (ds.spec.scenario != data::Scenario::SearchDag)
    throw ConfigError("consistency experiment needs a SEARCH_DAG dataset");
  const auto graph = graph_for(ds, known_for(ds, options), options.hidden_layers);
  const auto variables = graph::reported_variables(graph::GraphPreset::SearchDag);
  const auto targets = experiment_targets(ds, options, variables);
  const auto test_rows = ds.indices(data::SplitName::Test);
  const Matrix test_x = data::gather_rows(ds.features, test_rows);

  std::vector<StrategyConsistency> out(strategies.size());
  parallel_for(strategies.size(), options.jobs, [&](std::size_t i) {
    ExperimentOptions first = options;
    first.base.seed = seeds.first;
    auto a = run_strategy(graph, ds, first, strategies[i], targets);

    TrainConfig second = options.base;
    second.strategy = strategies[i];
    second.seed = seeds.second;
    second.lambda = a.lambda;
    const auto b = train(graph, ds, second, targets);

    const auto va = a.result.model.predict(test_x);
    const auto vb = b.model.predict(test_x);
    metrics::ConsistencyReport report;
    for (const auto& v : variables) {
      const auto* node = graph.find_node(v);
      const auto role = node != nullptr && node->role == graph::NodeRole::Observed
                            ? metrics::Role::Observed
                            : metrics::Role::Unobserved;
      report.agreements.push_back({v, role, metrics::consistency(va.at(v), vb.at(v), report.threshold)});
    }
    out[i] = {strategies[i], a.lambda, std::move(report)};
  });
  return out;
}

void write_model(std::ostream& os, const Model& model) {
  const auto hs = model.graph.heads();
  os << "disentangle-model 1\n";
  os << "heads " << hs.size() << '\n';
  for (std::size_t k = 0; k < hs.size(); ++k) {
    os << "head " << hs[k].name << " features " << hs[k].feature_subset.size();
    for (Index i : hs[k].feature_subset) os << ' ' << i;
    os << '\n';
    nn::write_network(os, model.heads[k]);
  }
}

std::vector<nn::Network> read_model_heads(std::istream& is, const graph::EventGraph& graph) {
  std::string token;
  int version = 0;
  if (!(is >> token >> version) || token != "disentangle-model" || version != 1)
    throw ConfigError("not a model file (bad header)");
  std::size_t count = 0;
  if (!(is >> token >> count) || token != "heads" || count != graph.heads().size())
    throw ConfigError("model head count does not match the graph");
  std::vector<nn::Network> out;
  for (const auto& h : graph.heads()) {
    std::string name, features;
    std::size_t m = 0;
    if (!(is >> token >> name >> features >> m) || token != "head" || features != "features")
      throw ConfigError("model file: malformed head header");
    if (name != h.name) throw ConfigError("model head '" + name + "' where '" + h.name + "' was expected");
    std::vector<Index> subset(m);
    for (auto& i : subset)
      if (!(is >> i)) throw ConfigError("model file: truncated feature list");
    if (subset != h.feature_subset)
      throw ConfigError("model head '" + name + "' was trained on a different feature subset");
    nn::Network net = nn::read_network(is);
    if (net.layers.front().in_dim() != static_cast<Index>(subset.size()))
      throw ConfigError("model head '" + name + "' input width does not match its features");
    out.push_back(std::move(net));
  }
  return out;
}

}  // namespace disentangle::train
