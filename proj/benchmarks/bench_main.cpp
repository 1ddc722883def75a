#include <benchmark/benchmark.h>

#include <random>

#include "disentangle/datagen.hpp"
#include "disentangle/event_graph.hpp"
#include "disentangle/losses.hpp"
#include "disentangle/nn.hpp"
#include "disentangle/trainer.hpp"

namespace {

using namespace disentangle;
using nn::Index;
using nn::Matrix;
using nn::Vector;

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

nn::Network email_head(Index inputs) {
  const std::vector<Index> dims{inputs, 70, 40, 20, 10, 1};
  std::vector<nn::Activation> acts(4, nn::Activation::ReLU);
  acts.push_back(nn::Activation::Sigmoid);
  return nn::init_network(dims, acts, 1);
}

void BM_Forward(benchmark::State& state) {
  const auto net = email_head(8);
  const Matrix x = random_matrix(state.range(0), 8, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::forward(net, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(128)->Arg(4096);

void BM_ForwardBackward(benchmark::State& state) {
  const auto net = email_head(8);
  const Matrix x = random_matrix(state.range(0), 8, 3);
  const Vector up = random_matrix(state.range(0), 1, 4);
  for (auto _ : state) {
    const auto fwd = nn::forward(net, x);
    benchmark::DoNotOptimize(nn::backward(net, fwd.cache, up));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ForwardBackward)->Arg(128)->Arg(4096);

void BM_SearchGraphLoss(benchmark::State& state) {
  const auto g = graph::build_graph(graph::preset_description(graph::GraphPreset::SearchDag, 20));
  const Index n = state.range(0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  graph::Values heads, labels;
  for (const auto& h : g.heads()) heads.emplace(h.name, Vector::NullaryExpr(n, [&] { return unit(rng); }));
  for (const auto& o : g.observed_names())
    labels.emplace(o, Vector::NullaryExpr(n, [&] { return unit(rng) < 0.2 ? 1.0 : 0.0; }));
  loss::AggregateTargets targets;
  for (const auto& v : graph::reported_variables(graph::GraphPreset::SearchDag)) targets[v] = 0.2;
  for (auto _ : state)
    benchmark::DoNotOptimize(loss::total_loss(loss::Strategy::AGGL, g, heads, labels, targets, 1.0));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_SearchGraphLoss)->Arg(128)->Arg(4096);

void BM_TrainEpochProduct(benchmark::State& state) {
  data::ScenarioSpec spec;
  spec.n = 20000;
  const auto ds = data::generate(spec);
  const auto g = train::graph_for(ds, true, {3});
  const auto targets = data::true_aggregates(ds, data::SplitName::Train);
  train::TrainConfig cfg;
  cfg.strategy = loss::Strategy::AGGL;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train::train(g, ds, cfg, targets));
}
BENCHMARK(BM_TrainEpochProduct)->Unit(benchmark::kMillisecond);

void BM_TrainEpochEmail(benchmark::State& state) {
  data::ScenarioSpec spec;
  spec.scenario = data::Scenario::EmailChain;
  spec.n = 20000;
  const auto ds = data::hide_variable(data::generate(spec), graph::names::kSend);
  const auto g = train::graph_for(ds, true, train::default_hidden_layers(spec.scenario));
  train::TrainConfig cfg;
  cfg.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train::train(g, ds, cfg));
}
BENCHMARK(BM_TrainEpochEmail)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
