#pragma once

// Experiment configuration: a JSON document with optional sections, strict
// about unknown keys, plus the command-line overrides applied on top of it.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "disentangle/datagen.hpp"
#include "disentangle/event_graph.hpp"
#include "disentangle/trainer.hpp"

namespace disentangle::cli {

inline constexpr std::size_t kFullSizeRows = 100000;

struct ExperimentConfig {
  std::vector<data::ScenarioSpec> scenarios;  // empty selects the command's default
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> model;

  // Custom graph for train/eval; the scenario preset otherwise.
  std::optional<graph::GraphDescription> graph;
  std::vector<nn::Index> hidden_layers;  // empty selects train::default_hidden_layers
  std::optional<bool> known_partition;

  train::TrainConfig train;
  bool lambda_given = false;  // false: AGGL/SAGG search lambda_grid
  std::vector<double> lambda_grid = train::kDefaultLambdaGrid;
  std::vector<loss::Strategy> strategies = {loss::Strategy::BCEL, loss::Strategy::AGGL,
                                            loss::Strategy::SAGG};

  data::SplitName target_split = data::SplitName::Train;
  loss::AggregateTargets target_overrides;

  std::pair<std::uint64_t, std::uint64_t> seeds{1, 2};
  unsigned jobs = 1;
  std::optional<std::filesystem::path> output_dir;
};

/// Throws ConfigError on malformed JSON, unknown keys or invalid values.
ExperimentConfig parse_config(std::string_view json_text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every field with its effective value; the manifest records this.
std::string config_to_json(const ExperimentConfig& cfg);

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda;
  std::optional<double> alpha;
  std::optional<std::string> strategy;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  bool full_size = false;
  std::optional<std::string> scenario;
  std::optional<std::size_t> n;
  std::optional<unsigned> jobs;
  std::optional<std::filesystem::path> dataset;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> out;
};

/// Command line wins over the file. --seed reseeds data and training and sets
/// the consistency pair to (seed, seed + 1); --strategy also narrows the
/// strategy list; --full-size sets n to 100000 unless --n is given.
void apply_overrides(ExperimentConfig& cfg, const Overrides& o);

/// Output root: config/flag value, else $DISENTANGLE_OUT, else "out".
std::filesystem::path output_root(const ExperimentConfig& cfg);

}  // namespace disentangle::cli
