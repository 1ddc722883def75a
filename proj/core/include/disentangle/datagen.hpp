#pragma once

// Synthetic datasets with known per-sample probabilities: the four
// two-factor scenarios plus surrogates for the email chain and the search
// DAG. Features are zero-mean Gaussians, head probabilities are sigmoids of
// linear scores, labels are Bernoulli draws.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "disentangle/event_graph.hpp"
#include "disentangle/losses.hpp"

namespace disentangle::data {

using nn::Index;
using nn::Matrix;
using nn::Vector;

enum class Scenario { IndCovKwn, IndCovUnk, ParOvUnk, ComOv, EmailChain, SearchDag };

std::string_view to_string(Scenario s);
/// Throws ConfigError naming the valid presets.
Scenario parse_scenario(std::string_view name);
std::vector<Scenario> all_scenarios();
std::vector<Scenario> product_scenarios();

graph::GraphPreset preset_for(Scenario s);
/// Whether the model is told which features drive which head.
bool partition_known(Scenario s);

struct ScenarioSpec {
  Scenario scenario = Scenario::IndCovKwn;
  std::size_t n = 20000;
  std::uint64_t seed = 1;

  // Two-factor scenarios: head probability = cap * (floor + (1 - floor) * sigmoid(gain * w'x)).
  double prob_cap = 0.6;
  double prob_floor = 0.05;
  bool saturate = false;  // gain > 1 drives heads toward 0 and 1
  double saturation_gain = 4.0;

  // Email/search surrogates: features, per-head subset size, logit spread, mean rates.
  Index feature_dim = 0;  // 0 selects the scenario default (4 or 20)
  Index subset_size = 8;
  double logit_std = 1.0;
  std::map<std::string, double, std::less<>> rates;  // empty selects defaults

  // Optional overrides; empty means use the scenario default / sample from the seed.
  std::map<std::string, std::vector<Index>, std::less<>> partition;
  std::map<std::string, std::vector<double>, std::less<>> weights;
};

/// Throws ConfigError for out-of-range values or a partition that does not
/// fit the scenario.
void validate(const ScenarioSpec& spec);

std::string spec_to_json(const ScenarioSpec& spec);
/// Strict: unknown keys are rejected. Missing keys keep their defaults.
ScenarioSpec spec_from_json(std::string_view json);

enum class SplitName { Train, Validation, Test, All };
std::string_view to_string(SplitName s);
SplitName parse_split(std::string_view name);

struct Split {
  std::vector<Index> train, validation, test;
};

struct Dataset {
  ScenarioSpec spec;
  Matrix features;  // n x d
  std::map<std::string, Vector, std::less<>> labels;      // observed 0/1 outcomes
  std::map<std::string, Vector, std::less<>> true_probs;  // heads and composed nodes
  std::vector<std::string> hidden;                        // labels withheld from training
  std::map<std::string, std::vector<Index>, std::less<>> partition;
  std::map<std::string, std::vector<double>, std::less<>> weights;
  std::map<std::string, double, std::less<>> biases;
  Split split;

  [[nodiscard]] Index size() const { return features.rows(); }
  [[nodiscard]] std::vector<Index> indices(SplitName which) const;
};

/// Deterministic in the spec. Requires n >= 100.
Dataset generate(const ScenarioSpec& spec);

/// Removes `name` from the observed labels, keeping its truth for scoring.
Dataset hide_variable(Dataset ds, std::string_view name);

/// Label mean for observed variables, mean true probability for the rest.
loss::AggregateTargets true_aggregates(const Dataset& ds, SplitName split);

/// Rows of `m` at `rows`, in order.
Matrix gather_rows(const Matrix& m, const std::vector<Index>& rows);
Vector gather(const Vector& v, const std::vector<Index>& rows);

/// CSV table (x0.., labels, p_<name>..) plus a JSON sidecar with spec and split.
void save_dataset(const Dataset& ds, const std::filesystem::path& csv_path,
                  const std::filesystem::path& sidecar_path);
Dataset load_dataset(const std::filesystem::path& csv_path,
                     const std::filesystem::path& sidecar_path);

/// `foo.csv` -> `foo.json`
std::filesystem::path sidecar_path_for(const std::filesystem::path& csv_path);

}  // namespace disentangle::data
