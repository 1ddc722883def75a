#include "disentangle/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "disentangle/errors.hpp"
#include "text_io.hpp"

namespace disentangle::data {

using json = nlohmann::json;

namespace {

constexpr double kTrainFraction = 0.55;
constexpr double kValidationFraction = 0.20;
constexpr double kMinHeadStd = 0.05;
constexpr double kSaturatedProb = 0.99;
constexpr double kMinSaturatedFraction = 0.001;
constexpr int kMaxWeightDraws = 1000;

// Independent generator per purpose so that, e.g., weight rejection does not
// shift the label stream.
enum class Stream : std::uint64_t { Features = 1, Split = 2, Partition = 3, Weights = 4, Labels = 5 };

std::mt19937_64 make_stream(std::uint64_t seed, Stream s) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(s)};
  return std::mt19937_64(seq);
}

bool is_product(Scenario s) {
  return s == Scenario::IndCovKwn || s == Scenario::IndCovUnk || s == Scenario::ParOvUnk ||
         s == Scenario::ComOv;
}

Index feature_dim_of(const ScenarioSpec& spec) {
  if (spec.feature_dim > 0) return spec.feature_dim;
  return is_product(spec.scenario) ? 4 : 20;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

std::vector<std::string> head_names(Scenario s) {
  const auto d = graph::preset_description(preset_for(s), 1);
  std::vector<std::string> out;
  for (const auto& h : d.heads) out.push_back(h.name);
  return out;
}

std::map<std::string, double, std::less<>> default_rates(Scenario s) {
  using namespace graph::names;
  std::map<std::string, double, std::less<>> r;
  if (s == Scenario::EmailChain) {
    r[std::string(kSend)] = 0.22;
    r[std::string(kOpenGivenSend)] = 0.70;
    r[std::string(kClickGivenOpen)] = 0.07;
  } else if (s == Scenario::SearchDag) {
    r[std::string(kSearch)] = 0.30;
    r[std::string(kAdShownGivenSearch)] = 0.30;
    r[std::string(kAdClickGivenAdShown)] = 0.10;
    r[std::string(kOrgClickGivenAdShown)] = 0.15;
    r[std::string(kOrgClickGivenAdNotShown)] = 0.08;
  }
  return r;
}

std::map<std::string, std::vector<Index>, std::less<>> default_product_partition(Scenario s) {
  using namespace graph::names;
  const std::string y1(kY1), y2(kY2);
  switch (s) {
    case Scenario::IndCovKwn:
    case Scenario::IndCovUnk:
      return {{y1, {0, 1}}, {y2, {2, 3}}};
    case Scenario::ParOvUnk:
      return {{y1, {0, 1, 2}}, {y2, {1, 2, 3}}};
    default:
      return {{y1, {0, 1, 2, 3}}, {y2, {0, 1, 2, 3}}};
  }
}

void check_partition(const ScenarioSpec& spec,
                     const std::map<std::string, std::vector<Index>, std::less<>>& partition) {
  const Index d = feature_dim_of(spec);
  const auto heads = head_names(spec.scenario);
  if (partition.size() != heads.size())
    throw ConfigError("partition for " + std::string(to_string(spec.scenario)) + " must list exactly " +
                      std::to_string(heads.size()) + " heads");
  std::map<std::string, std::set<Index>> sets;
  for (const auto& h : heads) {
    auto it = partition.find(h);
    if (it == partition.end()) throw ConfigError("partition is missing head '" + h + "'");
    std::set<Index> s(it->second.begin(), it->second.end());
    if (s.empty() || s.size() != it->second.size())
      throw ConfigError("partition for '" + h + "' is empty or repeats an index");
    if (*s.begin() < 0 || *s.rbegin() >= d)
      throw ConfigError("partition for '" + h + "' has an index outside [0, " + std::to_string(d) + ")");
    sets[h] = std::move(s);
  }
  if (!is_product(spec.scenario)) return;

  const auto& a = sets.at(std::string(graph::names::kY1));
  const auto& b = sets.at(std::string(graph::names::kY2));
  std::vector<Index> shared;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
  const bool a_own = shared.size() < a.size();
  const bool b_own = shared.size() < b.size();
  const std::string name(to_string(spec.scenario));
  switch (spec.scenario) {
    case Scenario::IndCovKwn:
    case Scenario::IndCovUnk:
      if (!shared.empty()) throw ConfigError(name + " needs disjoint feature sets for Y1 and Y2");
      break;
    case Scenario::ParOvUnk:
      if (shared.empty() || !a_own || !b_own)
        throw ConfigError(name + " needs overlapping feature sets with an independent part on each side");
      break;
    case Scenario::ComOv:
      if (a != b) throw ConfigError(name + " needs identical feature sets for Y1 and Y2");
      break;
    default:
      break;
  }
}

Vector linear_scores(const Matrix& x, const std::vector<Index>& subset, const std::vector<double>& w,
                     double bias = 0.0) {
  Vector s = Vector::Constant(x.rows(), bias);
  for (std::size_t k = 0; k < subset.size(); ++k) s += w[k] * x.col(subset[k]);
  return s;
}

double stddev_over(const Vector& v, const std::vector<Index>& rows) {
  double mean = 0.0;
  for (Index i : rows) mean += v(i);
  mean /= static_cast<double>(rows.size());
  double ss = 0.0;
  for (Index i : rows) ss += (v(i) - mean) * (v(i) - mean);
  return std::sqrt(ss / static_cast<double>(rows.size()));
}

// Bias making the sample mean of sigmoid(score + bias) equal `rate`.
double solve_bias(const Vector& scores, double rate) {
  auto mean_at = [&](double b) {
    double m = 0.0;
    for (Index i = 0; i < scores.size(); ++i) m += sigmoid(scores(i) + b);
    return m / static_cast<double>(scores.size());
  };
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_at(mid) < rate ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

void generate_product_heads(const ScenarioSpec& spec, Dataset& ds) {
  using namespace graph::names;
  const std::string y1(kY1), y2(kY2);
  const double gain = spec.saturate ? spec.saturation_gain : 1.0;
  auto to_prob = [&](double score) {
    return spec.prob_cap * (spec.prob_floor + (1.0 - spec.prob_floor) * sigmoid(gain * score));
  };
  const auto test = ds.indices(SplitName::Test);
  std::mt19937_64 rng = make_stream(spec.seed, Stream::Weights);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  const bool fixed = !spec.weights.empty();
  for (int attempt = 0;; ++attempt) {
    if (attempt == kMaxWeightDraws)
      throw ConfigError("could not draw weights meeting the head variation requirements");
    std::map<std::string, Vector, std::less<>> probs;
    for (const auto& name : {y1, y2}) {
      const auto& subset = ds.partition.at(name);
      std::vector<double> w;
      if (fixed) {
        w = spec.weights.at(name);
      } else {
        for (std::size_t k = 0; k < subset.size(); ++k) w.push_back(unif(rng));
      }
      probs[name] = linear_scores(ds.features, subset, w).unaryExpr(to_prob);
      ds.weights[name] = std::move(w);
      ds.biases[name] = 0.0;
    }
    if (fixed) {
      ds.true_probs = std::move(probs);
      return;
    }
    bool ok = stddev_over(probs.at(y1), test) >= kMinHeadStd &&
              stddev_over(probs.at(y2), test) >= kMinHeadStd;
    if (ok && spec.saturate) {
      Index saturated = 0;
      for (Index i = 0; i < ds.size(); ++i)
        if (probs.at(y1)(i) > kSaturatedProb && probs.at(y2)(i) > kSaturatedProb) ++saturated;
      ok = static_cast<double>(saturated) >= kMinSaturatedFraction * static_cast<double>(ds.size());
    }
    if (ok) {
      ds.true_probs = std::move(probs);
      return;
    }
  }
}

void generate_surrogate_heads(const ScenarioSpec& spec, const std::vector<double>& sigmas, Dataset& ds) {
  const auto test = ds.indices(SplitName::Test);
  const auto rates = spec.rates.empty() ? default_rates(spec.scenario) : spec.rates;
  std::mt19937_64 rng = make_stream(spec.seed, Stream::Weights);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);

  for (const auto& name : head_names(spec.scenario)) {
    const auto& subset = ds.partition.at(name);
    const double rate = rates.at(name);
    const double m = static_cast<double>(subset.size());
    for (int attempt = 0;; ++attempt) {
      if (attempt == kMaxWeightDraws)
        throw ConfigError("could not draw weights for head '" + name + "' with enough variation");
      std::vector<double> w;
      if (auto it = spec.weights.find(name); it != spec.weights.end()) {
        w = it->second;
      } else {
        // Scaled so the logit has standard deviation about logit_std.
        for (Index k : subset)
          w.push_back(unif(rng) * spec.logit_std * std::sqrt(3.0) / (sigmas[static_cast<std::size_t>(k)] * std::sqrt(m)));
      }
      const Vector scores = linear_scores(ds.features, subset, w);
      const double bias = solve_bias(scores, rate);
      Vector p = (scores.array() + bias).matrix().unaryExpr([](double z) { return sigmoid(z); });
      const bool user_weights = spec.weights.contains(name);
      if (user_weights || stddev_over(p, test) >= kMinHeadStd) {
        ds.weights[name] = std::move(w);
        ds.biases[name] = bias;
        ds.true_probs[name] = std::move(p);
        break;
      }
    }
  }
}

void draw_labels(const ScenarioSpec& spec, Dataset& ds) {
  using namespace graph::names;
  std::mt19937_64 rng = make_stream(spec.seed, Stream::Labels);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const Index n = ds.size();
  auto prob = [&](std::string_view name) -> const Vector& { return ds.true_probs.find(name)->second; };

  switch (spec.scenario) {
    case Scenario::EmailChain: {
      Vector send(n), open(n), click(n);
      const Vector& ps = prob(kSend);
      const Vector& po = prob(kOpenGivenSend);
      const Vector& pc = prob(kClickGivenOpen);
      for (Index i = 0; i < n; ++i) {
        const double u1 = unif(rng), u2 = unif(rng), u3 = unif(rng);
        send(i) = u1 < ps(i) ? 1.0 : 0.0;
        open(i) = (send(i) > 0.5 && u2 < po(i)) ? 1.0 : 0.0;
        click(i) = (open(i) > 0.5 && u3 < pc(i)) ? 1.0 : 0.0;
      }
      ds.labels.emplace(std::string(kSend), std::move(send));
      ds.labels.emplace(std::string(kOpen), std::move(open));
      ds.labels.emplace(std::string(kClick), std::move(click));
      break;
    }
    case Scenario::SearchDag: {
      Vector ad(n), org(n);
      const Vector& pa = prob(kAdClick);
      const Vector& po = prob(kOrgClick);
      for (Index i = 0; i < n; ++i) {
        const double u1 = unif(rng), u2 = unif(rng);
        ad(i) = u1 < pa(i) ? 1.0 : 0.0;
        org(i) = u2 < po(i) ? 1.0 : 0.0;
      }
      ds.labels.emplace(std::string(kAdClick), std::move(ad));
      ds.labels.emplace(std::string(kOrgClick), std::move(org));
      break;
    }
    default: {
      Vector y(n);
      const Vector& p = prob(kY);
      for (Index i = 0; i < n; ++i) y(i) = unif(rng) < p(i) ? 1.0 : 0.0;
      ds.labels.emplace(std::string(kY), std::move(y));
      break;
    }
  }
}

json spec_json(const ScenarioSpec& spec) {
  json j;
  j["scenario"] = std::string(to_string(spec.scenario));
  j["n"] = spec.n;
  j["seed"] = spec.seed;
  j["prob_cap"] = spec.prob_cap;
  j["prob_floor"] = spec.prob_floor;
  j["saturate"] = spec.saturate;
  j["saturation_gain"] = spec.saturation_gain;
  j["feature_dim"] = spec.feature_dim;
  j["subset_size"] = spec.subset_size;
  j["logit_std"] = spec.logit_std;
  j["rates"] = json::object();
  for (const auto& [k, v] : spec.rates) j["rates"][k] = v;
  j["partition"] = json::object();
  for (const auto& [k, v] : spec.partition) j["partition"][k] = v;
  j["weights"] = json::object();
  for (const auto& [k, v] : spec.weights) j["weights"][k] = v;
  return j;
}

template <typename T>
T get_as(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

}  // namespace

std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::IndCovKwn:
      return "IND_COV_KWN";
    case Scenario::IndCovUnk:
      return "IND_COV_UNK";
    case Scenario::ParOvUnk:
      return "PAR_OV_UNK";
    case Scenario::ComOv:
      return "COM_OV";
    case Scenario::EmailChain:
      return "EMAIL_CHAIN";
    case Scenario::SearchDag:
      return "SEARCH_DAG";
  }
  return "IND_COV_KWN";
}

std::vector<Scenario> all_scenarios() {
  return {Scenario::IndCovKwn, Scenario::IndCovUnk, Scenario::ParOvUnk,
          Scenario::ComOv,     Scenario::EmailChain, Scenario::SearchDag};
}

std::vector<Scenario> product_scenarios() {
  return {Scenario::IndCovKwn, Scenario::IndCovUnk, Scenario::ParOvUnk, Scenario::ComOv};
}

Scenario parse_scenario(std::string_view name) {
  std::string valid;
  for (auto s : all_scenarios()) {
    if (to_string(s) == name) return s;
    if (!valid.empty()) valid += ", ";
    valid += to_string(s);
  }
  throw ConfigError("unknown scenario '" + std::string(name) + "' (valid presets: " + valid + ")");
}

graph::GraphPreset preset_for(Scenario s) {
  switch (s) {
    case Scenario::EmailChain:
      return graph::GraphPreset::EmailChain;
    case Scenario::SearchDag:
      return graph::GraphPreset::SearchDag;
    default:
      return graph::GraphPreset::Product2;
  }
}

bool partition_known(Scenario s) {
  return s == Scenario::IndCovKwn || s == Scenario::EmailChain || s == Scenario::SearchDag;
}

void validate(const ScenarioSpec& spec) {
  if (spec.n < 100) throw ConfigError("scenario needs n >= 100, got " + std::to_string(spec.n));
  if (!(spec.prob_cap > 0.0 && spec.prob_cap <= 1.0)) throw ConfigError("prob_cap must lie in (0, 1]");
  if (!(spec.prob_floor >= 0.0 && spec.prob_floor < 1.0)) throw ConfigError("prob_floor must lie in [0, 1)");
  if (!(spec.saturation_gain > 0.0)) throw ConfigError("saturation_gain must be positive");
  if (!(spec.logit_std > 0.0)) throw ConfigError("logit_std must be positive");
  if (spec.feature_dim < 0) throw ConfigError("feature_dim must be non-negative");
  const Index d = feature_dim_of(spec);
  if (is_product(spec.scenario)) {
    if (spec.partition.empty() && d != 4)
      throw ConfigError(std::string(to_string(spec.scenario)) + " uses 4 features unless a partition is given");
  } else {
    if (spec.subset_size <= 0 || spec.subset_size > d)
      throw ConfigError("subset_size must lie in [1, feature_dim]");
    const auto heads = head_names(spec.scenario);
    for (const auto& [name, rate] : spec.rates) {
      if (std::find(heads.begin(), heads.end(), name) == heads.end())
        throw ConfigError("rate given for unknown head '" + name + "'");
      if (!(rate > 0.0 && rate < 1.0)) throw ConfigError("rate for '" + name + "' must lie in (0, 1)");
    }
    if (!spec.rates.empty() && spec.rates.size() != heads.size())
      throw ConfigError("rates must be given for every head or none");
  }
  if (!spec.partition.empty()) check_partition(spec, spec.partition);
  for (const auto& [name, w] : spec.weights) {
    const auto heads = head_names(spec.scenario);
    if (std::find(heads.begin(), heads.end(), name) == heads.end())
      throw ConfigError("weights given for unknown head '" + name + "'");
    if (spec.partition.empty() || !spec.partition.contains(name))
      throw ConfigError("weights for '" + name + "' need an explicit partition entry");
    if (w.size() != spec.partition.at(name).size())
      throw ConfigError("weights for '" + name + "' do not match its feature subset size");
  }
  if (is_product(spec.scenario) && !spec.weights.empty() && spec.weights.size() != 2)
    throw ConfigError("weights must be given for both Y1 and Y2 or neither");
}

std::string spec_to_json(const ScenarioSpec& spec) { return spec_json(spec).dump(); }

ScenarioSpec spec_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("scenario spec is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("scenario spec must be a JSON object");
  static const std::set<std::string> known = {
      "scenario", "n",           "seed",      "prob_cap", "prob_floor", "saturate",  "saturation_gain",
      "feature_dim", "subset_size", "logit_std", "rates",    "partition",  "weights"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown scenario key '" + key + "'");

  ScenarioSpec s;
  if (j.contains("scenario")) s.scenario = parse_scenario(get_as<std::string>(j, "scenario"));
  if (j.contains("n")) s.n = get_as<std::size_t>(j, "n");
  if (j.contains("seed")) s.seed = get_as<std::uint64_t>(j, "seed");
  if (j.contains("prob_cap")) s.prob_cap = get_as<double>(j, "prob_cap");
  if (j.contains("prob_floor")) s.prob_floor = get_as<double>(j, "prob_floor");
  if (j.contains("saturate")) s.saturate = get_as<bool>(j, "saturate");
  if (j.contains("saturation_gain")) s.saturation_gain = get_as<double>(j, "saturation_gain");
  if (j.contains("feature_dim")) s.feature_dim = get_as<Index>(j, "feature_dim");
  if (j.contains("subset_size")) s.subset_size = get_as<Index>(j, "subset_size");
  if (j.contains("logit_std")) s.logit_std = get_as<double>(j, "logit_std");
  if (j.contains("rates"))
    for (const auto& [k, v] : get_as<std::map<std::string, double>>(j, "rates")) s.rates[k] = v;
  if (j.contains("partition"))
    for (const auto& [k, v] : get_as<std::map<std::string, std::vector<Index>>>(j, "partition"))
      s.partition[k] = v;
  if (j.contains("weights"))
    for (const auto& [k, v] : get_as<std::map<std::string, std::vector<double>>>(j, "weights"))
      s.weights[k] = v;
  return s;
}

std::string_view to_string(SplitName s) {
  switch (s) {
    case SplitName::Train:
      return "train";
    case SplitName::Validation:
      return "val";
    case SplitName::Test:
      return "test";
    case SplitName::All:
      return "all";
  }
  return "all";
}

SplitName parse_split(std::string_view name) {
  for (auto s : {SplitName::Train, SplitName::Validation, SplitName::Test, SplitName::All})
    if (to_string(s) == name) return s;
  throw ConfigError("unknown split '" + std::string(name) + "' (valid: train, val, test, all)");
}

std::vector<Index> Dataset::indices(SplitName which) const {
  switch (which) {
    case SplitName::Train:
      return split.train;
    case SplitName::Validation:
      return split.validation;
    case SplitName::Test:
      return split.test;
    case SplitName::All:
      break;
  }
  std::vector<Index> all(static_cast<std::size_t>(size()));
  std::iota(all.begin(), all.end(), Index{0});
  return all;
}

Dataset generate(const ScenarioSpec& spec) {
  validate(spec);
  const Index n = static_cast<Index>(spec.n);
  const Index d = feature_dim_of(spec);

  Dataset ds;
  ds.spec = spec;

  std::vector<double> sigmas(static_cast<std::size_t>(d));
  for (Index k = 0; k < d; ++k)
    sigmas[static_cast<std::size_t>(k)] = d == 1 ? 1.0 : 1.0 + 4.0 * static_cast<double>(k) / static_cast<double>(d - 1);

  {
    std::mt19937_64 rng = make_stream(spec.seed, Stream::Features);
    std::normal_distribution<double> normal(0.0, 1.0);
    ds.features.resize(n, d);
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < d; ++k) ds.features(i, k) = sigmas[static_cast<std::size_t>(k)] * normal(rng);
  }

  {
    std::mt19937_64 rng = make_stream(spec.seed, Stream::Split);
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(kTrainFraction * static_cast<double>(n)));
    const auto n_val = static_cast<std::size_t>(std::llround(kValidationFraction * static_cast<double>(n)));
    ds.split.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.split.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
    ds.split.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  }

  if (!spec.partition.empty()) {
    ds.partition = spec.partition;
  } else if (is_product(spec.scenario)) {
    ds.partition = default_product_partition(spec.scenario);
  } else {
    std::mt19937_64 rng = make_stream(spec.seed, Stream::Partition);
    for (const auto& name : head_names(spec.scenario)) {
      std::vector<Index> all(static_cast<std::size_t>(d));
      std::iota(all.begin(), all.end(), Index{0});
      std::shuffle(all.begin(), all.end(), rng);
      all.resize(static_cast<std::size_t>(spec.subset_size));
      std::sort(all.begin(), all.end());
      ds.partition[name] = std::move(all);
    }
  }

  if (is_product(spec.scenario))
    generate_product_heads(spec, ds);
  else
    generate_surrogate_heads(spec, sigmas, ds);

  // Composed truths come from the same formulas the model uses.
  const auto g = graph::build_graph(graph::preset_description(preset_for(spec.scenario), d));
  graph::Values heads;
  for (const auto& h : g.heads()) heads.emplace(h.name, ds.true_probs.at(h.name));
  for (auto& [name, v] : graph::eval_graph(g, heads)) ds.true_probs[name] = std::move(v);

  draw_labels(spec, ds);
  return ds;
}

Dataset hide_variable(Dataset ds, std::string_view name) {
  auto it = ds.labels.find(name);
  if (it == ds.labels.end()) {
    const bool already = std::find(ds.hidden.begin(), ds.hidden.end(), name) != ds.hidden.end();
    throw ConfigError("cannot hide '" + std::string(name) + "': " +
                      (already ? "already hidden" : "not an observed label"));
  }
  if (!ds.true_probs.contains(name))
    throw ConfigError("cannot hide '" + std::string(name) + "': no truth to retain for scoring");
  ds.labels.erase(it);
  ds.hidden.emplace_back(name);
  return ds;
}

loss::AggregateTargets true_aggregates(const Dataset& ds, SplitName split) {
  const auto rows = ds.indices(split);
  if (rows.empty()) throw ConfigError("true_aggregates: split '" + std::string(to_string(split)) + "' is empty");
  auto mean_over = [&](const Vector& v) {
    double s = 0.0;
    for (Index i : rows) s += v(i);
    return s / static_cast<double>(rows.size());
  };
  loss::AggregateTargets t;
  for (const auto& [name, probs] : ds.true_probs) {
    auto lab = ds.labels.find(name);
    t[name] = lab != ds.labels.end() ? mean_over(lab->second) : mean_over(probs);
  }
  for (const auto& [name, lab] : ds.labels)
    if (!t.contains(name)) t[name] = mean_over(lab);
  return t;
}

Matrix gather_rows(const Matrix& m, const std::vector<Index>& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Index>(r)) = m.row(rows[r]);
  return out;
}

Vector gather(const Vector& v, const std::vector<Index>& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) out(static_cast<Index>(r)) = v(rows[r]);
  return out;
}

std::filesystem::path sidecar_path_for(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& csv_path,
                  const std::filesystem::path& sidecar_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw ConfigError("cannot write dataset file " + csv_path.string());
  const Index d = ds.features.cols();
  for (Index k = 0; k < d; ++k) csv << (k ? "," : "") << 'x' << k;
  for (const auto& [name, v] : ds.labels) csv << ',' << name;
  for (const auto& [name, v] : ds.true_probs) csv << ",p_" << name;
  csv << '\n';
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index k = 0; k < d; ++k) csv << (k ? "," : "") << detail::format_double(ds.features(i, k));
    for (const auto& [name, v] : ds.labels) csv << ',' << (v(i) > 0.5 ? '1' : '0');
    for (const auto& [name, v] : ds.true_probs) csv << ',' << detail::format_double(v(i));
    csv << '\n';
  }
  if (!csv) throw ConfigError("failed writing dataset file " + csv_path.string());

  json j;
  j["format"] = "disentangle-dataset/1";
  j["spec"] = spec_json(ds.spec);
  j["rows"] = ds.size();
  j["feature_dim"] = d;
  j["hidden"] = ds.hidden;
  j["partition"] = json::object();
  for (const auto& [k, v] : ds.partition) j["partition"][k] = v;
  j["weights"] = json::object();
  for (const auto& [k, v] : ds.weights) j["weights"][k] = v;
  j["biases"] = json::object();
  for (const auto& [k, v] : ds.biases) j["biases"][k] = v;
  j["split"] = {{"train", ds.split.train}, {"val", ds.split.validation}, {"test", ds.split.test}};
  std::ofstream side(sidecar_path, std::ios::binary);
  if (!side) throw ConfigError("cannot write sidecar file " + sidecar_path.string());
  side << j.dump(1) << '\n';
  if (!side) throw ConfigError("failed writing sidecar file " + sidecar_path.string());
}

Dataset load_dataset(const std::filesystem::path& csv_path, const std::filesystem::path& sidecar_path) {
  std::ifstream side(sidecar_path, std::ios::binary);
  if (!side) throw ConfigError("cannot read sidecar file " + sidecar_path.string());
  json j;
  try {
    j = json::parse(side);
  } catch (const json::exception& e) {
    throw ConfigError("sidecar " + sidecar_path.string() + " is not valid JSON: " + e.what());
  }
  if (j.value("format", "") != "disentangle-dataset/1")
    throw ConfigError("sidecar " + sidecar_path.string() + " has an unknown format");

  Dataset ds;
  try {
    ds.spec = spec_from_json(j.at("spec").dump());
    ds.hidden = j.at("hidden").get<std::vector<std::string>>();
    for (const auto& [k, v] : j.at("partition").items()) ds.partition[k] = v.get<std::vector<Index>>();
    for (const auto& [k, v] : j.at("weights").items()) ds.weights[k] = v.get<std::vector<double>>();
    for (const auto& [k, v] : j.at("biases").items()) ds.biases[k] = v.get<double>();
    ds.split.train = j.at("split").at("train").get<std::vector<Index>>();
    ds.split.validation = j.at("split").at("val").get<std::vector<Index>>();
    ds.split.test = j.at("split").at("test").get<std::vector<Index>>();
  } catch (const json::exception& e) {
    throw ConfigError("sidecar " + sidecar_path.string() + ": " + e.what());
  }
  const Index rows = j.at("rows").get<Index>();
  const Index d = j.at("feature_dim").get<Index>();

  std::ifstream csv(csv_path, std::ios::binary);
  if (!csv) throw ConfigError("cannot read dataset file " + csv_path.string());
  std::string line;
  if (!std::getline(csv, line)) throw ConfigError("dataset file " + csv_path.string() + " has no header");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (static_cast<Index>(header.size()) < d) throw ConfigError("dataset header has too few columns");
  for (Index k = 0; k < d; ++k)
    if (header[static_cast<std::size_t>(k)] != "x" + std::to_string(k))
      throw ConfigError("dataset header column " + std::to_string(k) + " should be x" + std::to_string(k));

  ds.features.resize(rows, d);
  std::vector<Vector> cols(header.size() - static_cast<std::size_t>(d), Vector(rows));
  Index r = 0;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    if (r >= rows) throw ConfigError("dataset file has more rows than its sidecar declares");
    std::size_t start = 0, c = 0;
    while (true) {
      const std::size_t end = line.find(',', start);
      const std::string_view cell(line.data() + start, (end == std::string::npos ? line.size() : end) - start);
      if (c >= header.size()) throw ConfigError("dataset row " + std::to_string(r) + " has too many cells");
      const double v = detail::parse_double(cell);
      if (c < static_cast<std::size_t>(d))
        ds.features(r, static_cast<Index>(c)) = v;
      else
        cols[c - static_cast<std::size_t>(d)](r) = v;
      ++c;
      if (end == std::string::npos) break;
      start = end + 1;
    }
    if (c != header.size()) throw ConfigError("dataset row " + std::to_string(r) + " has too few cells");
    ++r;
  }
  if (r != rows) throw ConfigError("dataset file has fewer rows than its sidecar declares");

  for (std::size_t c = static_cast<std::size_t>(d); c < header.size(); ++c) {
    const std::string& name = header[c];
    auto& v = cols[c - static_cast<std::size_t>(d)];
    if (name.rfind("p_", 0) == 0)
      ds.true_probs[name.substr(2)] = std::move(v);
    else
      ds.labels[name] = std::move(v);
  }

  std::vector<bool> seen(static_cast<std::size_t>(rows), false);
  for (const auto* part : {&ds.split.train, &ds.split.validation, &ds.split.test})
    for (Index i : *part) {
      if (i < 0 || i >= rows || seen[static_cast<std::size_t>(i)])
        throw ConfigError("sidecar split indices are out of range or overlap");
      seen[static_cast<std::size_t>(i)] = true;
    }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw ConfigError("sidecar split does not cover every row");
  return ds;
}

}  // namespace disentangle::data
