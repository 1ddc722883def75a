#include "config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "disentangle/errors.hpp"

namespace disentangle::cli {

namespace {

using json = nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError("unknown key '" + key + "' in " + std::string(where));
}

// Null counts as absent so a materialized config loads back unchanged.
bool has(const json& j, const char* key) { return j.contains(key) && !j.at(key).is_null(); }

template <typename T>
T get_as(const json& j, const char* key, std::string_view where) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string(where) + "." + key + " has the wrong type");
  }
}

graph::Formula parse_formula(const json& j) {
  if (j.is_string()) return graph::Formula::ref(j.get<std::string>());
  if (!j.is_object() || j.size() != 1)
    throw ConfigError("a formula is a name or an object with one of product/complement/sum");
  const auto& [op, arg] = *j.items().begin();
  if (op == "product") {
    if (!arg.is_array()) throw ConfigError("product takes an array of formulas");
    std::vector<graph::Formula> factors;
    for (const auto& f : arg) factors.push_back(parse_formula(f));
    return graph::Formula::product(std::move(factors));
  }
  if (op == "complement") return graph::Formula::complement(parse_formula(arg));
  if (op == "sum") {
    if (!arg.is_array()) throw ConfigError("sum takes an array of {weight, term} objects");
    std::vector<std::pair<double, graph::Formula>> terms;
    for (const auto& t : arg) {
      reject_unknown(t, {"weight", "term"}, "sum term");
      if (!has(t, "weight") || !has(t, "term")) throw ConfigError("sum term needs weight and term");
      terms.emplace_back(get_as<double>(t, "weight", "sum term"), parse_formula(t.at("term")));
    }
    return graph::Formula::weighted_sum(std::move(terms));
  }
  throw ConfigError("unknown formula operator '" + op + "'");
}

json formula_to_json(const graph::Formula& f) {
  using K = graph::Formula::Kind;
  switch (f.kind()) {
    case K::Ref:
      return f.name();
    case K::Product: {
      json arr = json::array();
      for (const auto& c : f.children()) arr.push_back(formula_to_json(c));
      return json{{"product", arr}};
    }
    case K::Complement:
      return json{{"complement", formula_to_json(f.children()[0])}};
    case K::WeightedSum: {
      json arr = json::array();
      for (std::size_t i = 0; i < f.children().size(); ++i)
        arr.push_back(json{{"weight", f.weights()[i]}, {"term", formula_to_json(f.children()[i])}});
      return json{{"sum", arr}};
    }
  }
  throw InternalError("unhandled formula kind");
}

std::vector<graph::NodeDecl> parse_nodes(const json& j, std::string_view where) {
  if (!j.is_array()) throw ConfigError(std::string(where) + " must be an array");
  std::vector<graph::NodeDecl> out;
  for (const auto& n : j) {
    reject_unknown(n, {"name", "formula"}, where);
    if (!has(n, "name") || !has(n, "formula"))
      throw ConfigError(std::string(where) + " entries need name and formula");
    out.push_back({get_as<std::string>(n, "name", where), parse_formula(n.at("formula"))});
  }
  return out;
}

graph::GraphDescription parse_graph(const json& j) {
  reject_unknown(j, {"heads", "observed", "aggregate"}, "graph");
  graph::GraphDescription d;
  if (!has(j, "heads") || !j.at("heads").is_array()) throw ConfigError("graph.heads must be an array");
  for (const auto& h : j.at("heads")) {
    reject_unknown(h, {"name", "features", "hidden", "activation"}, "graph head");
    graph::LatentHead head;
    head.name = get_as<std::string>(h, "name", "graph head");
    head.feature_subset = get_as<std::vector<nn::Index>>(h, "features", "graph head");
    if (has(h, "hidden")) head.hidden_layers = get_as<std::vector<nn::Index>>(h, "hidden", "graph head");
    if (has(h, "activation"))
      head.hidden_activation = nn::parse_activation(get_as<std::string>(h, "activation", "graph head"));
    d.heads.push_back(std::move(head));
  }
  if (has(j, "observed")) d.observed = parse_nodes(j.at("observed"), "graph.observed");
  if (has(j, "aggregate")) d.aggregate = parse_nodes(j.at("aggregate"), "graph.aggregate");
  // Validate eagerly so configuration mistakes surface before any data work.
  (void)graph::build_graph(d);
  return d;
}

json graph_to_json(const graph::GraphDescription& d) {
  json heads = json::array();
  for (const auto& h : d.heads)
    heads.push_back(json{{"name", h.name},
                         {"features", h.feature_subset},
                         {"hidden", h.hidden_layers},
                         {"activation", std::string(nn::to_string(h.hidden_activation))}});
  auto nodes = [](const std::vector<graph::NodeDecl>& v) {
    json arr = json::array();
    for (const auto& n : v) arr.push_back(json{{"name", n.name}, {"formula", formula_to_json(n.formula)}});
    return arr;
  };
  return json{{"heads", heads}, {"observed", nodes(d.observed)}, {"aggregate", nodes(d.aggregate)}};
}

void parse_train(const json& j, ExperimentConfig& cfg) {
  reject_unknown(j,
                 {"strategy", "lambda", "alpha", "epochs", "batch_size", "seed", "learning_rate", "beta1",
                  "beta2", "epsilon"},
                 "train");
  auto& t = cfg.train;
  if (has(j, "strategy")) t.strategy = loss::parse_strategy(get_as<std::string>(j, "strategy", "train"));
  if (has(j, "lambda")) {
    t.lambda = get_as<double>(j, "lambda", "train");
    cfg.lambda_given = true;
  }
  if (has(j, "alpha")) t.alpha = get_as<double>(j, "alpha", "train");
  if (has(j, "epochs")) t.epochs = get_as<int>(j, "epochs", "train");
  if (has(j, "batch_size")) t.batch_size = get_as<std::size_t>(j, "batch_size", "train");
  if (has(j, "seed")) t.seed = get_as<std::uint64_t>(j, "seed", "train");
  if (has(j, "learning_rate")) t.optimizer.learning_rate = get_as<double>(j, "learning_rate", "train");
  if (has(j, "beta1")) t.optimizer.beta1 = get_as<double>(j, "beta1", "train");
  if (has(j, "beta2")) t.optimizer.beta2 = get_as<double>(j, "beta2", "train");
  if (has(j, "epsilon")) t.optimizer.epsilon = get_as<double>(j, "epsilon", "train");
}

std::vector<data::ScenarioSpec> parse_scenarios(const json& j, bool list) {
  std::vector<data::ScenarioSpec> out;
  if (!list) {
    out.push_back(data::spec_from_json(j.dump()));
  } else {
    if (!j.is_array()) throw ConfigError("scenarios must be an array");
    for (const auto& s : j) out.push_back(data::spec_from_json(s.dump()));
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j,
                 {"scenario", "scenarios", "dataset", "model", "graph", "hidden_layers", "known_partition",
                  "train", "lambda_grid", "strategies", "targets", "seeds", "jobs", "output_dir"},
                 "config");

  ExperimentConfig cfg;
  if (has(j, "scenario") && has(j, "scenarios"))
    throw ConfigError("config may set scenario or scenarios, not both");
  if (has(j, "scenario")) cfg.scenarios = parse_scenarios(j.at("scenario"), false);
  if (has(j, "scenarios")) cfg.scenarios = parse_scenarios(j.at("scenarios"), true);
  if (has(j, "dataset")) cfg.dataset = get_as<std::string>(j, "dataset", "config");
  if (has(j, "model")) cfg.model = get_as<std::string>(j, "model", "config");
  if (has(j, "graph")) cfg.graph = parse_graph(j.at("graph"));
  if (has(j, "hidden_layers")) cfg.hidden_layers = get_as<std::vector<nn::Index>>(j, "hidden_layers", "config");
  if (has(j, "known_partition")) cfg.known_partition = get_as<bool>(j, "known_partition", "config");
  if (has(j, "train")) parse_train(j.at("train"), cfg);
  if (has(j, "lambda_grid")) cfg.lambda_grid = get_as<std::vector<double>>(j, "lambda_grid", "config");
  if (has(j, "strategies")) {
    cfg.strategies.clear();
    for (const auto& s : get_as<std::vector<std::string>>(j, "strategies", "config"))
      cfg.strategies.push_back(loss::parse_strategy(s));
  }
  if (has(j, "targets")) {
    const auto& t = j.at("targets");
    reject_unknown(t, {"split", "overrides"}, "targets");
    if (has(t, "split")) cfg.target_split = data::parse_split(get_as<std::string>(t, "split", "targets"));
    if (has(t, "overrides"))
      for (const auto& [k, v] : get_as<std::map<std::string, double>>(t, "overrides", "targets"))
        cfg.target_overrides[k] = v;
  }
  if (has(j, "seeds")) {
    const auto s = get_as<std::vector<std::uint64_t>>(j, "seeds", "config");
    if (s.size() != 2) throw ConfigError("seeds must hold exactly two values");
    cfg.seeds = {s[0], s[1]};
  }
  if (has(j, "jobs")) cfg.jobs = get_as<unsigned>(j, "jobs", "config");
  if (has(j, "output_dir")) cfg.output_dir = get_as<std::string>(j, "output_dir", "config");

  train::validate(cfg.train);
  for (const auto& s : cfg.scenarios) data::validate(s);
  if (cfg.lambda_grid.empty()) throw ConfigError("lambda_grid is empty");
  for (double l : cfg.lambda_grid)
    if (!(l >= 0.0)) throw ConfigError("lambda_grid values must be >= 0");
  if (cfg.strategies.empty()) throw ConfigError("strategies is empty");
  if (cfg.jobs == 0) throw ConfigError("jobs must be positive");
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json scenarios = json::array();
  for (const auto& s : cfg.scenarios) scenarios.push_back(json::parse(data::spec_to_json(s)));
  json strategies = json::array();
  for (auto s : cfg.strategies) strategies.push_back(std::string(loss::to_string(s)));
  auto path_or_null = [](const std::optional<std::filesystem::path>& p) {
    return p ? json(p->generic_string()) : json(nullptr);
  };
  const auto& t = cfg.train;
  json j{
      {"scenarios", scenarios},
      {"dataset", path_or_null(cfg.dataset)},
      {"model", path_or_null(cfg.model)},
      {"graph", cfg.graph ? graph_to_json(*cfg.graph) : json(nullptr)},
      {"hidden_layers", cfg.hidden_layers},
      {"known_partition", cfg.known_partition ? json(*cfg.known_partition) : json(nullptr)},
      {"train",
       {{"strategy", std::string(loss::to_string(t.strategy))},
        {"lambda", cfg.lambda_given ? json(t.lambda) : json(nullptr)},
        {"alpha", t.alpha},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"seed", t.seed},
        {"learning_rate", t.optimizer.learning_rate},
        {"beta1", t.optimizer.beta1},
        {"beta2", t.optimizer.beta2},
        {"epsilon", t.optimizer.epsilon}}},
      {"lambda_grid", cfg.lambda_grid},
      {"strategies", strategies},
      {"targets",
       {{"split", std::string(data::to_string(cfg.target_split))},
        {"overrides", std::map<std::string, double>(cfg.target_overrides.begin(), cfg.target_overrides.end())}}},
      {"seeds", {cfg.seeds.first, cfg.seeds.second}},
      {"jobs", cfg.jobs},
      {"output_dir", path_or_null(cfg.output_dir)},
  };
  return j.dump(2);
}

void apply_overrides(ExperimentConfig& cfg, const Overrides& o) {
  if (o.scenario) {
    data::ScenarioSpec s;
    s.scenario = data::parse_scenario(*o.scenario);
    cfg.scenarios = {s};
  }
  if (o.seed) {
    for (auto& s : cfg.scenarios) s.seed = *o.seed;
    cfg.train.seed = *o.seed;
    cfg.seeds = {*o.seed, *o.seed + 1};
  }
  if (o.n) {
    for (auto& s : cfg.scenarios) s.n = *o.n;
  } else if (o.full_size) {
    for (auto& s : cfg.scenarios) s.n = kFullSizeRows;
  }
  if (o.lambda) {
    cfg.train.lambda = *o.lambda;
    cfg.lambda_given = true;
  }
  if (o.alpha) cfg.train.alpha = *o.alpha;
  if (o.strategy) {
    cfg.train.strategy = loss::parse_strategy(*o.strategy);
    cfg.strategies = {cfg.train.strategy};
  }
  if (o.epochs) cfg.train.epochs = *o.epochs;
  if (o.batch_size) cfg.train.batch_size = *o.batch_size;
  if (o.jobs) {
    if (*o.jobs == 0) throw ConfigError("--jobs must be positive");
    cfg.jobs = *o.jobs;
  }
  if (o.dataset) cfg.dataset = *o.dataset;
  if (o.model) cfg.model = *o.model;
  if (o.out) cfg.output_dir = *o.out;
  train::validate(cfg.train);
  for (const auto& s : cfg.scenarios) data::validate(s);
}

std::filesystem::path output_root(const ExperimentConfig& cfg) {
  if (cfg.output_dir) return *cfg.output_dir;
  if (const char* env = std::getenv("DISENTANGLE_OUT"); env != nullptr && *env != '\0') return env;
  return "out";
}

}  // namespace disentangle::cli
