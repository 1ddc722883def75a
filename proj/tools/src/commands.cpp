#include "commands.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "disentangle/errors.hpp"
#include "disentangle/metrics.hpp"
#include "manifest.hpp"

namespace disentangle::cli {

namespace {

namespace fs = std::filesystem;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

class Run {
 public:
  Run(Command command, ExperimentConfig& cfg, const fs::path& config_path, std::ostream& log)
      : command_(command), cfg_(cfg), log_(log), root_(output_root(cfg)) {
    if (!config_path.empty()) inputs_.push_back(config_path);
    std::error_code ec;
    fs::create_directories(root_, ec);
    if (ec || !fs::is_directory(root_))
      throw ConfigError("cannot create output directory " + root_.string());
  }

  [[nodiscard]] const fs::path& root() const { return root_; }
  std::ostream& log() { return log_; }

  void add_input(const fs::path& p) { inputs_.push_back(p); }
  void add_output(const fs::path& p) { outputs_.push_back(p); }

  /// Writes through a single stream and records the file for the manifest.
  template <typename Fn>
  fs::path write(const std::string& name, Fn&& fill) {
    const fs::path path = root_ / name;
    {
      std::ofstream out(path, std::ios::binary | std::ios::trunc);
      if (!out) throw ConfigError("cannot write " + path.string());
      fill(out);
      out.flush();
      if (!out) throw ConfigError("write failed for " + path.string());
    }
    outputs_.push_back(path);
    return path;
  }

  void finish(std::uint64_t seed) {
    Manifest m;
    m.command = std::string(to_string(command_));
    m.config_json = config_to_json(cfg_);
    m.seed = seed;
    m.inputs = inputs_;
    m.outputs = outputs_;
    write_manifest(root_, m);
    log_ << "wrote " << outputs_.size() << " file(s) and manifest.json to " << root_.generic_string() << '\n';
  }

 private:
  Command command_;
  ExperimentConfig& cfg_;
  std::ostream& log_;
  fs::path root_;
  std::vector<fs::path> inputs_;
  std::vector<fs::path> outputs_;
};

data::Dataset resolve_dataset(Run& run, ExperimentConfig& cfg) {
  if (cfg.dataset) {
    const fs::path csv = *cfg.dataset;
    const fs::path sidecar = data::sidecar_path_for(csv);
    auto ds = data::load_dataset(csv, sidecar);
    run.add_input(csv);
    run.add_input(sidecar);
    cfg.scenarios = {ds.spec};
    return ds;
  }
  if (cfg.scenarios.empty()) throw InternalError("scenario defaults were not materialized");
  return data::generate(cfg.scenarios.front());
}

train::ExperimentOptions options_from(const ExperimentConfig& cfg) {
  train::ExperimentOptions o;
  o.base = cfg.train;
  o.lambda_grid = cfg.lambda_grid;
  if (cfg.lambda_given) o.fixed_lambda = cfg.train.lambda;
  o.hidden_layers = cfg.hidden_layers;
  o.known_partition = cfg.known_partition;
  o.target_split = cfg.target_split;
  o.target_overrides = cfg.target_overrides;
  o.jobs = cfg.jobs;
  return o;
}

graph::EventGraph model_graph(const ExperimentConfig& cfg, const data::Dataset& ds) {
  if (cfg.graph) return graph::build_graph(*cfg.graph);
  return train::graph_for(ds, cfg.known_partition.value_or(data::partition_known(ds.spec.scenario)),
                          cfg.hidden_layers);
}

std::vector<std::string> target_variables(const ExperimentConfig& cfg, const data::Dataset& ds,
                                          const graph::EventGraph& g) {
  if (!cfg.graph) return graph::reported_variables(data::preset_for(ds.spec.scenario));
  std::vector<std::string> out;
  for (const auto& v : g.variable_names())
    if (ds.labels.contains(v) || ds.true_probs.contains(v)) out.push_back(v);
  return out;
}

void write_history(std::ostream& os, const train::TrainHistory& h) {
  os << "epoch,split,bce,aggregate,total,lambda\n";
  for (std::size_t e = 0; e < h.epochs.size(); ++e) {
    const auto row = [&](const char* split, const loss::LossReport& r) {
      os << e << ',' << split << ',' << shortest(r.bce) << ',' << shortest(r.aggregate) << ','
         << shortest(r.total) << ',' << shortest(r.lambda) << '\n';
    };
    row("train", h.epochs[e].train);
    row("val", h.epochs[e].validation);
  }
}

struct ScaleRow {
  std::string scenario, strategy;
  double lambda;
  const std::map<std::string, graph::ScaleDiagnostic>* scale;
};

void write_scale(std::ostream& os, const std::vector<ScaleRow>& rows) {
  os << "scenario,strategy,lambda,head,mean_ratio,cv,count,excluded\n";
  for (const auto& r : rows)
    for (const auto& [head, d] : *r.scale)
      os << r.scenario << ',' << r.strategy << ',' << shortest(r.lambda) << ',' << head << ','
         << fixed(d.mean_ratio, 6) << ',' << fixed(d.coefficient_of_variation, 6) << ',' << d.count << ','
         << d.excluded << '\n';
}

void print_scores(std::ostream& log, const metrics::EvalReport& report) {
  for (const auto& s : report.scores)
    log << "  " << s.variable << " (" << metrics::to_string(s.role) << "): MSE "
        << fixed(s.mse * metrics::kMseScale, 3) << " x1e3, MAPE " << fixed(s.mape * metrics::kMapeScale, 2)
        << " %\n";
}

void cmd_gen(Run& run, ExperimentConfig& cfg) {
  for (const auto& spec : cfg.scenarios) {
    const auto ds = data::generate(spec);
    const std::string stem(data::to_string(spec.scenario));
    const fs::path csv = run.root() / (stem + ".csv");
    data::save_dataset(ds, csv, data::sidecar_path_for(csv));
    run.add_output(csv);
    run.add_output(data::sidecar_path_for(csv));
    auto& log = run.log();
    log << stem << ": " << ds.size() << " rows (train " << ds.split.train.size() << ", val "
        << ds.split.validation.size() << ", test " << ds.split.test.size() << "), " << ds.features.cols()
        << " features\n";
    for (const auto& [name, y] : ds.labels) log << "  label " << name << " rate " << fixed(y.mean(), 4) << '\n';
    const auto g = train::graph_for(ds, true, {});
    for (const auto& h : g.heads())
      log << "  head " << h.name << " true probability max " << fixed(ds.true_probs.at(h.name).maxCoeff(), 4)
          << " mean " << fixed(ds.true_probs.at(h.name).mean(), 4) << '\n';
  }
}

void cmd_train(Run& run, ExperimentConfig& cfg) {
  const auto ds = resolve_dataset(run, cfg);
  const auto g = model_graph(cfg, ds);
  const auto opts = options_from(cfg);
  const auto targets = train::experiment_targets(ds, opts, target_variables(cfg, ds, g));

  std::vector<double> grid = cfg.lambda_grid;
  if (cfg.lambda_given) grid = {cfg.train.lambda};
  const auto choice = train::train_with_lambda_grid(g, ds, cfg.train, targets, grid);
  const auto report = train::evaluate(choice.result.model, ds, data::SplitName::Test);
  const auto scale = train::scale_diagnostics(choice.result.model, ds, data::SplitName::Test);
  const std::string scenario(data::to_string(ds.spec.scenario));
  const std::string strategy(loss::to_string(cfg.train.strategy));

  run.write("model.txt", [&](std::ostream& os) { train::write_model(os, choice.result.model); });
  run.write("history.csv", [&](std::ostream& os) { write_history(os, choice.result.history); });
  if (!choice.scores.empty())
    run.write("lambda_search.csv", [&](std::ostream& os) {
      os << "lambda,best_validation_total\n";
      for (const auto& [l, s] : choice.scores) os << shortest(l) << ',' << shortest(s) << '\n';
    });
  run.write("report.csv", [&](std::ostream& os) {
    std::vector<metrics::ReportRow> rows;
    metrics::append_rows(rows, report, scenario, strategy, choice.lambda);
    metrics::write_report(os, rows);
  });
  run.write("scale.csv", [&](std::ostream& os) { write_scale(os, {{scenario, strategy, choice.lambda, &scale}}); });

  auto& log = run.log();
  log << scenario << " " << strategy << " lambda " << shortest(choice.lambda) << ", best epoch "
      << choice.result.history.best_epoch << " of " << choice.result.history.epochs.size() << '\n';
  print_scores(log, report);
}

void cmd_eval(Run& run, ExperimentConfig& cfg) {
  const auto ds = resolve_dataset(run, cfg);
  const auto g = model_graph(cfg, ds);
  train::Model model = train::init_model(g, cfg.train.seed);
  if (cfg.model) {
    std::ifstream in(*cfg.model, std::ios::binary);
    if (!in) throw ConfigError("cannot read model " + cfg.model->string());
    model.heads = train::read_model_heads(in, g);
    run.add_input(*cfg.model);
  } else {
    run.log() << "no model given; scoring freshly initialized heads\n";
  }
  const auto report = train::evaluate(model, ds, data::SplitName::Test);
  const auto scale = train::scale_diagnostics(model, ds, data::SplitName::Test);
  const std::string scenario(data::to_string(ds.spec.scenario));
  const std::string label = cfg.model ? "model" : "untrained";
  run.write("report.csv", [&](std::ostream& os) {
    std::vector<metrics::ReportRow> rows;
    metrics::append_rows(rows, report, scenario, label, 0.0);
    metrics::write_report(os, rows);
  });
  run.write("scale.csv", [&](std::ostream& os) { write_scale(os, {{scenario, label, 0.0, &scale}}); });
  print_scores(run.log(), report);
}

void cmd_benchmark(Run& run, ExperimentConfig& cfg) {
  if (cfg.dataset) throw ConfigError("benchmark generates its own datasets; remove 'dataset'");
  if (cfg.graph) throw ConfigError("benchmark uses the scenario presets; remove 'graph'");
  const auto cells = train::run_scenario_benchmark(cfg.scenarios, cfg.strategies, options_from(cfg));

  std::vector<metrics::ReportRow> rows;
  std::vector<ScaleRow> scale_rows;
  for (const auto& c : cells) {
    const std::string scenario(data::to_string(c.scenario));
    const std::string strategy(loss::to_string(c.strategy));
    metrics::append_rows(rows, c.report, scenario, strategy, c.lambda);
    scale_rows.push_back({scenario, strategy, c.lambda, &c.scale});
  }
  run.write("report.csv", [&](std::ostream& os) { metrics::write_report(os, rows); });
  run.write("scale.csv", [&](std::ostream& os) { write_scale(os, scale_rows); });

  auto& log = run.log();
  for (const auto& c : cells) {
    log << data::to_string(c.scenario) << " " << loss::to_string(c.strategy) << " (lambda "
        << shortest(c.lambda) << ")\n";
    print_scores(log, c.report);
  }
}

void cmd_correctness(Run& run, ExperimentConfig& cfg) {
  const auto ds = resolve_dataset(run, cfg);
  const auto results = train::run_correctness(ds, cfg.strategies, options_from(cfg));
  std::vector<metrics::ReportRow> rows;
  for (const auto& r : results)
    metrics::append_rows(rows, r.report, data::to_string(ds.spec.scenario), loss::to_string(r.strategy),
                         r.lambda);
  run.write("report.csv", [&](std::ostream& os) { metrics::write_report(os, rows); });
  for (const auto& r : results) {
    run.log() << loss::to_string(r.strategy) << " (lambda " << shortest(r.lambda) << "), Send hidden\n";
    print_scores(run.log(), r.report);
  }
}

void cmd_consistency(Run& run, ExperimentConfig& cfg) {
  const auto ds = resolve_dataset(run, cfg);
  const auto results = train::run_consistency(ds, cfg.strategies, cfg.seeds, options_from(cfg));
  std::vector<metrics::ReportRow> rows;
  for (const auto& r : results)
    metrics::append_rows(rows, r.report, data::to_string(ds.spec.scenario), loss::to_string(r.strategy),
                         r.lambda);
  run.write("report.csv", [&](std::ostream& os) { metrics::write_report(os, rows); });

  auto& log = run.log();
  log << "agreement (%) between seeds " << cfg.seeds.first << " and " << cfg.seeds.second << '\n';
  for (const auto& r : results) {
    log << "  " << loss::to_string(r.strategy) << " (lambda " << shortest(r.lambda) << ")\n";
    for (const auto& a : r.report.agreements)
      log << "    " << a.variable << " " << fixed(a.fraction * 100.0, 2) << '\n';
  }
}

}  // namespace

void materialize_defaults(Command command, ExperimentConfig& cfg) {
  if (!cfg.scenarios.empty() || cfg.dataset) return;
  std::vector<data::Scenario> defaults;
  switch (command) {
    case Command::Benchmark:
      defaults = data::product_scenarios();
      break;
    case Command::Correctness:
      defaults = {data::Scenario::EmailChain};
      break;
    case Command::Consistency:
      defaults = {data::Scenario::SearchDag};
      break;
    default:
      defaults = {data::Scenario::IndCovKwn};
  }
  for (auto s : defaults) {
    data::ScenarioSpec spec;
    spec.scenario = s;
    cfg.scenarios.push_back(spec);
  }
}

std::string_view to_string(Command c) {
  switch (c) {
    case Command::Gen:
      return "gen";
    case Command::Train:
      return "train";
    case Command::Eval:
      return "eval";
    case Command::Benchmark:
      return "benchmark";
    case Command::Correctness:
      return "correctness";
    case Command::Consistency:
      return "consistency";
  }
  return "?";
}

Command parse_command(std::string_view name) {
  for (auto c : {Command::Gen, Command::Train, Command::Eval, Command::Benchmark, Command::Correctness,
                 Command::Consistency})
    if (to_string(c) == name) return c;
  throw ConfigError("unknown command '" + std::string(name) + "'");
}

void run_command(Command command, ExperimentConfig cfg, const std::filesystem::path& config_path,
                 std::ostream& log) {
  Run run(command, cfg, config_path, log);
  switch (command) {
    case Command::Gen:
      cmd_gen(run, cfg);
      break;
    case Command::Train:
      cmd_train(run, cfg);
      break;
    case Command::Eval:
      cmd_eval(run, cfg);
      break;
    case Command::Benchmark:
      cmd_benchmark(run, cfg);
      break;
    case Command::Correctness:
      cmd_correctness(run, cfg);
      break;
    case Command::Consistency:
      cmd_consistency(run, cfg);
      break;
  }
  run.finish(cfg.scenarios.empty() ? cfg.train.seed : cfg.scenarios.front().seed);
}

}  // namespace disentangle::cli
