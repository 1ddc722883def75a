#include "cli.hpp"

#include <algorithm>
#include <ostream>

#include <CLI11.hpp>

#include "commands.hpp"
#include "config.hpp"
#include "disentangle/errors.hpp"

namespace disentangle::cli {

namespace {

struct RawFlags {
  std::string config;
  std::uint64_t seed = 0;
  double lambda = 0.0;
  double alpha = 0.0;
  std::string strategy;
  int epochs = 0;
  std::size_t batch_size = 0;
  bool full_size = false;
  std::string scenario;
  std::size_t n = 0;
  unsigned jobs = 0;
  std::string dataset;
  std::string model;
  std::string out;
};

struct Bound {
  CLI::Option *seed, *lambda, *alpha, *strategy, *epochs, *batch_size, *scenario, *n, *jobs, *dataset,
      *model, *out;
};

Bound add_flags(CLI::App& sub, RawFlags& f) {
  sub.add_option("--config,-c", f.config, "experiment config (JSON)");
  Bound b{};
  b.seed = sub.add_option("--seed", f.seed, "seed for data generation and training");
  b.lambda = sub.add_option("--lambda", f.lambda, "aggregate-loss weight (skips the grid search)");
  b.alpha = sub.add_option("--alpha", f.alpha, "smoothing weight for SAGG");
  b.strategy = sub.add_option("--strategy", f.strategy, "BCEL, AGGL or SAGG");
  b.epochs = sub.add_option("--epochs", f.epochs, "training epochs");
  b.batch_size = sub.add_option("--batch-size", f.batch_size, "mini-batch size");
  sub.add_flag("--full-size", f.full_size, "use 100000 rows instead of 20000");
  b.scenario = sub.add_option("--scenario", f.scenario, "scenario preset");
  b.n = sub.add_option("--n", f.n, "rows to generate");
  b.jobs = sub.add_option("--jobs", f.jobs, "parallel training cells");
  b.dataset = sub.add_option("--dataset", f.dataset, "dataset CSV (sidecar JSON alongside)");
  b.model = sub.add_option("--model", f.model, "model file for eval");
  b.out = sub.add_option("--out,-o", f.out, "output directory (default $DISENTANGLE_OUT or ./out)");
  return b;
}

Overrides collect(const RawFlags& f, const Bound& b) {
  Overrides o;
  if (b.seed->count()) o.seed = f.seed;
  if (b.lambda->count()) o.lambda = f.lambda;
  if (b.alpha->count()) o.alpha = f.alpha;
  if (b.strategy->count()) o.strategy = f.strategy;
  if (b.epochs->count()) o.epochs = f.epochs;
  if (b.batch_size->count()) o.batch_size = f.batch_size;
  o.full_size = f.full_size;
  if (b.scenario->count()) o.scenario = f.scenario;
  if (b.n->count()) o.n = f.n;
  if (b.jobs->count()) o.jobs = f.jobs;
  if (b.dataset->count()) o.dataset = f.dataset;
  if (b.model->count()) o.model = f.model;
  if (b.out->count()) o.out = f.out;
  return o;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Recover unobserved event probabilities from composite outcomes", "disentangle"};
  app.require_subcommand(1);

  RawFlags flags;
  std::vector<std::pair<Command, std::pair<CLI::App*, Bound>>> subs;
  const std::vector<std::pair<Command, const char*>> descriptions = {
      {Command::Gen, "generate a synthetic dataset"},
      {Command::Train, "train the heads of one graph"},
      {Command::Eval, "score a saved (or untrained) model on the test split"},
      {Command::Benchmark, "scenario x strategy grid"},
      {Command::Correctness, "email chain with Send hidden"},
      {Command::Consistency, "search DAG agreement across two seeds"},
  };
  for (const auto& [cmd, text] : descriptions) {
    auto* sub = app.add_subcommand(std::string(to_string(cmd)), text);
    subs.push_back({cmd, {sub, add_flags(*sub, flags)}});
  }

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    for (const auto& [cmd, entry] : subs) {
      const auto& [sub, bound] = entry;
      if (!sub->parsed()) continue;
      ExperimentConfig cfg = flags.config.empty() ? ExperimentConfig{} : load_config(flags.config);
      materialize_defaults(cmd, cfg);
      apply_overrides(cfg, collect(flags, bound));
      run_command(cmd, std::move(cfg), flags.config, out);
      return kExitOk;
    }
    throw InternalError("no subcommand parsed");
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const InternalError& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  } catch (const std::exception& e) {
    // ConfigError, ShapeError, EvaluationError and I/O failures.
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace disentangle::cli
