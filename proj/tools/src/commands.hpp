#pragma once

#include <filesystem>
#include <iosfwd>
#include <string_view>
#include <vector>

#include "config.hpp"

namespace disentangle::cli {

enum class Command { Gen, Train, Eval, Benchmark, Correctness, Consistency };

std::string_view to_string(Command c);
Command parse_command(std::string_view name);

/// Fills in the command's default scenarios when the config names neither
/// scenarios nor a dataset, so later overrides (seed, n) reach them.
void materialize_defaults(Command command, ExperimentConfig& cfg);

/// Runs one command, writing files under output_root(cfg) and a summary to
/// `log`. `config_path` (may be empty) is checksummed into the manifest.
/// Errors propagate as the library's exception types.
void run_command(Command command, ExperimentConfig cfg, const std::filesystem::path& config_path,
                 std::ostream& log);

}  // namespace disentangle::cli
