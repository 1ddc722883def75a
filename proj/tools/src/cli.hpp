#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace disentangle::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Parses argv-style arguments (args[0] is the program name), runs the
/// command and maps failures to exit codes 2 (config/data) and 3 (numerical).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace disentangle::cli
