#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "disentangle/nn.hpp"

namespace disentangle::metrics {

using nn::Vector;

double mse(const Vector& estimated, const Vector& truth);

struct MapeResult {
  double value = 0.0;
  std::size_t used = 0;
  std::size_t filtered = 0;  // samples with truth <= 1e-6
};

/// Mean of |truth - est| / truth over samples with truth > 1e-6. Throws
/// ConfigError if every sample is filtered.
MapeResult mape_detailed(const Vector& estimated, const Vector& truth);
inline double mape(const Vector& estimated, const Vector& truth) {
  return mape_detailed(estimated, truth).value;
}

/// Fraction of samples on the same side of `threshold` in both runs.
double consistency(const Vector& run_a, const Vector& run_b, double threshold = 0.5);

enum class Role { Observed, Unobserved };
std::string_view to_string(Role r);

struct VariableScore {
  std::string variable;
  Role role = Role::Unobserved;
  double mse = 0.0;   // raw
  double mape = 0.0;  // raw fraction
  std::size_t mape_filtered = 0;
};

struct EvalReport {
  std::vector<VariableScore> scores;
  std::size_t test_size = 0;

  [[nodiscard]] const VariableScore* find(std::string_view variable) const;
  [[nodiscard]] const VariableScore& at(std::string_view variable) const;
};

struct Agreement {
  std::string variable;
  Role role = Role::Unobserved;
  double fraction = 0.0;
};

struct ConsistencyReport {
  std::vector<Agreement> agreements;
  double threshold = 0.5;

  [[nodiscard]] const Agreement& at(std::string_view variable) const;
};

// Presentation multipliers; stored values stay raw.
inline constexpr double kMseScale = 1e3;
inline constexpr double kMapeScale = 1e2;
inline constexpr std::string_view kMseUnit = "x1e3";
inline constexpr std::string_view kMapeUnit = "percent";

struct ReportRow {
  std::string scenario;
  std::string variable;
  std::string role;
  std::string strategy;
  double lambda = 0.0;
  std::string metric;
  double value = 0.0;  // already scaled for presentation
  std::string unit;
};

/// Comma-separated with header:
/// scenario,variable,role,strategy,lambda,metric,value,unit
void write_report(std::ostream& os, const std::vector<ReportRow>& rows);

void append_rows(std::vector<ReportRow>& rows, const EvalReport& report, std::string_view scenario,
                 std::string_view strategy, double lambda);
void append_rows(std::vector<ReportRow>& rows, const ConsistencyReport& report,
                 std::string_view scenario, std::string_view strategy, double lambda);

}  // namespace disentangle::metrics
