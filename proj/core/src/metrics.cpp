#include "disentangle/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "disentangle/errors.hpp"
#include "text_io.hpp"

namespace disentangle::metrics {

namespace {

constexpr double kTruthFloor = 1e-6;

void require_same_length(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size())
    throw ShapeError(std::string(what) + ": lengths differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
}

// Fixed six decimals keeps reports diff-friendly and byte-stable.
std::string fixed(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

double mse(const Vector& estimated, const Vector& truth) {
  require_same_length(estimated, truth, "mse");
  if (truth.size() == 0) throw ShapeError("mse: empty input");
  double sum = 0.0;
  for (nn::Index i = 0; i < truth.size(); ++i) {
    const double d = truth(i) - estimated(i);
    sum += d * d;
  }
  return sum / static_cast<double>(truth.size());
}

MapeResult mape_detailed(const Vector& estimated, const Vector& truth) {
  require_same_length(estimated, truth, "mape");
  MapeResult r;
  double sum = 0.0;
  for (nn::Index i = 0; i < truth.size(); ++i) {
    if (truth(i) > kTruthFloor) {
      sum += std::abs(truth(i) - estimated(i)) / truth(i);
      ++r.used;
    } else {
      ++r.filtered;
    }
  }
  if (r.used == 0) throw ConfigError("mape: no samples with truth > 1e-6");
  r.value = sum / static_cast<double>(r.used);
  return r;
}

double consistency(const Vector& run_a, const Vector& run_b, double threshold) {
  require_same_length(run_a, run_b, "consistency");
  if (run_a.size() == 0) throw ShapeError("consistency: empty input");
  std::size_t same = 0;
  for (nn::Index i = 0; i < run_a.size(); ++i)
    if ((run_a(i) > threshold) == (run_b(i) > threshold)) ++same;
  return static_cast<double>(same) / static_cast<double>(run_a.size());
}

std::string_view to_string(Role r) { return r == Role::Observed ? "observed" : "unobserved"; }

const VariableScore* EvalReport::find(std::string_view variable) const {
  for (const auto& s : scores)
    if (s.variable == variable) return &s;
  return nullptr;
}

const VariableScore& EvalReport::at(std::string_view variable) const {
  if (const auto* s = find(variable)) return *s;
  throw ConfigError("no score for variable '" + std::string(variable) + "'");
}

const Agreement& ConsistencyReport::at(std::string_view variable) const {
  for (const auto& a : agreements)
    if (a.variable == variable) return a;
  throw ConfigError("no agreement for variable '" + std::string(variable) + "'");
}

void write_report(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << "scenario,variable,role,strategy,lambda,metric,value,unit\n";
  for (const auto& r : rows)
    os << r.scenario << ',' << r.variable << ',' << r.role << ',' << r.strategy << ','
       << detail::format_double(r.lambda) << ',' << r.metric << ',' << fixed(r.value) << ',' << r.unit
       << '\n';
}

void append_rows(std::vector<ReportRow>& rows, const EvalReport& report, std::string_view scenario,
                 std::string_view strategy, double lambda) {
  for (const auto& s : report.scores) {
    const std::string role(to_string(s.role));
    rows.push_back({std::string(scenario), s.variable, role, std::string(strategy), lambda, "MSE",
                    s.mse * kMseScale, std::string(kMseUnit)});
    rows.push_back({std::string(scenario), s.variable, role, std::string(strategy), lambda, "MAPE",
                    s.mape * kMapeScale, std::string(kMapeUnit)});
  }
}

void append_rows(std::vector<ReportRow>& rows, const ConsistencyReport& report,
                 std::string_view scenario, std::string_view strategy, double lambda) {
  for (const auto& a : report.agreements)
    rows.push_back({std::string(scenario), a.variable, std::string(to_string(a.role)),
                    std::string(strategy), lambda, "agreement", a.fraction * kMapeScale,
                    std::string(kMapeUnit)});
}

}  // namespace disentangle::metrics
