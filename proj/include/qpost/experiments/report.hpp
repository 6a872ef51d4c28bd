#pragma once

#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/experiments/config.hpp"

namespace qpost {

struct CoordinateSummary {
  std::string name;
  double bias = 0.0;
  double var = 0.0;
  double cov = 0.0;
  /// Binomial standard error of `cov`.
  double cov_se = 0.0;
};

struct MethodSummary {
  Method method = Method::q_posterior;
  std::vector<CoordinateSummary> coords;
  std::size_t successes = 0;
  std::size_t failures = 0;
  double mean_acceptance = 0.0;
  std::optional<double> mean_inner_acceptance;
  std::size_t nonfinite_rejections = 0;
};

/// Bias, average posterior variance and coverage per coordinate and method.
struct ReplicationReport {
  std::string name;
  std::size_t replications = 0;
  std::vector<std::string> coordinate_names;
  std::vector<double> pseudo_truth;
  std::vector<MethodSummary> methods;

  const MethodSummary* find(Method m) const {
    for (const auto& s : methods)
      if (s.method == m) return &s;
    return nullptr;
  }
};

namespace report_detail {

inline std::string full(double v) {
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return os.str();
}

inline std::string fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  std::string s = buf;
  return s == "-0.0000" ? "0.0000" : s;
}

}  // namespace report_detail

/// CSV with one row per coordinate and, per method, the columns
/// <method>_bias, <method>_var, <method>_cov, <method>_cov_se. Values are
/// written with round-trip precision.
inline std::string emit_csv(const ReplicationReport& r) {
  std::string out = "coordinate";
  for (const auto& m : r.methods) {
    const std::string p = to_string(m.method);
    out += "," + p + "_bias," + p + "_var," + p + "_cov," + p + "_cov_se";
  }
  out += "\n";
  if (r.methods.empty()) return out;
  for (std::size_t j = 0; j < r.coordinate_names.size(); ++j) {
    out += r.coordinate_names[j];
    for (const auto& m : r.methods) {
      const auto& c = m.coords[j];
      out += "," + report_detail::full(c.bias) + "," + report_detail::full(c.var) + "," + report_detail::full(c.cov) +
             "," + report_detail::full(c.cov_se);
    }
    out += "\n";
  }
  return out;
}

/// Aligned text table in the printed layout: method blocks of Bias, Var, Cov
/// with four decimals.
inline std::string emit_text(const ReplicationReport& r) {
  std::ostringstream os;
  constexpr int name_w = 12;
  constexpr int col_w = 10;
  os << r.name << "  (" << r.replications << " replications)\n";
  os << std::left << std::setw(name_w) << "";
  for (const auto& m : r.methods) os << std::left << std::setw(3 * col_w) << display_name(m.method);
  os << "\n" << std::left << std::setw(name_w) << "";
  for (std::size_t k = 0; k < r.methods.size(); ++k)
    os << std::right << std::setw(col_w) << "Bias" << std::setw(col_w) << "Var" << std::setw(col_w) << "Cov";
  os << "\n";
  if (!r.methods.empty()) {
    for (std::size_t j = 0; j < r.coordinate_names.size(); ++j) {
      os << std::left << std::setw(name_w) << r.coordinate_names[j];
      for (const auto& m : r.methods) {
        const auto& c = m.coords[j];
        os << std::right << std::setw(col_w) << report_detail::fixed4(c.bias) << std::setw(col_w)
           << report_detail::fixed4(c.var) << std::setw(col_w) << report_detail::fixed4(c.cov);
      }
      os << "\n";
    }
  }
  for (const auto& m : r.methods) {
    os << display_name(m.method) << ": " << m.successes << " ok, " << m.failures << " failed, acceptance "
       << report_detail::fixed4(m.mean_acceptance);
    if (m.mean_inner_acceptance) os << ", inner acceptance " << report_detail::fixed4(*m.mean_inner_acceptance);
    if (!m.coords.empty()) {
      double se = 0.0;
      for (const auto& c : m.coords) se = std::max(se, c.cov_se);
      os << ", coverage SE <= " << report_detail::fixed4(se);
    }
    os << "\n";
  }
  return os.str();
}

/// Values recovered from a report CSV.
struct ParsedReport {
  std::vector<std::string> header;
  std::vector<std::string> coordinates;
  std::vector<std::vector<double>> values;  // per row, in header order (coordinate column excluded)
};

inline ParsedReport parse_csv(const std::string& csv) {
  ParsedReport out;
  std::istringstream is(csv);
  std::string line;
  auto split = [](const std::string& s) {
    std::vector<std::string> cells;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  if (!std::getline(is, line)) throw ContractError("parse_csv: empty input");
  out.header = split(line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = split(line);
    if (cells.size() != out.header.size()) throw ContractError("parse_csv: ragged row");
    out.coordinates.push_back(cells[0]);
    std::vector<double> row;
    for (std::size_t k = 1; k < cells.size(); ++k) row.push_back(std::stod(cells[k]));
    out.values.push_back(std::move(row));
  }
  return out;
}

}  // namespace qpost
