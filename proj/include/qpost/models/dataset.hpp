#pragma once

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/types.hpp"

namespace qpost {

/// Outcomes and covariates for one replication. `x` has zero columns for the median model.
struct Dataset {
  Vector y;
  Matrix x;

  Eigen::Index n() const noexcept { return y.size(); }
  Eigen::Index covariates() const noexcept { return x.cols(); }

  void validate(bool binary_outcome = false) const {
    if (x.rows() != y.size() && x.cols() > 0)
      throw ContractError("Dataset: x has " + std::to_string(x.rows()) + " rows but y has " +
                          std::to_string(y.size()));
    if (!y.allFinite() || !x.allFinite()) throw ContractError("Dataset: missing or non-finite values");
    if (binary_outcome) {
      for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y(i) != 0.0 && y(i) != 1.0) throw ContractError("Dataset: probit outcomes must be 0 or 1");
    }
  }
};

/// Writes columns y, x1..xd with round-trip precision.
inline void write_dataset_csv(const Dataset& data, std::ostream& os) {
  os << "y";
  for (Eigen::Index j = 0; j < data.covariates(); ++j) os << ",x" << (j + 1);
  os << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    os << data.y(i);
    for (Eigen::Index j = 0; j < data.covariates(); ++j) os << ',' << data.x(i, j);
    os << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw ContractError("read_dataset_csv: empty input");
  std::size_t cols = 1;
  for (char c : line) cols += (c == ',') ? 1u : 0u;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    if (row.size() != cols) throw ContractError("read_dataset_csv: ragged row");
    rows.push_back(std::move(row));
  }
  Dataset d;
  const auto n = static_cast<Eigen::Index>(rows.size());
  d.y.resize(n);
  d.x.resize(n, static_cast<Eigen::Index>(cols - 1));
  for (Eigen::Index i = 0; i < n; ++i) {
    d.y(i) = rows[static_cast<std::size_t>(i)][0];
    for (Eigen::Index j = 1; j < static_cast<Eigen::Index>(cols); ++j)
      d.x(i, j - 1) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  }
  return d;
}

}  // namespace qpost
