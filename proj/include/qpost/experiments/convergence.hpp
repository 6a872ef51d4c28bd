#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/random.hpp"
#include "qpost/samplers/pseudo_marginal.hpp"

namespace qpost {

/// Posterior mean and SD of each coordinate with batch-means Monte Carlo errors.
struct ChainSummary {
  Vector mean;
  Vector sd;
  Vector mean_mcse;
};

inline ChainSummary summarize_chain(const Matrix& draws, std::size_t batches = 50) {
  const Eigen::Index m = draws.rows();
  if (m < static_cast<Eigen::Index>(2 * batches)) throw InsufficientDataError("summarize_chain: chain too short");
  ChainSummary s;
  s.mean = draws.colwise().mean().transpose();
  const Matrix centred = draws.rowwise() - s.mean.transpose();
  s.sd = (centred.array().square().colwise().sum() / static_cast<double>(m - 1)).sqrt().transpose();
  const Eigen::Index len = m / static_cast<Eigen::Index>(batches);
  Matrix bm(static_cast<Eigen::Index>(batches), draws.cols());
  for (Eigen::Index b = 0; b < static_cast<Eigen::Index>(batches); ++b)
    bm.row(b) = draws.middleRows(b * len, len).colwise().mean();
  const Matrix bc = bm.rowwise() - bm.colwise().mean();
  const Vector batch_var = (bc.array().square().colwise().sum() / static_cast<double>(batches - 1)).transpose();
  s.mean_mcse = (batch_var / static_cast<double>(batches)).cwiseSqrt();
  return s;
}

struct ConvergenceRow {
  std::size_t n_draws = 0;
  ChainSummary summary;
  /// Per coordinate |mean_N - mean_ref| and |sd_N - sd_ref|.
  Vector mean_diff;
  Vector sd_diff;
  /// Combined MC standard error of the mean difference.
  Vector noise;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;  // grid order
  ConvergenceRow reference;

  /// Average over coordinates of the mean discrepancy, per grid point.
  std::vector<double> mean_discrepancy() const {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.mean_diff.mean());
    return out;
  }
  std::vector<double> noise_band() const {
    std::vector<double> out;
    for (const auto& r : rows) out.push_back(r.noise.mean());
    return out;
  }

  /// Least-squares slope of log discrepancy on log N.
  double log_log_slope() const {
    const auto d = mean_discrepancy();
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto k = static_cast<double>(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double x = std::log(static_cast<double>(rows[i].n_draws));
      const double y = std::log(d[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    return (k * sxy - sx * sy) / (k * sxx - sx * sx);
  }

  /// True when each discrepancy exceeds its predecessor by at most `band_mult`
  /// times the combined noise of the two points.
  bool non_increasing_within_noise(double band_mult = 2.0) const {
    const auto d = mean_discrepancy();
    const auto e = noise_band();
    for (std::size_t i = 1; i < d.size(); ++i)
      if (d[i] - d[i - 1] > band_mult * std::hypot(e[i], e[i - 1])) return false;
    return true;
  }
};

struct ConvergenceOptions {
  ChainConfig chain{40'000, 5'000};
  std::vector<std::size_t> grid{1, 5, 25, 125};
  std::size_t reference_n = 1000;
  std::uint64_t seed = 7;
  /// Coordinates compared (leading block).
  Eigen::Index coordinates = 0;
  PseudoMarginalOptions pm;
};

/// Runs a pseudo-marginal chain on the same data for each N in the grid and at
/// the reference N, and tabulates the discrepancy of the posterior mean and SD.
template <LatentModel M>
ConvergenceTable convergence_study(const M& model, const ParameterVector& init, const ProposalConfig& proposal,
                                   const ConvergenceOptions& opts) {
  for (std::size_t i = 1; i < opts.grid.size(); ++i)
    if (opts.grid[i] <= opts.grid[i - 1]) throw ContractError("convergence_study: grid must be ascending");
  const Eigen::Index p = opts.coordinates > 0 ? opts.coordinates : model.dim();
  auto run = [&](std::size_t n_draws, std::uint64_t stream) {
    Rng rng = make_rng(opts.seed ^ (0xA5A5A5A5ULL * (stream + 1)));
    const ChainTrace t = pm_mh_q(model, init, opts.chain, n_draws, proposal, rng, opts.pm);
    ConvergenceRow row;
    row.n_draws = n_draws;
    row.summary = summarize_chain(t.retained().leftCols(p));
    return row;
  };
  ConvergenceTable table;
  table.reference = run(opts.reference_n, opts.grid.size());
  for (std::size_t i = 0; i < opts.grid.size(); ++i) {
    ConvergenceRow row = run(opts.grid[i], i);
    row.mean_diff = (row.summary.mean - table.reference.summary.mean).cwiseAbs();
    row.sd_diff = (row.summary.sd - table.reference.summary.sd).cwiseAbs();
    row.noise = (row.summary.mean_mcse.array().square() + table.reference.summary.mean_mcse.array().square()).sqrt();
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace qpost
