#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/linalg.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"

namespace qpost {

using ResampleIndices = std::vector<std::vector<std::size_t>>;

/// B iid resamples (with replacement) of the unit indices 0..n-1.
inline ResampleIndices bootstrap_indices(std::size_t n, std::size_t resamples, Rng& rng) {
  if (n == 0) throw InsufficientDataError("bootstrap_indices: empty data");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  ResampleIndices out(resamples, std::vector<std::size_t>(n));
  for (auto& idx : out)
    for (auto& i : idx) i = pick(rng);
  return out;
}

/// Covariance (divisor B) of score_fn(indices_b) / sqrt(n) over the resamples.
///
/// score_fn maps a vector of resampled unit indices to the d-vector m_n^{(b)}(theta).
template <class ScoreFn>
Matrix ee_bootstrap_covariance(ScoreFn&& score_fn, const ResampleIndices& resamples, std::size_t n) {
  if (resamples.size() < 2) throw InsufficientDataError("ee_bootstrap_covariance: need >= 2 resamples");
  const double root_n = std::sqrt(static_cast<double>(n));
  Matrix reps;
  for (std::size_t b = 0; b < resamples.size(); ++b) {
    const Vector m = score_fn(resamples[b]);
    if (!m.allFinite()) throw NumericError("ee_bootstrap_covariance: non-finite replicate score");
    if (b == 0) reps.resize(static_cast<Eigen::Index>(resamples.size()), m.size());
    reps.row(static_cast<Eigen::Index>(b)) = m.transpose() / root_n;
  }
  return covariance_of_rows(reps);
}

/// Estimating-equations bootstrap estimate of Cov{m_n(theta)/sqrt(n)}.
///
/// Resamples the data units with replacement B times, recomputes the score at the
/// fixed theta on each resample, and factorizes the replicate covariance. A
/// degenerate bootstrap yields the zero matrix, which picks up jitter.
template <class Unit, class ScoreFn>
WeightMatrix ee_bootstrap_variance(ScoreFn&& score_fn, const std::vector<Unit>& data,
                                   const ParameterVector& theta, std::size_t resamples, Rng& rng,
                                   const FactorizeOptions& factorize = {}) {
  if (resamples < 50)
    throw ContractError("ee_bootstrap_variance: need at least 50 resamples, got " +
                        std::to_string(resamples));
  const auto idx = bootstrap_indices(data.size(), resamples, rng);
  std::vector<Unit> buffer(data.size());
  const Matrix cov = ee_bootstrap_covariance(
      [&](const std::vector<std::size_t>& ix) {
        for (std::size_t i = 0; i < ix.size(); ++i) buffer[i] = data[ix[i]];
        return Vector(score_fn(buffer, theta));
      },
      idx, data.size());
  return factorize_psd(cov, factorize);
}

}  // namespace qpost
