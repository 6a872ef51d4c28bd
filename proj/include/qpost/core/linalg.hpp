#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "qpost/core/errors.hpp"
#include "qpost/core/types.hpp"

namespace qpost {

struct FactorizeOptions {
  double symmetry_tol = 1e-12;
  double base_jitter = 1e-8;  // multiplied by tr(W)/d
  int max_retries = 6;
  double min_relative_pivot = 1e-14;  // pivot^2 relative to the largest diagonal entry
};

namespace detail {

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool is_symmetric(const Matrix& m, double tol) {
  const double scale = std::max(1.0, max_abs(m));
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

// Cholesky that also rejects numerically zero pivots.
inline bool try_cholesky(const Matrix& m, double min_relative_pivot, Matrix& lower) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  if (!lower.allFinite()) return false;
  const double diag_max = m.diagonal().cwiseAbs().maxCoeff();
  const double floor = min_relative_pivot * diag_max;
  for (Eigen::Index i = 0; i < lower.rows(); ++i) {
    const double p = lower(i, i);
    if (!(p > 0.0) || p * p <= floor) return false;
  }
  return true;
}

}  // namespace detail

/// Cholesky-factorizes a symmetric matrix, adding escalating diagonal jitter on failure.
///
/// Jitter starts at base_jitter * tr(W)/d and grows tenfold per retry. Throws
/// SingularWeightError when the matrix is still not positive definite after
/// max_retries.
inline WeightMatrix factorize_psd(const Matrix& matrix, const FactorizeOptions& opts = {}) {
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0)
    throw ContractError("factorize_psd: matrix must be square and non-empty, got " +
                        std::to_string(matrix.rows()) + "x" + std::to_string(matrix.cols()));
  if (!matrix.allFinite()) throw NumericError("factorize_psd: non-finite entries");
  if (!detail::is_symmetric(matrix, opts.symmetry_tol))
    throw ContractError("factorize_psd: matrix is not symmetric");

  const Matrix sym = 0.5 * (matrix + matrix.transpose());
  WeightMatrix out;
  if (detail::try_cholesky(sym, opts.min_relative_pivot, out.lower)) {
    out.matrix = sym;
  } else {
    const auto d = static_cast<double>(sym.rows());
    double scale = sym.trace() / d;
    if (!(scale > 0.0)) scale = 1.0;
    double jitter = opts.base_jitter * scale;
    bool ok = false;
    for (int attempt = 0; attempt < opts.max_retries; ++attempt, jitter *= 10.0) {
      Matrix trial = sym;
      trial.diagonal().array() += jitter;
      if (detail::try_cholesky(trial, opts.min_relative_pivot, out.lower)) {
        out.matrix = std::move(trial);
        out.jitter_applied = jitter;
        ok = true;
        break;
      }
    }
    if (!ok) throw SingularWeightError("factorize_psd: weight matrix is not positive definite");
  }
  out.log_det = 2.0 * out.lower.diagonal().array().log().sum();
  return out;
}

/// Returns 0.5 * s' W^{-1} s via a triangular solve against the stored factor.
inline double quad_form(const Vector& scaled_score, const WeightMatrix& weight) {
  if (scaled_score.size() != weight.dim())
    throw ContractError("quad_form: score length " + std::to_string(scaled_score.size()) +
                        " != weight dimension " + std::to_string(weight.dim()));
  if (!scaled_score.allFinite()) throw NumericError("quad_form: non-finite score");
  const Vector y = weight.lower.triangularView<Eigen::Lower>().solve(scaled_score);
  return 0.5 * y.squaredNorm();
}

/// Population-style covariance of the rows of `rows` (divisor n), exactly symmetric.
inline Matrix covariance_of_rows(const Matrix& rows) {
  if (rows.rows() < 2)
    throw InsufficientDataError("covariance_of_rows: need at least 2 rows, got " +
                                std::to_string(rows.rows()));
  // shifting by the first row keeps duplicated rows exactly zero
  const Matrix shifted = rows.rowwise() - rows.row(0);
  const Eigen::RowVectorXd mean = shifted.colwise().mean();
  const Matrix centred = shifted.rowwise() - mean;
  Matrix cov = (centred.transpose() * centred) / static_cast<double>(rows.rows());
  return 0.5 * (cov + cov.transpose());
}

/// W_n(theta) = n^{-1} sum_i (m_i - m_n/n)(m_i - m_n/n)'; returned factorized.
inline WeightMatrix sample_covariance(const ScorePanel& panel, const FactorizeOptions& opts = {}) {
  if (!panel.unit_scores.allFinite()) throw NumericError("sample_covariance: non-finite scores");
  return factorize_psd(covariance_of_rows(panel.unit_scores), opts);
}

}  // namespace qpost
