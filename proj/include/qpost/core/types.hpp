#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qpost/core/errors.hpp"

namespace qpost {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Constraint { unbounded, positive };

/// A point in parameter space together with the per-coordinate support.
class ParameterVector {
 public:
  ParameterVector() = default;

  explicit ParameterVector(Vector values)
      : values_(std::move(values)),
        constraints_(static_cast<std::size_t>(values_.size()), Constraint::unbounded) {}

  ParameterVector(Vector values, std::vector<Constraint> constraints)
      : values_(std::move(values)), constraints_(std::move(constraints)) {
    if (constraints_.size() != static_cast<std::size_t>(values_.size())) {
      throw ContractError("ParameterVector: constraint count " +
                          std::to_string(constraints_.size()) + " != dimension " +
                          std::to_string(values_.size()));
    }
  }

  Eigen::Index size() const noexcept { return values_.size(); }
  const Vector& values() const noexcept { return values_; }
  Vector& values() noexcept { return values_; }
  double operator[](Eigen::Index i) const { return values_(i); }
  double& operator[](Eigen::Index i) { return values_(i); }
  const std::vector<Constraint>& constraints() const noexcept { return constraints_; }

  /// True when every coordinate is finite and positive coordinates are > 0.
  bool in_support() const noexcept {
    for (Eigen::Index i = 0; i < values_.size(); ++i) {
      if (!std::isfinite(values_(i))) return false;
      if (constraints_[static_cast<std::size_t>(i)] == Constraint::positive && !(values_(i) > 0.0))
        return false;
    }
    return true;
  }

  /// Same constraints, new values.
  ParameterVector with_values(Vector v) const {
    return ParameterVector(std::move(v), constraints_);
  }

 private:
  Vector values_;
  std::vector<Constraint> constraints_;
};

/// Per-unit score contributions m_i(theta), optionally with per-draw contributions.
///
/// `unit_scores` is n x d. When `draw_scores` is present it holds N matrices of
/// shape n x d and row i of `unit_scores` is the mean over draws of row i.
struct ScorePanel {
  Matrix unit_scores;
  std::vector<Matrix> draw_scores;

  Eigen::Index units() const noexcept { return unit_scores.rows(); }
  Eigen::Index dim() const noexcept { return unit_scores.cols(); }
  std::size_t draws() const noexcept { return draw_scores.size(); }
  bool has_draws() const noexcept { return !draw_scores.empty(); }

  /// Total score m_n(theta): the column sum of the unit scores.
  Vector total() const { return unit_scores.colwise().sum().transpose(); }

  /// Builds a panel from per-draw scores, setting unit_scores to their average.
  static ScorePanel from_draws(std::vector<Matrix> draws) {
    if (draws.empty()) throw ContractError("ScorePanel::from_draws: no draws");
    ScorePanel panel;
    panel.unit_scores = Matrix::Zero(draws.front().rows(), draws.front().cols());
    for (const auto& d : draws) {
      if (d.rows() != panel.unit_scores.rows() || d.cols() != panel.unit_scores.cols())
        throw ContractError("ScorePanel::from_draws: ragged draw matrices");
      panel.unit_scores += d;
    }
    panel.unit_scores /= static_cast<double>(draws.size());
    panel.draw_scores = std::move(draws);
    return panel;
  }

  bool all_finite() const {
    if (!unit_scores.allFinite()) return false;
    for (const auto& d : draw_scores)
      if (!d.allFinite()) return false;
    return true;
  }
};

/// Symmetric positive-definite weight with its Cholesky factor.
///
/// `matrix` is the matrix that was actually factorized (jitter included).
struct WeightMatrix {
  Matrix matrix;
  Matrix lower;
  double log_det = 0.0;
  double jitter_applied = 0.0;

  Eigen::Index dim() const noexcept { return matrix.rows(); }
};

/// Decomposed log of the unnormalized Q-posterior density.
struct QKernelValue {
  double log_kernel = 0.0;
  double q_term = 0.0;
  double log_det_term = 0.0;
  double log_prior = 0.0;
  bool include_det = true;

  bool finite() const noexcept { return std::isfinite(log_kernel); }
};

}  // namespace qpost
