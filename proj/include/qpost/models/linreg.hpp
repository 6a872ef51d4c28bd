#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/kernel.hpp"
#include "qpost/core/linalg.hpp"
#include "qpost/core/types.hpp"
#include "qpost/models/dataset.hpp"

namespace qpost {

/// Gaussian linear regression y_i = x_i' beta + sigma eps_i with theta = (beta, sigma^2).
///
/// Priors: pi(beta) flat, pi(sigma^2) proportional to (sigma^2)^{-2}.
class LinRegModel {
 public:
  explicit LinRegModel(Dataset data) : data_(std::move(data)) {
    data_.validate();
    if (data_.covariates() < 1) throw ContractError("LinRegModel: need at least one covariate");
    if (data_.n() <= data_.covariates()) throw InsufficientDataError("LinRegModel: need n > number of covariates");
  }

  const Dataset& data() const noexcept { return data_; }
  Eigen::Index beta_dim() const noexcept { return data_.covariates(); }
  Eigen::Index dim() const noexcept { return data_.covariates() + 1; }
  Eigen::Index units() const noexcept { return data_.n(); }

  std::vector<Constraint> constraints() const {
    std::vector<Constraint> c(static_cast<std::size_t>(dim()), Constraint::unbounded);
    c.back() = Constraint::positive;
    return c;
  }

  ParameterVector make_theta(const Vector& beta, double sigma2) const {
    Vector v(dim());
    v << beta, sigma2;
    return ParameterVector(std::move(v), constraints());
  }

  double log_prior(const ParameterVector& theta) const {
    const double s2 = theta[dim() - 1];
    if (!(s2 > 0.0)) return -std::numeric_limits<double>::infinity();
    return -2.0 * std::log(s2);
  }

  /// Rows m_i(theta) = (x_i r_i / sigma^2, -1/(2 sigma^2) + r_i^2 / (2 sigma^4)).
  ScorePanel score_panel(const ParameterVector& theta) const {
    check(theta);
    const Eigen::Index p = beta_dim();
    const double s2 = theta[p];
    const Vector resid = data_.y - data_.x * theta.values().head(p);
    ScorePanel panel;
    panel.unit_scores.resize(data_.n(), dim());
    panel.unit_scores.leftCols(p) = data_.x.array().colwise() * (resid.array() / s2);
    panel.unit_scores.col(p) = (-0.5 / s2) + resid.array().square() / (2.0 * s2 * s2);
    return panel;
  }

  ScoreAndWeight score_and_weight(const ParameterVector& theta) const {
    const ScorePanel panel = score_panel(theta);
    return {panel.total(), covariance_of_rows(panel.unit_scores), data_.n()};
  }

  double log_likelihood(const ParameterVector& theta) const {
    check(theta);
    const Eigen::Index p = beta_dim();
    const double s2 = theta[p];
    const Vector resid = data_.y - data_.x * theta.values().head(p);
    const auto n = static_cast<double>(data_.n());
    return -0.5 * n * std::log(2.0 * std::numbers::pi * s2) - resid.squaredNorm() / (2.0 * s2);
  }

  /// Maximum likelihood estimate (OLS beta, SSR / n).
  ParameterVector mle() const {
    const Vector beta = data_.x.colPivHouseholderQr().solve(data_.y);
    const double s2 = (data_.y - data_.x * beta).squaredNorm() / static_cast<double>(data_.n());
    return make_theta(beta, s2);
  }

  /// Starting point for chains: OLS beta and the unbiased residual variance.
  ParameterVector initial_point() const {
    const Vector beta = data_.x.colPivHouseholderQr().solve(data_.y);
    const double s2 = (data_.y - data_.x * beta).squaredNorm() /
                      static_cast<double>(data_.n() - data_.covariates());
    return make_theta(beta, s2);
  }

  /// Rough posterior scales used to seed the random-walk proposal.
  Vector proposal_scales() const {
    const ParameterVector init = initial_point();
    const Eigen::Index p = beta_dim();
    const double s2 = init[p];
    const Matrix xtx_inv = (data_.x.transpose() * data_.x).inverse();
    Vector scales(dim());
    scales.head(p) = (s2 * xtx_inv.diagonal()).cwiseSqrt();
    scales(p) = s2 * std::sqrt(2.0 / static_cast<double>(data_.n()));
    return scales;
  }

 private:
  void check(const ParameterVector& theta) const {
    if (theta.size() != dim())
      throw ContractError("LinRegModel: theta has dimension " + std::to_string(theta.size()) +
                          ", expected " + std::to_string(dim()));
    if (!(theta[dim() - 1] > 0.0)) throw ContractError("LinRegModel: sigma^2 must be > 0");
  }

  Dataset data_;
};

}  // namespace qpost
