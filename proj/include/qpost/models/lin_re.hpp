#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"
#include "qpost/estimators/fisher.hpp"
#include "qpost/models/dataset.hpp"

namespace qpost {

/// Linear random-effects model y_i = alpha_i + x_i' beta + sigma eps_i,
/// alpha_i ~ N(0, sigma_alpha^2) with sigma_alpha^2 known; theta = (beta, sigma^2).
class LinReModel {
 public:
  LinReModel(Dataset data, double sigma2_alpha) : data_(std::move(data)), sigma2_alpha_(sigma2_alpha) {
    data_.validate();
    if (!(sigma2_alpha_ > 0.0)) throw ContractError("LinReModel: sigma_alpha^2 must be > 0");
    if (data_.covariates() < 1) throw ContractError("LinReModel: need at least one covariate");
  }

  const Dataset& data() const noexcept { return data_; }
  double sigma2_alpha() const noexcept { return sigma2_alpha_; }
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
    // (v)^-2 on the observation variance v = sigma^2 + sigma_alpha^2. With sigma_alpha^2 known the
    // likelihood stays bounded as sigma^2 -> 0, so (sigma^2)^-2 itself would give an improper posterior.
    return -2.0 * std::log(s2 + sigma2_alpha_);
  }

  /// Mean and variance of alpha_i | y_i, theta:  shrink = 1 / (1 + sigma^2 / sigma_alpha^2).
  struct Conditional {
    Vector mean;
    double variance;
  };

  Conditional latent_conditional(const ParameterVector& theta) const {
    check(theta);
    const Eigen::Index p = beta_dim();
    const double s2 = theta[p];
    const double shrink = 1.0 / (1.0 + s2 / sigma2_alpha_);
    return {shrink * (data_.y - data_.x * theta.values().head(p)), s2 * shrink};
  }

  /// Exact draws from the Gaussian conditional p(alpha | y, theta).
  LatentDrawSet sample_latents(const ParameterVector& theta, std::size_t n_draws, Rng& rng) const {
    const Conditional c = latent_conditional(theta);
    const double sd = std::sqrt(c.variance);
    LatentDrawSet out;
    out.draws.reserve(n_draws);
    for (std::size_t j = 0; j < n_draws; ++j) {
      Matrix a(data_.n(), 1);
      for (Eigen::Index i = 0; i < data_.n(); ++i) a(i, 0) = c.mean(i) + sd * standard_normal(rng);
      out.draws.push_back(std::move(a));
    }
    return out;
  }

  /// Per-unit gradients of log N(y_i; alpha_i + x_i' beta, sigma^2) for each draw.
  std::vector<Matrix> complete_scores(const ParameterVector& theta, const LatentDrawSet& z) const {
    check(theta);
    const Eigen::Index p = beta_dim();
    const double s2 = theta[p];
    const Vector fitted = data_.x * theta.values().head(p);
    std::vector<Matrix> out;
    out.reserve(z.count());
    for (const auto& alpha : z.draws) {
      const Vector e = data_.y - fitted - alpha.col(0);
      Matrix m(data_.n(), dim());
      m.leftCols(p) = data_.x.array().colwise() * (e.array() / s2);
      m.col(p) = (-0.5 / s2) + e.array().square() / (2.0 * s2 * s2);
      out.push_back(std::move(m));
    }
    return out;
  }

  /// log p_theta(y_i, alpha_i) summed over units (alpha given as an n-vector).
  double complete_log_density(const ParameterVector& theta, const Vector& alpha) const {
    check(theta);
    const Eigen::Index p = beta_dim();
    const double s2 = theta[p];
    const Vector e = data_.y - data_.x * theta.values().head(p) - alpha;
    const auto n = static_cast<double>(data_.n());
    return -0.5 * n * std::log(2.0 * std::numbers::pi * s2) - e.squaredNorm() / (2.0 * s2) -
           0.5 * n * std::log(2.0 * std::numbers::pi * sigma2_alpha_) - alpha.squaredNorm() / (2.0 * sigma2_alpha_);
  }

  /// Observed-data log-likelihood: y_i ~ N(x_i' beta, sigma^2 + sigma_alpha^2).
  double marginal_log_likelihood(const ParameterVector& theta) const {
    check(theta);
    const Eigen::Index p = beta_dim();
    const double v = theta[p] + sigma2_alpha_;
    const Vector r = data_.y - data_.x * theta.values().head(p);
    const auto n = static_cast<double>(data_.n());
    return -0.5 * n * std::log(2.0 * std::numbers::pi * v) - r.squaredNorm() / (2.0 * v);
  }

  /// Per-unit gradient of the observed-data log-likelihood.
  Matrix marginal_unit_scores(const ParameterVector& theta) const {
    check(theta);
    const Eigen::Index p = beta_dim();
    const double v = theta[p] + sigma2_alpha_;
    const Vector r = data_.y - data_.x * theta.values().head(p);
    Matrix m(data_.n(), dim());
    m.leftCols(p) = data_.x.array().colwise() * (r.array() / v);
    m.col(p) = (-0.5 / v) + r.array().square() / (2.0 * v * v);
    return m;
  }

  ParameterVector initial_point() const {
    const Vector beta = data_.x.colPivHouseholderQr().solve(data_.y);
    const double total = (data_.y - data_.x * beta).squaredNorm() /
                         static_cast<double>(data_.n() - data_.covariates());
    return make_theta(beta, std::max(total - sigma2_alpha_, 0.1 * total));
  }

  ParameterVector preliminary_estimate() const { return initial_point(); }

  Vector proposal_scales() const {
    const ParameterVector init = initial_point();
    const Eigen::Index p = beta_dim();
    const double total = init[p] + sigma2_alpha_;
    const Matrix xtx_inv = (data_.x.transpose() * data_.x).inverse();
    Vector scales(dim());
    scales.head(p) = (total * xtx_inv.diagonal()).cwiseSqrt();
    scales(p) = total * std::sqrt(2.0 / static_cast<double>(data_.n()));
    return scales;
  }

 private:
  void check(const ParameterVector& theta) const {
    if (theta.size() != dim()) throw ContractError("LinReModel: theta has the wrong dimension");
    if (!(theta[dim() - 1] > 0.0)) throw ContractError("LinReModel: sigma^2 must be > 0");
  }

  Dataset data_;
  double sigma2_alpha_;
};

}  // namespace qpost
