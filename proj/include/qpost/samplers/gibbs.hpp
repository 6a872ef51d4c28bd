#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

#include "qpost/core/errors.hpp"
#include "qpost/core/normal.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"
#include "qpost/models/dataset.hpp"
#include "qpost/samplers/chain.hpp"

// Exact-posterior baselines. Priors: pi(beta) flat, pi(sigma^2) ~ (sigma^2)^{-2},
// pi(sigma_alpha^2) ~ (sigma_alpha^2)^{-1}.

namespace qpost {

namespace detail {

struct DesignFactor {
  Matrix xtx_inv_lower;  // Cholesky factor of (X'X)^{-1}
  Eigen::LLT<Matrix> xtx;
};

inline DesignFactor factor_design(const Matrix& x) {
  DesignFactor f;
  f.xtx.compute(x.transpose() * x);
  if (f.xtx.info() != Eigen::Success) throw SingularDesignError("gibbs: X'X is not positive definite");
  const Matrix lower = f.xtx.matrixL();
  const double ratio = lower.diagonal().minCoeff() / lower.diagonal().maxCoeff();
  if (!(ratio > 1e-7)) throw SingularDesignError("gibbs: X'X is numerically singular");
  const Matrix inv = f.xtx.solve(Matrix::Identity(x.cols(), x.cols()));
  f.xtx_inv_lower = Eigen::LLT<Matrix>(0.5 * (inv + inv.transpose())).matrixL();
  return f;
}

/// beta ~ N((X'X)^{-1} X'target, scale (X'X)^{-1}).
inline Vector draw_beta(const DesignFactor& f, const Matrix& x, const Vector& target, double scale, Rng& rng) {
  const Vector mean = f.xtx.solve(x.transpose() * target);
  return mean + std::sqrt(scale) * (f.xtx_inv_lower * standard_normal_vector(rng, mean.size()));
}

inline ChainTrace start_trace(std::size_t iterations, std::size_t burn_in, Eigen::Index d) {
  if (iterations < 1) throw ContractError("gibbs: need at least one iteration");
  ChainTrace trace;
  trace.burn_in = burn_in;
  trace.draws.resize(static_cast<Eigen::Index>(iterations), d);
  trace.log_kernels.reserve(iterations);
  trace.accepted.assign(iterations, true);
  return trace;
}

inline double gaussian_log_lik(const Vector& resid, double variance) {
  const auto n = static_cast<double>(resid.size());
  return -0.5 * n * std::log(2.0 * std::numbers::pi * variance) - resid.squaredNorm() / (2.0 * variance);
}

}  // namespace detail

struct LinRegGibbsOptions {
  /// Hold sigma^2 at this value instead of sampling it.
  std::optional<double> fixed_sigma2;
};

/// Two-block Gibbs for linear regression; draws are (beta, sigma^2).
///
/// beta | sigma^2 ~ N(beta_ols, sigma^2 (X'X)^{-1}),  sigma^2 | beta ~ IG(n/2 + 1, SSR(beta)/2).
inline ChainTrace gibbs_exact_linreg(const Dataset& data, const ChainConfig& chain, Rng& rng,
                                     const LinRegGibbsOptions& opts = {}) {
  data.validate();
  const Eigen::Index p = data.covariates();
  const auto n = static_cast<double>(data.n());
  const auto f = detail::factor_design(data.x);
  ChainTrace trace = detail::start_trace(chain.iterations, chain.burn_in, p + 1);

  const Vector ols = f.xtx.solve(data.x.transpose() * data.y);
  double s2 = opts.fixed_sigma2.value_or((data.y - data.x * ols).squaredNorm() / n);
  for (std::size_t t = 0; t < chain.iterations; ++t) {
    const Vector beta = detail::draw_beta(f, data.x, data.y, s2, rng);
    const Vector resid = data.y - data.x * beta;
    if (!opts.fixed_sigma2) s2 = inverse_gamma(rng, 0.5 * n + 1.0, 0.5 * resid.squaredNorm());
    const auto row = static_cast<Eigen::Index>(t);
    trace.draws.row(row).head(p) = beta.transpose();
    trace.draws(row, p) = s2;
    trace.log_kernels.push_back(detail::gaussian_log_lik(resid, s2) - 2.0 * std::log(s2));
  }
  trace.finalize_acceptance();
  return trace;
}

struct LinReGibbsOptions {
  /// Hold sigma^2 at this value instead of sampling it.
  std::optional<double> fixed_sigma2;
  /// Hold sigma_alpha^2 at this value instead of sampling it.
  std::optional<double> fixed_sigma2_alpha;
  double sigma2_alpha_floor = 1e-12;
};

/// Gibbs for the linear random-effects model; draws are (beta, sigma^2, sigma_alpha^2).
///
/// alpha | . is the Gaussian shrinkage conditional, beta | . Gaussian,
/// sigma^2 | . ~ IG(n/2 + 1, SSR/2) and sigma_alpha^2 | alpha ~ IG(n/2, sum alpha^2 / 2).
inline ChainTrace gibbs_exact_lin_re(const Dataset& data, const ChainConfig& chain, Rng& rng,
                                     const LinReGibbsOptions& opts = {}) {
  data.validate();
  const Eigen::Index p = data.covariates();
  const Eigen::Index n = data.n();
  const auto f = detail::factor_design(data.x);
  ChainTrace trace = detail::start_trace(chain.iterations, chain.burn_in, p + 2);

  Vector beta = f.xtx.solve(data.x.transpose() * data.y);
  const double total = (data.y - data.x * beta).squaredNorm() / static_cast<double>(n);
  double s2a = opts.fixed_sigma2_alpha.value_or(0.5 * total);
  double s2 = opts.fixed_sigma2.value_or(std::max(total - s2a, 0.1 * total));
  Vector alpha(n);
  for (std::size_t t = 0; t < chain.iterations; ++t) {
    const double shrink = 1.0 / (1.0 + s2 / s2a);
    const double sd = std::sqrt(s2 * shrink);
    const Vector r = data.y - data.x * beta;
    for (Eigen::Index i = 0; i < n; ++i) alpha(i) = shrink * r(i) + sd * standard_normal(rng);
    beta = detail::draw_beta(f, data.x, data.y - alpha, s2, rng);
    const Vector e = data.y - alpha - data.x * beta;
    if (!opts.fixed_sigma2) s2 = inverse_gamma(rng, 0.5 * static_cast<double>(n) + 1.0, 0.5 * e.squaredNorm());
    if (!opts.fixed_sigma2_alpha)
      s2a = std::max(inverse_gamma(rng, 0.5 * static_cast<double>(n), 0.5 * alpha.squaredNorm()),
                     opts.sigma2_alpha_floor);
    const auto row = static_cast<Eigen::Index>(t);
    trace.draws.row(row).head(p) = beta.transpose();
    trace.draws(row, p) = s2;
    trace.draws(row, p + 1) = s2a;
    // marginal posterior kernel: y_i ~ N(x_i' beta, sigma^2 + sigma_alpha^2)
    trace.log_kernels.push_back(detail::gaussian_log_lik(data.y - data.x * beta, s2 + s2a) - 2.0 * std::log(s2) -
                                (opts.fixed_sigma2_alpha ? 0.0 : std::log(s2a)));
  }
  trace.finalize_acceptance();
  return trace;
}

struct ProbitGibbsOptions {
  /// Hold sigma_alpha^2 at this value instead of sampling it.
  std::optional<double> fixed_sigma2_alpha = 1.0;
  double sigma2_alpha_floor = 1e-12;
};

/// Data-augmentation Gibbs for the random-effects probit: z_i = x_i' beta + alpha_i + e_i,
/// y_i = 1{z_i > 0}. Draws are beta, followed by sigma_alpha^2 when it is sampled.
inline ChainTrace gibbs_exact_probit_re(const Dataset& data, const ChainConfig& chain, Rng& rng,
                                        const ProbitGibbsOptions& opts = {}) {
  data.validate(/*binary_outcome=*/true);
  const Eigen::Index p = data.covariates();
  const Eigen::Index n = data.n();
  const auto f = detail::factor_design(data.x);
  const bool sample_s2a = !opts.fixed_sigma2_alpha.has_value();
  ChainTrace trace = detail::start_trace(chain.iterations, chain.burn_in, p + (sample_s2a ? 1 : 0));

  Vector beta = Vector::Zero(p);
  double s2a = opts.fixed_sigma2_alpha.value_or(1.0);
  Vector alpha = Vector::Zero(n);
  Vector z(n);
  for (std::size_t t = 0; t < chain.iterations; ++t) {
    const Vector linear = data.x * beta;
    for (Eigen::Index i = 0; i < n; ++i) z(i) = truncated_normal_sign(rng, linear(i) + alpha(i), data.y(i) > 0.5);
    const double shrink = s2a / (1.0 + s2a);
    const double sd = std::sqrt(shrink);
    for (Eigen::Index i = 0; i < n; ++i) alpha(i) = shrink * (z(i) - linear(i)) + sd * standard_normal(rng);
    beta = detail::draw_beta(f, data.x, z - alpha, 1.0, rng);
    if (sample_s2a)
      s2a = std::max(inverse_gamma(rng, 0.5 * static_cast<double>(n), 0.5 * alpha.squaredNorm()),
                     opts.sigma2_alpha_floor);
    const auto row = static_cast<Eigen::Index>(t);
    trace.draws.row(row).head(p) = beta.transpose();
    if (sample_s2a) trace.draws(row, p) = s2a;
    // marginal: P(y_i = 1) = Phi(x_i' beta / sqrt(1 + sigma_alpha^2))
    const Vector idx = (data.x * beta) / std::sqrt(1.0 + s2a);
    double lk = sample_s2a ? -std::log(s2a) : 0.0;
    for (Eigen::Index i = 0; i < n; ++i) lk += data.y(i) > 0.5 ? normal::log_cdf(idx(i)) : normal::log_cdf(-idx(i));
    trace.log_kernels.push_back(lk);
  }
  trace.finalize_acceptance();
  return trace;
}

}  // namespace qpost
