#pragma once

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/normal.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"
#include "qpost/estimators/fisher.hpp"
#include "qpost/models/dataset.hpp"

namespace qpost {

/// d/d(index) of log P(y | index) for a probit observation:
/// [y - Phi(t)] phi(t) / (Phi(t) [1 - Phi(t)]), i.e. phi/Phi for y = 1 and
/// -phi/(1 - Phi) for y = 0, evaluated as Mills ratios that stay finite and
/// strictly monotone in t everywhere.
inline double probit_u(double y, double index) {
  return y > 0.5 ? normal::inverse_mills(index) : -normal::inverse_mills(-index);
}

/// log P(y | index) = y log Phi(t) + (1 - y) log Phi(-t).
inline double probit_log_lik(double y, double index) {
  return y > 0.5 ? normal::log_cdf(index) : normal::log_cdf(-index);
}

/// Maximum-likelihood beta for the marginal model P(y_i = 1) = Phi(x_i' beta / sqrt(1 + sigma_alpha^2)):
/// Newton iterations on the standard probit fit, rescaled. Throws NumericError
/// when the fit does not converge (e.g. separated data).
inline Vector probit_marginal_mle(const Dataset& data, double sigma2_alpha, int max_iter = 100) {
  data.validate(/*binary_outcome=*/true);
  const Eigen::Index p = data.covariates();
  auto log_lik = [&](const Vector& g) {
    const Vector t = data.x * g;
    double out = 0.0;
    for (Eigen::Index i = 0; i < data.n(); ++i) out += probit_log_lik(data.y(i), t(i));
    return out;
  };
  Vector g = Vector::Zero(p);
  double ll = log_lik(g);
  for (int it = 0; it < max_iter; ++it) {
    const Vector t = data.x * g;
    Vector grad = Vector::Zero(p);
    Matrix info = Matrix::Zero(p, p);
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      const double u = probit_u(data.y(i), t(i));
      // -d^2/dt^2 log P(y | t) = u (u + t) for both outcomes
      grad += u * data.x.row(i).transpose();
      info += u * (u + t(i)) * data.x.row(i).transpose() * data.x.row(i);
    }
    const Eigen::LLT<Matrix> llt(info);
    if (llt.info() != Eigen::Success) throw NumericError("probit_marginal_mle: information not positive definite");
    Vector step = llt.solve(grad);
    double h = 1.0;
    Vector next = g + step;
    double next_ll = log_lik(next);
    while (!(next_ll >= ll) && h > 1e-8) {
      h *= 0.5;
      next = g + h * step;
      next_ll = log_lik(next);
    }
    const bool done = (next - g).cwiseAbs().maxCoeff() < 1e-10;
    g = next;
    ll = next_ll;
    if (done) {
      if (g.cwiseAbs().maxCoeff() > 1e3) throw NumericError("probit_marginal_mle: estimate diverged");
      return std::sqrt(1.0 + sigma2_alpha) * g;
    }
  }
  throw NumericError("probit_marginal_mle: no convergence");
}

/// Binary random-effects probit with one observation per unit:
/// y_i ~ Bernoulli(Phi(x_i' beta + alpha_i)), alpha_i ~ N(0, sigma_alpha^2).
///
/// theta = (beta, sigma_alpha^2) when the random-effect variance is estimated,
/// otherwise theta = beta and sigma_alpha^2 is held at its known value.
class ProbitReModel {
 public:
  struct Options {
    bool estimate_sigma2_alpha = false;
    double sigma2_alpha = 1.0;  // used when not estimated
  };

  ProbitReModel(Dataset data, Options opts) : data_(std::move(data)), opts_(opts) {
    data_.validate(/*binary_outcome=*/true);
    if (!(opts_.sigma2_alpha > 0.0)) throw ContractError("ProbitReModel: sigma_alpha^2 must be > 0");
  }

  const Dataset& data() const noexcept { return data_; }
  const Options& options() const noexcept { return opts_; }
  Eigen::Index beta_dim() const noexcept { return data_.covariates(); }
  Eigen::Index dim() const noexcept { return data_.covariates() + (opts_.estimate_sigma2_alpha ? 1 : 0); }
  Eigen::Index units() const noexcept { return data_.n(); }

  std::vector<Constraint> constraints() const {
    std::vector<Constraint> c(static_cast<std::size_t>(dim()), Constraint::unbounded);
    if (opts_.estimate_sigma2_alpha) c.back() = Constraint::positive;
    return c;
  }

  ParameterVector make_theta(const Vector& beta, double sigma2_alpha = 1.0) const {
    Vector v(dim());
    v.head(beta_dim()) = beta;
    if (opts_.estimate_sigma2_alpha) v(beta_dim()) = sigma2_alpha;
    return ParameterVector(std::move(v), constraints());
  }

  double sigma2_alpha(const ParameterVector& theta) const {
    return opts_.estimate_sigma2_alpha ? theta[beta_dim()] : opts_.sigma2_alpha;
  }

  /// Flat on beta; (sigma_alpha^2)^{-1} when sigma_alpha^2 is a parameter.
  double log_prior(const ParameterVector& theta) const {
    if (!opts_.estimate_sigma2_alpha) return 0.0;
    const double s = theta[beta_dim()];
    if (!(s > 0.0)) return -std::numeric_limits<double>::infinity();
    return -std::log(s);
  }

  struct InnerStep {
    double alpha;
    bool accepted;
  };

  /// One independence-MH step for unit i with proposal N(0, sigma_alpha^2): the
  /// proposal equals the latent prior, so the ratio is the likelihood ratio.
  InnerStep inner_step(Eigen::Index i, double linear, double alpha, double sd, Rng& rng) const {
    const double proposal = sd * standard_normal(rng);
    const double y = data_.y(i);
    const double log_r = probit_log_lik(y, linear + proposal) - probit_log_lik(y, linear + alpha);
    if (log_r >= 0.0 || uniform01(rng) < std::exp(log_r)) return {proposal, true};
    return {alpha, false};
  }

  /// Per unit: 2N inner MH iterations started from a prior draw; the first N are discarded.
  LatentDrawSet sample_latents(const ParameterVector& theta, std::size_t n_draws, Rng& rng) const {
    check(theta);
    const double sd = std::sqrt(sigma2_alpha(theta));
    const Vector linear = data_.x * theta.values().head(beta_dim());
    LatentDrawSet out;
    out.burn_in = n_draws;
    out.draws.assign(n_draws, Matrix(data_.n(), 1));
    std::size_t accepted = 0;
    for (Eigen::Index i = 0; i < data_.n(); ++i) {
      double alpha = sd * standard_normal(rng);
      for (std::size_t k = 0; k < 2 * n_draws; ++k) {
        const InnerStep s = inner_step(i, linear(i), alpha, sd, rng);
        alpha = s.alpha;
        accepted += s.accepted ? 1u : 0u;
        if (k >= n_draws) out.draws[k - n_draws](i, 0) = alpha;
      }
    }
    out.inner_acceptance = static_cast<double>(accepted) /
                           (static_cast<double>(data_.n()) * 2.0 * static_cast<double>(n_draws));
    return out;
  }

  /// Rows (x_i u_i(theta, alpha_i), [-1/(2 s) + alpha_i^2 / (2 s^2)]) per draw.
  std::vector<Matrix> complete_scores(const ParameterVector& theta, const LatentDrawSet& z) const {
    check(theta);
    const Eigen::Index p = beta_dim();
    const double s = sigma2_alpha(theta);
    const Vector linear = data_.x * theta.values().head(p);
    std::vector<Matrix> out;
    out.reserve(z.count());
    for (const auto& alpha : z.draws) {
      Matrix m(data_.n(), dim());
      for (Eigen::Index i = 0; i < data_.n(); ++i) {
        const double u = probit_u(data_.y(i), linear(i) + alpha(i, 0));
        m.row(i).head(p) = u * data_.x.row(i);
        if (opts_.estimate_sigma2_alpha) m(i, p) = -0.5 / s + alpha(i, 0) * alpha(i, 0) / (2.0 * s * s);
      }
      out.push_back(std::move(m));
    }
    return out;
  }

  /// sum_i log P(y_i | x_i' beta + alpha_i) + log N(alpha_i; 0, sigma_alpha^2).
  double complete_log_density(const ParameterVector& theta, const Vector& alpha) const {
    check(theta);
    const double s = sigma2_alpha(theta);
    const Vector linear = data_.x * theta.values().head(beta_dim());
    double out = 0.0;
    for (Eigen::Index i = 0; i < data_.n(); ++i) {
      out += probit_log_lik(data_.y(i), linear(i) + alpha(i));
      out += -0.5 * std::log(2.0 * std::numbers::pi * s) - alpha(i) * alpha(i) / (2.0 * s);
    }
    return out;
  }

  ParameterVector initial_point() const { return make_theta(Vector::Zero(beta_dim()), opts_.sigma2_alpha); }

  /// Consistent preliminary estimate: marginal MLE for beta, sigma_alpha^2 at its configured value.
  ParameterVector preliminary_estimate() const {
    return make_theta(probit_marginal_mle(data_, opts_.sigma2_alpha), opts_.sigma2_alpha);
  }

  Vector proposal_scales() const {
    Vector scales = Vector::Constant(dim(), 0.15);
    if (opts_.estimate_sigma2_alpha) scales(beta_dim()) = 0.3;
    return scales;
  }

 private:
  void check(const ParameterVector& theta) const {
    if (theta.size() != dim()) throw ContractError("ProbitReModel: theta has the wrong dimension");
    if (opts_.estimate_sigma2_alpha && !(theta[beta_dim()] > 0.0))
      throw ContractError("ProbitReModel: sigma_alpha^2 must be > 0");
  }

  Dataset data_;
  Options opts_;
};

}  // namespace qpost
