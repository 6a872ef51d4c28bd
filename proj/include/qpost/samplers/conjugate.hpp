#pragma once

#include <Eigen/Cholesky>
#include <Eigen/LU>

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>

#include "qpost/core/errors.hpp"
#include "qpost/core/linalg.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"

namespace qpost {

/// Gaussian prior on the mean parameter mu = g(eta): N(mu0, W0).
struct MeanParameterPrior {
  Vector mean;
  Matrix covariance;
};

/// Closed-form Gaussian Q-posterior for mu in a natural exponential family.
struct ConjugateQPosterior {
  Vector b_n;
  Matrix covariance;  // Sigma_n^{-1}
  Matrix w_n;         // sample covariance of S(y_i)
  Vector mean_statistic;
  std::size_t units = 0;
};

/// Completes the square in  exp{-(n/2)(mu - S_bar)' W_n^{-1} (mu - S_bar)} N(mu; mu0, W0).
///
/// covariance = n^{-1} W0 [n^{-1} W_n + W0]^{-1} W_n
/// b_n        = W0 [n^{-1} W_n + W0]^{-1} S_bar + n^{-1} W_n [n^{-1} W_n + W0]^{-1} mu0
inline ConjugateQPosterior conjugate_expfam_moments(const Matrix& suff_stats, const MeanParameterPrior& prior) {
  const Eigen::Index n = suff_stats.rows();
  const Eigen::Index d = suff_stats.cols();
  if (prior.mean.size() != d || prior.covariance.rows() != d || prior.covariance.cols() != d)
    throw ContractError("conjugate_expfam_moments: prior dimension does not match the statistics");
  ConjugateQPosterior out;
  out.units = static_cast<std::size_t>(n);
  out.w_n = covariance_of_rows(suff_stats);
  factorize_psd(out.w_n);  // throws when W_n is not usable
  out.mean_statistic = suff_stats.colwise().mean().transpose();
  const double inv_n = 1.0 / static_cast<double>(n);
  const Matrix scaled_wn = inv_n * out.w_n;
  const Eigen::PartialPivLU<Matrix> middle(scaled_wn + prior.covariance);
  out.covariance = prior.covariance * middle.solve(scaled_wn);
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose());
  out.b_n = prior.covariance * middle.solve(out.mean_statistic) + scaled_wn * middle.solve(prior.mean);
  return out;
}

/// Maps a mean-parameter draw back to the natural parameter; nullopt when mu is
/// outside the range of g.
using MeanMapInverse = std::function<std::optional<Vector>(const Vector& mu)>;

struct ConjugateDraws {
  ConjugateQPosterior moments;
  Matrix eta;  // draws x d
  std::size_t rejected = 0;
};

/// Samples eta from the Q-posterior by drawing mu ~ N(b_n, Sigma_n^{-1}) and
/// solving mu = g(eta). Draws outside the range of g are discarded and redrawn.
inline ConjugateDraws conjugate_expfam_qposterior(const Matrix& suff_stats, const MeanParameterPrior& prior,
                                                  const MeanMapInverse& invert, Rng& rng, std::size_t draws,
                                                  std::size_t max_rejections = 1'000'000) {
  ConjugateDraws out;
  out.moments = conjugate_expfam_moments(suff_stats, prior);
  const WeightMatrix cov = factorize_psd(out.moments.covariance);
  const Eigen::Index d = suff_stats.cols();
  out.eta.resize(static_cast<Eigen::Index>(draws), d);
  std::size_t k = 0;
  while (k < draws) {
    const Vector mu = mvn_draw(rng, out.moments.b_n, cov.lower);
    auto eta = invert(mu);
    if (!eta || !eta->allFinite()) {
      if (++out.rejected > max_rejections)
        throw NumericError("conjugate_expfam_qposterior: mean map inversion keeps failing");
      continue;
    }
    out.eta.row(static_cast<Eigen::Index>(k++)) = eta->transpose();
  }
  return out;
}

/// Newton solve of g(eta) = mu given g and its Jacobian (the Hessian of A).
inline std::optional<Vector> newton_invert(const std::function<Vector(const Vector&)>& g,
                                           const std::function<Matrix(const Vector&)>& jacobian,
                                           const Vector& mu, Vector start, int max_iter = 100,
                                           double tol = 1e-12) {
  Vector eta = std::move(start);
  for (int it = 0; it < max_iter; ++it) {
    const Vector r = g(eta) - mu;
    if (!r.allFinite()) return std::nullopt;
    if (r.norm() <= tol * (1.0 + mu.norm())) return eta;
    const Vector step = jacobian(eta).partialPivLu().solve(r);
    if (!step.allFinite()) return std::nullopt;
    eta -= step;
  }
  return std::nullopt;
}

}  // namespace qpost
