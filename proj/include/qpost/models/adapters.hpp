#pragma once

#include <cmath>
#include <numbers>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/kernel.hpp"
#include "qpost/core/linalg.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"
#include "qpost/estimators/fisher.hpp"

namespace qpost {

/// Presents a tractable model as a latent model whose "latent" draws carry no
/// information: every draw reproduces the exact unit scores, so the Fisher
/// estimate equals m_n(theta) and the within-unit variance is exactly zero.
template <class M>
class DeterministicLatentAdapter {
 public:
  explicit DeterministicLatentAdapter(const M& model) : model_(&model) {}

  Eigen::Index dim() const { return model_->dim(); }
  Eigen::Index units() const { return model_->units(); }
  double log_prior(const ParameterVector& theta) const { return model_->log_prior(theta); }

  LatentDrawSet sample_latents(const ParameterVector&, std::size_t n_draws, Rng&) const {
    LatentDrawSet out;
    out.draws.assign(n_draws, Matrix(units(), 0));
    return out;
  }

  std::vector<Matrix> complete_scores(const ParameterVector& theta, const LatentDrawSet& z) const {
    const Matrix scores = model_->score_panel(theta).unit_scores;
    return std::vector<Matrix>(z.count(), scores);
  }

 private:
  const M* model_;
};

/// Gaussian mean model with identity mean map: S(y) = y, g(eta) = eta, and a
/// Gaussian prior N(mu0, W0) on the mean parameter.
///
/// The unit scores are S(y_i) - eta, so W_n is the sample covariance of the
/// statistics at every eta and the Q kernel is Gaussian in eta.
class GaussianMeanModel {
 public:
  GaussianMeanModel(Matrix suff_stats, Vector prior_mean, Matrix prior_cov)
      : s_(std::move(suff_stats)), mu0_(std::move(prior_mean)), w0_(std::move(prior_cov)) {
    if (s_.rows() < 2) throw InsufficientDataError("GaussianMeanModel: need at least 2 observations");
    if (mu0_.size() != s_.cols() || w0_.rows() != s_.cols() || w0_.cols() != s_.cols())
      throw ContractError("GaussianMeanModel: prior dimension mismatch");
    prior_factor_ = factorize_psd(w0_);
  }

  Eigen::Index dim() const noexcept { return s_.cols(); }
  Eigen::Index units() const noexcept { return s_.rows(); }
  const Matrix& statistics() const noexcept { return s_; }

  double log_prior(const ParameterVector& eta) const {
    const Vector r = eta.values() - mu0_;
    return -quad_form(r, prior_factor_) - 0.5 * prior_factor_.log_det -
           0.5 * static_cast<double>(dim()) * std::log(2.0 * std::numbers::pi);
  }

  ScorePanel score_panel(const ParameterVector& eta) const {
    ScorePanel p;
    p.unit_scores = s_.rowwise() - eta.values().transpose();
    return p;
  }

  ScoreAndWeight score_and_weight(const ParameterVector& eta) const {
    const ScorePanel p = score_panel(eta);
    return {p.total(), covariance_of_rows(p.unit_scores), units()};
  }

 private:
  Matrix s_;
  Vector mu0_;
  Matrix w0_;
  WeightMatrix prior_factor_;
};

}  // namespace qpost
