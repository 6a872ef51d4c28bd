#pragma once

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"
#include "qpost/estimators/fisher.hpp"

namespace qpost {

struct ChainConfig {
  std::size_t iterations = 10'000;
  std::size_t burn_in = 5'000;
};

/// Gaussian random-walk proposal settings.
///
/// The proposal covariance is step_scale^2 * covariance (identity when unset).
/// With `adapt`, a Robbins-Monro global scale and a diagonal rescaling from the
/// running chain variance are tuned during burn-in and frozen afterwards.
struct ProposalConfig {
  double step_scale = 0.1;
  std::optional<Matrix> covariance;
  bool adapt = true;
  double target_acceptance = 0.234;
};

/// State retained by a pseudo-marginal chain for its current point.
struct PseudoMarginalState {
  ParameterVector theta;
  LatentDrawSet latents;
  double log_v = 0.0;
};

struct ChainDiagnostics {
  /// Calls to the (possibly estimated) kernel, initial point included.
  std::size_t kernel_evaluations = 0;
  /// Proposals that passed the support check and were evaluated.
  std::size_t proposals_evaluated = 0;
  std::size_t support_rejections = 0;
  std::size_t nonfinite_rejections = 0;
  /// Mean inner Metropolis-Hastings acceptance, when an inner sampler is used.
  std::optional<double> inner_acceptance;
  double final_step_scale = 0.0;
};

/// Every iteration of a chain, burn-in included.
struct ChainTrace {
  Matrix draws;  // iterations x d
  std::vector<double> log_kernels;
  std::vector<bool> accepted;
  double acceptance_rate = 0.0;
  std::size_t burn_in = 0;
  std::optional<PseudoMarginalState> pm_state;
  ChainDiagnostics diagnostics;

  Eigen::Index iterations() const noexcept { return draws.rows(); }
  Eigen::Index dim() const noexcept { return draws.cols(); }

  /// Draws after burn-in.
  Matrix retained() const {
    const auto b = static_cast<Eigen::Index>(std::min<std::size_t>(burn_in, static_cast<std::size_t>(draws.rows())));
    return draws.bottomRows(draws.rows() - b);
  }

  double retained_acceptance() const {
    if (accepted.size() <= burn_in) return 0.0;
    std::size_t a = 0;
    for (std::size_t i = burn_in; i < accepted.size(); ++i) a += accepted[i] ? 1u : 0u;
    return static_cast<double>(a) / static_cast<double>(accepted.size() - burn_in);
  }

  void finalize_acceptance() {
    std::size_t a = 0;
    for (bool b : accepted) a += b ? 1u : 0u;
    acceptance_rate = accepted.empty() ? 0.0 : static_cast<double>(a) / static_cast<double>(accepted.size());
  }
};

namespace detail {

/// Random-walk proposal whose scale adapts during burn-in only.
class AdaptiveProposal {
 public:
  AdaptiveProposal(const ProposalConfig& cfg, Eigen::Index d, std::size_t burn_in)
      : cfg_(cfg), d_(d), burn_in_(burn_in), log_scale_(std::log(cfg.step_scale)) {
    if (!(cfg.step_scale > 0.0)) throw ContractError("ProposalConfig: step_scale must be > 0");
    if (!(cfg.target_acceptance > 0.0 && cfg.target_acceptance < 1.0))
      throw ContractError("ProposalConfig: target_acceptance must lie in (0, 1)");
    if (cfg.covariance) {
      if (cfg.covariance->rows() != d || cfg.covariance->cols() != d)
        throw ContractError("ProposalConfig: covariance has wrong shape");
      base_ = *cfg.covariance;
    } else {
      base_ = Matrix::Identity(d, d);
    }
    refactor();
    mean_ = Vector::Zero(d);
    m2_ = Vector::Zero(d);
  }

  Vector step(Rng& rng) const {
    return std::exp(log_scale_) * (factor_ * standard_normal_vector(rng, d_));
  }

  /// Feeds the current state and the acceptance probability of iteration t (0-based).
  void update(std::size_t t, const Vector& state, double accept_prob) {
    if (!cfg_.adapt || t >= burn_in_) return;
    ++count_;
    const Vector delta = state - mean_;
    mean_ += delta / static_cast<double>(count_);
    m2_ += delta.cwiseProduct(state - mean_);

    const double gain = 1.0 / std::pow(static_cast<double>(t) + 1.0, 0.6);
    log_scale_ += gain * (accept_prob - cfg_.target_acceptance);
    log_scale_ = std::clamp(log_scale_, -30.0, 10.0);

    // Switch to the empirical diagonal once, then refresh it periodically.
    if (count_ >= kWarmup && (count_ - kWarmup) % kRefresh == 0 && count_ + kRefresh / 2 < burn_in_) {
      Vector var = m2_ / static_cast<double>(count_ - 1);
      const double floor = 1e-12 * std::max(1.0, var.maxCoeff());
      if (var.allFinite() && var.maxCoeff() > 0.0) {
        var = var.cwiseMax(floor);
        base_ = var.asDiagonal();
        refactor();
        if (!switched_) {
          log_scale_ = std::log(2.38 / std::sqrt(static_cast<double>(d_)));
          switched_ = true;
        }
      }
    }
  }

  double scale() const noexcept { return std::exp(log_scale_); }

 private:
  static constexpr std::size_t kWarmup = 500;
  static constexpr std::size_t kRefresh = 250;

  void refactor() {
    Eigen::LLT<Matrix> llt(base_);
    if (llt.info() != Eigen::Success) throw ContractError("ProposalConfig: covariance is not positive definite");
    factor_ = llt.matrixL();
  }

  ProposalConfig cfg_;
  Eigen::Index d_;
  std::size_t burn_in_;
  double log_scale_;
  Matrix base_;
  Matrix factor_;
  Vector mean_;
  Vector m2_;
  std::size_t count_ = 0;
  bool switched_ = false;
};

inline double acceptance_probability(double log_ratio) {
  if (std::isnan(log_ratio)) return 0.0;
  return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

}  // namespace detail
}  // namespace qpost
