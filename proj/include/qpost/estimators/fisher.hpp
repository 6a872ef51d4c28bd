#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/linalg.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"

namespace qpost {

/// N sets of latent draws, each n x d_alpha, from p_theta(alpha | y).
struct LatentDrawSet {
  std::vector<Matrix> draws;
  std::size_t burn_in = 0;
  /// Acceptance rate of the inner Metropolis-Hastings sampler, when one is used.
  std::optional<double> inner_acceptance;

  std::size_t count() const noexcept { return draws.size(); }
};

/// A latent-variable model usable with Fisher's identity.
///
/// `complete_scores` returns one n x d matrix of per-unit complete-data scores
/// nabla_theta log p_theta(y_i, alpha_i^{(j)}) per latent draw j.
template <class M>
concept LatentModel = requires(const M& m, const ParameterVector& theta, Rng& rng,
                               const LatentDrawSet& z, std::size_t n_draws) {
  { m.dim() } -> std::convertible_to<Eigen::Index>;
  { m.units() } -> std::convertible_to<Eigen::Index>;
  { m.log_prior(theta) } -> std::convertible_to<double>;
  { m.sample_latents(theta, n_draws, rng) } -> std::same_as<LatentDrawSet>;
  { m.complete_scores(theta, z) } -> std::same_as<std::vector<Matrix>>;
};

/// How the between-unit and within-unit pieces are combined into the weight.
enum class WeightComposition {
  w1_only,           // ignore simulation noise
  w1_plus_w2_over_n, // Var(mean of N draws) = Var(E[.|y]) + E[Var(.|y)]/N
  w1_plus_w2,
};

inline double w2_coefficient(WeightComposition c, std::size_t draws) {
  switch (c) {
    case WeightComposition::w1_only: return 0.0;
    case WeightComposition::w1_plus_w2_over_n: return 1.0 / static_cast<double>(draws);
    case WeightComposition::w1_plus_w2: return 1.0;
  }
  return 0.0;
}

struct VarianceSplit {
  Matrix w1;
  Matrix w2;
  WeightMatrix w_total;
};

/// Between-unit covariance of the draw-averaged scores (w1), average within-unit
/// covariance across draws (w2), and the factorized combination.
inline VarianceSplit variance_split(const ScorePanel& panel,
                                    WeightComposition composition = WeightComposition::w1_plus_w2_over_n,
                                    const FactorizeOptions& factorize = {}) {
  const std::size_t n_draws = panel.draws();
  if (n_draws < 2)
    throw InsufficientDataError("variance_split: need at least 2 draws per unit, got " +
                                std::to_string(n_draws));
  if (panel.units() < 2)
    throw InsufficientDataError("variance_split: need at least 2 units, got " +
                                std::to_string(panel.units()));
  if (!panel.all_finite()) throw NumericError("variance_split: non-finite scores");

  VarianceSplit out;
  out.w1 = covariance_of_rows(panel.unit_scores);

  const Eigen::Index n = panel.units();
  const Eigen::Index d = panel.dim();
  // Deviations from the first draw, centred per unit, so duplicated draws give exactly 0.
  const Matrix& first = panel.draw_scores[0];
  Matrix centre = Matrix::Zero(n, d);
  for (const auto& s : panel.draw_scores) centre += s - first;
  centre /= static_cast<double>(n_draws);
  out.w2 = Matrix::Zero(d, d);
  Matrix dev(n, d);
  for (const auto& s : panel.draw_scores) {
    dev.noalias() = s - first - centre;
    out.w2.noalias() += dev.transpose() * dev;
  }
  out.w2 /= static_cast<double>(n) * static_cast<double>(n_draws);
  out.w2 = 0.5 * (out.w2 + out.w2.transpose());

  const double c = w2_coefficient(composition, n_draws);
  out.w_total = factorize_psd(out.w1 + c * out.w2, factorize);
  return out;
}

namespace detail {

inline std::size_t first_nonfinite_row(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    if (!m.row(i).allFinite()) return static_cast<std::size_t>(i);
  return 0;
}

}  // namespace detail

struct EstimatedScore {
  ScorePanel panel;
  Vector m_hat;
  Matrix w1;
  Matrix w2;
  WeightMatrix w_total;
  LatentDrawSet latents;
};

struct FisherOptions {
  WeightComposition composition = WeightComposition::w1_plus_w2_over_n;
  FactorizeOptions factorize;
  /// Skip the weight (used when a fixed weight is supplied elsewhere).
  bool compute_weight = true;
};

/// Monte Carlo estimate of m_n(theta) through Fisher's identity.
///
/// Draws N latent sets from the model's conditional sampler, evaluates the
/// complete-data scores at each, and averages over draws. With N == 1 the weight
/// is the between-unit covariance only (w2 is reported as zero).
template <LatentModel M>
EstimatedScore fisher_score(const M& model, const ParameterVector& theta, std::size_t n_draws,
                            Rng& rng, const FisherOptions& opts = {}) {
  if (n_draws < 1) throw ContractError("fisher_score: need at least one latent draw");
  EstimatedScore out;
  out.latents = model.sample_latents(theta, n_draws, rng);
  for (const auto& draw : out.latents.draws)
    if (!draw.allFinite()) throw EstimationError("fisher_score: non-finite latent draw", detail::first_nonfinite_row(draw));
  out.panel = ScorePanel::from_draws(model.complete_scores(theta, out.latents));
  for (const auto& ds : out.panel.draw_scores)
    if (!ds.allFinite()) throw EstimationError("fisher_score: non-finite complete-data score", detail::first_nonfinite_row(ds));
  out.m_hat = out.panel.total();
  if (!opts.compute_weight) return out;
  if (n_draws >= 2) {
    auto split = variance_split(out.panel, opts.composition, opts.factorize);
    out.w1 = std::move(split.w1);
    out.w2 = std::move(split.w2);
    out.w_total = std::move(split.w_total);
  } else {
    out.w1 = covariance_of_rows(out.panel.unit_scores);
    out.w2 = Matrix::Zero(out.w1.rows(), out.w1.cols());
    out.w_total = factorize_psd(out.w1, opts.factorize);
  }
  return out;
}

}  // namespace qpost
