#pragma once

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>

#include "qpost/core/linalg.hpp"
#include "qpost/core/types.hpp"

namespace qpost {

/// Total score m_n(theta) and an (unfactorized) estimate of Cov{m_n(theta)/sqrt(n)}.
struct ScoreAndWeight {
  Vector total_score;
  Matrix weight;
  Eigen::Index units = 0;
};

/// A model whose score and weight can be evaluated exactly at any theta.
template <class M>
concept TractableModel = requires(const M& m, const ParameterVector& theta) {
  { m.dim() } -> std::convertible_to<Eigen::Index>;
  { m.log_prior(theta) } -> std::convertible_to<double>;
  { m.score_and_weight(theta) } -> std::same_as<ScoreAndWeight>;
};

struct KernelOptions {
  bool include_det = true;
  /// When set, used instead of W_n(theta) at every theta.
  std::optional<WeightMatrix> fixed_weight;
  FactorizeOptions factorize;
};

/// Assembles the kernel from an already computed score and factorized weight.
inline QKernelValue assemble_q_kernel(const Vector& total_score, Eigen::Index units,
                                      const WeightMatrix& weight, double log_prior,
                                      bool include_det) {
  QKernelValue out;
  out.include_det = include_det;
  out.log_prior = log_prior;
  const Vector scaled = total_score / std::sqrt(static_cast<double>(units));
  out.q_term = quad_form(scaled, weight);
  out.log_det_term = include_det ? weight.log_det : 0.0;
  out.log_kernel = -out.q_term + log_prior - 0.5 * out.log_det_term;
  return out;
}

/// log of  |W_n|^{-1/2 [include_det]} exp{-Q_n(theta)} pi(theta).
///
/// Points outside the support (or with zero prior density) give a -inf kernel.
/// SingularWeightError from the weight factorization is propagated.
template <TractableModel M>
QKernelValue log_q_kernel(const M& model, const ParameterVector& theta,
                          const KernelOptions& opts = {}) {
  if (theta.size() != model.dim())
    throw ContractError("log_q_kernel: theta has dimension " + std::to_string(theta.size()) +
                        ", model expects " + std::to_string(model.dim()));
  QKernelValue out;
  out.include_det = opts.include_det;
  if (!theta.in_support()) {
    out.log_prior = out.log_kernel = -std::numeric_limits<double>::infinity();
    return out;
  }
  const double log_prior = model.log_prior(theta);
  if (!(log_prior > -std::numeric_limits<double>::infinity())) {
    out.log_prior = out.log_kernel = -std::numeric_limits<double>::infinity();
    return out;
  }
  const ScoreAndWeight sw = model.score_and_weight(theta);
  if (!sw.total_score.allFinite()) throw NumericError("log_q_kernel: non-finite score");
  if (opts.fixed_weight) {
    return assemble_q_kernel(sw.total_score, sw.units, *opts.fixed_weight, log_prior,
                             opts.include_det);
  }
  return assemble_q_kernel(sw.total_score, sw.units, factorize_psd(sw.weight, opts.factorize),
                           log_prior, opts.include_det);
}

}  // namespace qpost
