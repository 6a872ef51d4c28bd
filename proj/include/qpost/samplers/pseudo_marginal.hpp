#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "qpost/core/errors.hpp"
#include "qpost/core/kernel.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"
#include "qpost/estimators/fisher.hpp"
#include "qpost/samplers/chain.hpp"

namespace qpost {

/// One realisation of the estimated kernel  log V = -Q_hat - 0.5 log|W_hat|.
struct EstimatedKernel {
  double log_v = -std::numeric_limits<double>::infinity();
  LatentDrawSet latents;
};

struct PseudoMarginalOptions {
  FisherOptions fisher;
  bool include_det = true;
  /// When set, used as W_hat at every theta instead of the estimated weight.
  std::optional<WeightMatrix> fixed_weight;
};

/// Draws z ~ h(z | theta) and evaluates log V at (theta, z).
///
/// Failures of the estimator (singular weight, non-finite scores) produce a
/// -inf log V, which the sampler treats as a rejection.
template <LatentModel M>
EstimatedKernel estimate_log_v(const M& model, const ParameterVector& theta, std::size_t n_draws,
                               Rng& rng, const PseudoMarginalOptions& opts) {
  EstimatedKernel out;
  try {
    FisherOptions fopts = opts.fisher;
    fopts.compute_weight = !opts.fixed_weight.has_value();
    EstimatedScore est = fisher_score(model, theta, n_draws, rng, fopts);
    const WeightMatrix& w = opts.fixed_weight ? *opts.fixed_weight : est.w_total;
    const QKernelValue kv = assemble_q_kernel(est.m_hat, model.units(), w, 0.0, opts.include_det);
    out.log_v = kv.log_kernel;
    out.latents = std::move(est.latents);
  } catch (const SingularWeightError&) {
    out.log_v = std::numeric_limits<double>::quiet_NaN();
  } catch (const NumericError&) {
    out.log_v = std::numeric_limits<double>::quiet_NaN();
  } catch (const EstimationError&) {
    out.log_v = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

namespace detail {

template <class Estimate, class LogPrior>
ChainTrace pseudo_marginal_chain(Estimate&& estimate, LogPrior&& log_prior, const ParameterVector& init,
                                 const ChainConfig& chain, const ProposalConfig& proposal, Rng& rng) {
  if (chain.iterations < 1) throw ContractError("pm_mh_q: need at least one iteration");
  if (!init.in_support()) throw InitializationError("pm_mh_q: initial point outside the support");

  ChainTrace trace;
  trace.burn_in = chain.burn_in;
  const Eigen::Index d = init.size();
  trace.draws.resize(static_cast<Eigen::Index>(chain.iterations), d);
  trace.log_kernels.reserve(chain.iterations);
  trace.accepted.reserve(chain.iterations);

  PseudoMarginalState state{init, {}, 0.0};
  {
    EstimatedKernel first = estimate(init, rng);
    trace.diagnostics.kernel_evaluations = 1;
    if (!std::isfinite(first.log_v))
      throw InitializationError("pm_mh_q: estimated kernel at the initial point is not finite");
    state.latents = std::move(first.latents);
    state.log_v = first.log_v;
  }
  double current_prior = log_prior(init);
  if (!std::isfinite(current_prior)) throw InitializationError("pm_mh_q: prior density is zero at the initial point");

  double inner_sum = 0.0;
  std::size_t inner_count = 0;
  auto note_inner = [&](const LatentDrawSet& z) {
    if (z.inner_acceptance) {
      inner_sum += *z.inner_acceptance;
      ++inner_count;
    }
  };
  note_inner(state.latents);

  AdaptiveProposal prop(proposal, d, chain.burn_in);
  for (std::size_t t = 0; t < chain.iterations; ++t) {
    ParameterVector candidate = state.theta.with_values(state.theta.values() + prop.step(rng));
    double accept_prob = 0.0;
    bool accept = false;
    const double cand_prior = candidate.in_support() ? log_prior(candidate)
                                                     : -std::numeric_limits<double>::infinity();
    if (!std::isfinite(cand_prior)) {
      ++trace.diagnostics.support_rejections;
    } else {
      // Only the proposal's V is computed; the current V is reused as stored.
      EstimatedKernel cand = estimate(candidate, rng);
      ++trace.diagnostics.kernel_evaluations;
      ++trace.diagnostics.proposals_evaluated;
      note_inner(cand.latents);
      if (!std::isfinite(cand.log_v)) {
        ++trace.diagnostics.nonfinite_rejections;
      } else {
        // symmetric proposal: the q-ratio is 1
        const double log_r = (cand.log_v + cand_prior) - (state.log_v + current_prior);
        accept_prob = acceptance_probability(log_r);
        accept = uniform01(rng) < accept_prob;
        if (accept) {
          state.theta = std::move(candidate);
          state.latents = std::move(cand.latents);
          state.log_v = cand.log_v;
          current_prior = cand_prior;
        }
      }
    }
    prop.update(t, state.theta.values(), accept_prob);
    trace.draws.row(static_cast<Eigen::Index>(t)) = state.theta.values().transpose();
    trace.log_kernels.push_back(state.log_v + current_prior);
    trace.accepted.push_back(accept);
  }
  if (inner_count > 0) trace.diagnostics.inner_acceptance = inner_sum / static_cast<double>(inner_count);
  trace.diagnostics.final_step_scale = prop.scale();
  trace.pm_state = std::move(state);
  trace.finalize_acceptance();
  return trace;
}

}  // namespace detail

/// Pseudo-marginal MH with an estimated Q kernel.
///
/// Each iteration proposes theta*, draws fresh latents z* ~ h(z | theta*),
/// computes V* = |W_hat|^{-1/2} exp{-Q_hat(theta*; z*)}, and accepts with
/// probability min(1, V* pi(theta*) / (V pi(theta))). The current (theta, z, V)
/// is kept verbatim until a proposal is accepted.
template <LatentModel M>
ChainTrace pm_mh_q(const M& model, const ParameterVector& init, const ChainConfig& chain,
                   std::size_t n_draws, const ProposalConfig& proposal, Rng& rng,
                   const PseudoMarginalOptions& opts = {}) {
  return detail::pseudo_marginal_chain(
      [&](const ParameterVector& theta, Rng& r) { return estimate_log_v(model, theta, n_draws, r, opts); },
      [&](const ParameterVector& theta) { return model.log_prior(theta); }, init, chain, proposal, rng);
}

/// Metropolis-within-Gibbs form used for the random-effects models: the latent
/// paths are regenerated from p_theta*(alpha | y) at every proposal. Same
/// accept/reject skeleton as pm_mh_q; the inner sampler's acceptance rate is
/// reported in the diagnostics.
template <LatentModel M>
ChainTrace mwg_q(const M& model, const ParameterVector& init, const ChainConfig& chain,
                 std::size_t n_draws, const ProposalConfig& proposal, Rng& rng,
                 const PseudoMarginalOptions& opts = {}) {
  return pm_mh_q(model, init, chain, n_draws, proposal, rng, opts);
}

}  // namespace qpost
