#pragma once

#include <cmath>
#include <concepts>
#include <limits>

#include "qpost/core/errors.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"
#include "qpost/samplers/chain.hpp"

namespace qpost {

/// Random-walk Metropolis-Hastings with a Gaussian proposal.
///
/// Proposals outside the parameter support are rejected without calling the
/// kernel. The proposal is tuned during burn-in (if enabled) and frozen after.
template <class LogKernel>
  requires std::invocable<LogKernel&, const ParameterVector&>
ChainTrace rwmh(LogKernel&& log_kernel, const ParameterVector& init, const ChainConfig& chain,
                const ProposalConfig& proposal, Rng& rng) {
  if (chain.iterations < 1) throw ContractError("rwmh: need at least one iteration");
  if (!init.in_support()) throw InitializationError("rwmh: initial point outside the support");
  double current_lk = log_kernel(init);
  if (!std::isfinite(current_lk)) throw InitializationError("rwmh: initial log kernel is not finite");

  const Eigen::Index d = init.size();
  detail::AdaptiveProposal prop(proposal, d, chain.burn_in);
  ChainTrace trace;
  trace.burn_in = chain.burn_in;
  trace.draws.resize(static_cast<Eigen::Index>(chain.iterations), d);
  trace.log_kernels.reserve(chain.iterations);
  trace.accepted.reserve(chain.iterations);
  trace.diagnostics.kernel_evaluations = 1;

  ParameterVector current = init;
  for (std::size_t t = 0; t < chain.iterations; ++t) {
    ParameterVector candidate = current.with_values(current.values() + prop.step(rng));
    double accept_prob = 0.0;
    bool accept = false;
    if (!candidate.in_support()) {
      ++trace.diagnostics.support_rejections;
    } else {
      const double cand_lk = log_kernel(candidate);
      ++trace.diagnostics.kernel_evaluations;
      ++trace.diagnostics.proposals_evaluated;
      if (std::isnan(cand_lk) || cand_lk == std::numeric_limits<double>::infinity()) {
        ++trace.diagnostics.nonfinite_rejections;
      } else {
        accept_prob = detail::acceptance_probability(cand_lk - current_lk);
        accept = uniform01(rng) < accept_prob;
        if (accept) {
          current = std::move(candidate);
          current_lk = cand_lk;
        }
      }
    }
    prop.update(t, current.values(), accept_prob);
    trace.draws.row(static_cast<Eigen::Index>(t)) = current.values().transpose();
    trace.log_kernels.push_back(current_lk);
    trace.accepted.push_back(accept);
  }
  trace.diagnostics.final_step_scale = prop.scale();
  trace.finalize_acceptance();
  return trace;
}

}  // namespace qpost
