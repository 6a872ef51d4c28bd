#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/kernel.hpp"
#include "qpost/core/random.hpp"
#include "qpost/experiments/config.hpp"
#include "qpost/experiments/interval.hpp"
#include "qpost/experiments/report.hpp"
#include "qpost/models/dgp.hpp"
#include "qpost/models/lin_re.hpp"
#include "qpost/models/linreg.hpp"
#include "qpost/models/median.hpp"
#include "qpost/models/probit_re.hpp"
#include "qpost/samplers/gibbs.hpp"
#include "qpost/samplers/pseudo_marginal.hpp"
#include "qpost/samplers/rwmh.hpp"

namespace qpost {

/// Posterior summary of one method on one replication.
struct MethodOutcome {
  Method method = Method::q_posterior;
  bool ok = false;
  std::string error;
  Vector mean;
  Vector var;
  Vector lo;
  Vector hi;
  std::vector<bool> covered;
  double acceptance = 0.0;
  std::optional<double> inner_acceptance;
  std::size_t nonfinite_rejections = 0;
  /// Post-burn-in draws of the reported coordinates, kept only when traces are requested.
  std::optional<Matrix> retained;
};

struct ReplicationOutcome {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  Vector truth;
  std::vector<MethodOutcome> methods;
};

struct ExperimentResult {
  ReplicationReport report;
  std::vector<ReplicationOutcome> replications;
  double elapsed_seconds = 0.0;
};

inline std::vector<std::string> coordinate_names(const ExperimentConfig& c) {
  if (c.dgp.kind == ModelKind::median) return {"theta"};
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < c.dgp.beta.size(); ++j) names.push_back("beta" + std::to_string(j + 1));
  return names;
}

/// Independent stream for method m of a replication; fixed per method so adding
/// or removing methods leaves the others unchanged.
inline Rng method_rng(std::uint64_t replication_seed_value, Method m) {
  const std::uint64_t salt = 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(m) + 1);
  return make_rng(replication_seed_value ^ salt);
}

namespace detail {

inline ProposalConfig proposal_for(const ExperimentConfig& c, const Vector& scales) {
  ProposalConfig p;
  p.covariance = Matrix(scales.array().square().matrix().asDiagonal());
  p.step_scale = c.step_scale > 0.0 ? c.step_scale : 2.38 / std::sqrt(static_cast<double>(scales.size()));
  p.adapt = c.adapt;
  p.target_acceptance = c.target_acceptance;
  return p;
}

/// Kernel wrapper that maps a singular weight to a rejected (NaN) proposal.
template <class M>
auto tractable_kernel(const M& model, KernelOptions opts) {
  return [&model, opts](const ParameterVector& theta) {
    try {
      return log_q_kernel(model, theta, opts).log_kernel;
    } catch (const SingularWeightError&) {
      return std::numeric_limits<double>::quiet_NaN();
    } catch (const NumericError&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
}

/// In fixed_at_estimate mode, estimates W once at the model's preliminary estimate.
template <class M>
void fix_weight(const ExperimentConfig& c, const M& model, PseudoMarginalOptions& pm, Rng& rng) {
  if (c.weight_mode != WeightMode::fixed_at_estimate) return;
  // w1 and w2 are estimated with many draws; w2 enters at the rate of the chain's own N
  const EstimatedScore est = fisher_score(model, model.preliminary_estimate(), kFixedWeightDraws, rng, pm.fisher);
  pm.fixed_weight = factorize_psd(est.w1 + w2_coefficient(c.weight, c.n_latent) * est.w2, pm.fisher.factorize);
}

inline ChainTrace run_method(const ExperimentConfig& c, const Dataset& data, Method method, Rng& rng) {
  const bool det = c.resolved_include_det();
  PseudoMarginalOptions pm;
  pm.fisher.composition = c.weight;
  pm.include_det = det;
  switch (c.dgp.kind) {
    case ModelKind::linreg: {
      if (method == Method::exact) {
        LinRegGibbsOptions g;
        if (!c.exact_sample_sigma2) g.fixed_sigma2 = c.dgp.sigma * c.dgp.sigma;
        return gibbs_exact_linreg(data, c.chain, rng, g);
      }
      const LinRegModel model(data);
      return rwmh(tractable_kernel(model, KernelOptions{det, std::nullopt, {}}), model.initial_point(), c.chain,
                  proposal_for(c, model.proposal_scales()), rng);
    }
    case ModelKind::lin_re: {
      if (method == Method::exact) {
        LinReGibbsOptions g;
        if (!c.exact_sample_sigma2) g.fixed_sigma2 = c.dgp.sigma * c.dgp.sigma;
        if (!c.exact_sample_sigma2_alpha) g.fixed_sigma2_alpha = c.dgp.sigma2_alpha;
        return gibbs_exact_lin_re(data, c.chain, rng, g);
      }
      const LinReModel model(data, c.dgp.sigma2_alpha);
      fix_weight(c, model, pm, rng);
      return pm_mh_q(model, model.initial_point(), c.chain, c.n_latent, proposal_for(c, model.proposal_scales()), rng,
                     pm);
    }
    case ModelKind::probit_re: {
      if (method == Method::exact) {
        ProbitGibbsOptions g;
        g.fixed_sigma2_alpha = c.exact_sample_sigma2_alpha ? std::nullopt : std::optional<double>(c.dgp.sigma2_alpha);
        return gibbs_exact_probit_re(data, c.chain, rng, g);
      }
      const ProbitReModel model(data, {c.q_estimate_sigma2_alpha, c.dgp.sigma2_alpha});
      fix_weight(c, model, pm, rng);
      // Started at the marginal MLE: from beta = 0 the kernel is steep enough that burn-in
      // adaptation can shrink the step to nothing before the chain reaches the mode.
      return pm_mh_q(model, model.preliminary_estimate(), c.chain, c.n_latent,
                     proposal_for(c, model.proposal_scales()), rng, pm);
    }
    case ModelKind::median: {
      std::vector<double> y(data.y.data(), data.y.data() + data.y.size());
      const MedianModel model(std::move(y), c.bootstrap_resamples, rng);
      const ProposalConfig prop = proposal_for(c, model.proposal_scales());
      if (method == Method::generalized) {
        if (c.generalized == GeneralizedKind::loss)
          return rwmh([&](const ParameterVector& t) { return model.generalized_log_kernel(t); }, model.initial_point(),
                      c.chain, prop, rng);
        return rwmh([&](const ParameterVector& t) { return model.median_likelihood_log_kernel(t); },
                    model.initial_point(), c.chain, prop, rng);
      }
      return rwmh(tractable_kernel(model, KernelOptions{det, std::nullopt, {}}), model.initial_point(), c.chain, prop,
                  rng);
    }
  }
  throw ContractError("run_method: unknown model kind");
}

inline MethodOutcome summarize(const ExperimentConfig& c, const ChainTrace& trace, const Vector& truth, Method m) {
  MethodOutcome out;
  out.method = m;
  const Eigen::Index p = truth.size();
  const Matrix kept = trace.retained().leftCols(p);
  if (!kept.allFinite()) throw NumericError("non-finite posterior draws");
  out.mean = kept.colwise().mean().transpose();
  const Matrix centred = kept.rowwise() - out.mean.transpose();
  out.var = (centred.array().square().colwise().sum() / static_cast<double>(kept.rows() - 1)).transpose();
  out.lo.resize(p);
  out.hi.resize(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const auto [lo, hi] = credible_interval(trace, j, c.credible_level, c.interval);
    out.lo(j) = lo;
    out.hi(j) = hi;
    out.covered.push_back(lo <= truth(j) && truth(j) <= hi);
  }
  out.acceptance = trace.acceptance_rate;
  out.inner_acceptance = trace.diagnostics.inner_acceptance;
  out.nonfinite_rejections = trace.diagnostics.nonfinite_rejections;
  out.ok = true;
  return out;
}

}  // namespace detail

/// Generates the data of replication r and runs every configured method on it.
/// Method failures are recorded, never thrown.
inline ReplicationOutcome run_replication(const ExperimentConfig& c, std::size_t r, bool keep_draws = false) {
  ReplicationOutcome out;
  out.index = r;
  out.seed = replication_seed(c.seed, r);
  Rng data_rng = make_rng(out.seed);
  const GeneratedData gen = generate(c.dgp, data_rng);
  out.truth = gen.pseudo_truth;
  for (Method m : c.methods) {
    Rng rng = method_rng(out.seed, m);
    try {
      const ChainTrace trace = detail::run_method(c, gen.data, m, rng);
      MethodOutcome mo = detail::summarize(c, trace, out.truth, m);
      if (keep_draws) mo.retained = trace.retained().leftCols(out.truth.size());
      out.methods.push_back(std::move(mo));
    } catch (const std::exception& e) {
      MethodOutcome mo;
      mo.method = m;
      mo.error = e.what();
      out.methods.push_back(std::move(mo));
    }
  }
  return out;
}

/// Reduces replication outcomes (in index order) into the report.
inline ReplicationReport reduce_replications(const ExperimentConfig& c, const std::vector<ReplicationOutcome>& reps) {
  ReplicationReport report;
  report.name = c.name;
  report.replications = reps.size();
  report.coordinate_names = coordinate_names(c);
  const auto p = static_cast<Eigen::Index>(report.coordinate_names.size());
  if (!reps.empty()) report.pseudo_truth.assign(reps.front().truth.data(), reps.front().truth.data() + reps.front().truth.size());
  for (std::size_t k = 0; k < c.methods.size(); ++k) {
    MethodSummary s;
    s.method = c.methods[k];
    Vector bias = Vector::Zero(p);
    Vector var = Vector::Zero(p);
    Vector cov = Vector::Zero(p);
    double acc = 0.0;
    double inner = 0.0;
    std::size_t inner_n = 0;
    for (const auto& rep : reps) {
      const MethodOutcome& mo = rep.methods[k];
      if (!mo.ok) {
        ++s.failures;
        continue;
      }
      ++s.successes;
      bias += mo.mean - rep.truth;
      var += mo.var;
      for (Eigen::Index j = 0; j < p; ++j) cov(j) += mo.covered[static_cast<std::size_t>(j)] ? 1.0 : 0.0;
      acc += mo.acceptance;
      if (mo.inner_acceptance) {
        inner += *mo.inner_acceptance;
        ++inner_n;
      }
      s.nonfinite_rejections += mo.nonfinite_rejections;
    }
    const double ok = static_cast<double>(s.successes);
    for (Eigen::Index j = 0; j < p; ++j) {
      CoordinateSummary cs;
      cs.name = report.coordinate_names[static_cast<std::size_t>(j)];
      if (s.successes > 0) {
        cs.bias = bias(j) / ok;
        cs.var = var(j) / ok;
        cs.cov = cov(j) / ok;
        cs.cov_se = std::sqrt(cs.cov * (1.0 - cs.cov) / ok);
      } else {
        cs.bias = cs.var = cs.cov = cs.cov_se = std::numeric_limits<double>::quiet_NaN();
      }
      s.coords.push_back(cs);
    }
    s.mean_acceptance = s.successes ? acc / ok : 0.0;
    if (inner_n) s.mean_inner_acceptance = inner / static_cast<double>(inner_n);
    report.methods.push_back(std::move(s));
  }
  return report;
}

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every replication over a pool of workers and reduces the results,
/// without applying the failure budget.
///
/// Replication r always uses seed base ^ r, and results are reduced in index
/// order, so the report does not depend on the worker count.
inline ExperimentResult run_replications(const ExperimentConfig& c, const ProgressFn& progress = {}) {
  c.validate();
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result;
  result.replications.resize(c.replications);
  // Warm any cached pseudo-truth before the workers start.
  (void)pseudo_truth(c.dgp);

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mu;
  std::exception_ptr fatal;
  std::mutex fatal_mu;
  auto work = [&] {
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= c.replications) return;
      try {
        result.replications[r] = run_replication(c, r, c.save_traces && r < c.trace_limit);
      } catch (...) {
        std::lock_guard<std::mutex> lock(fatal_mu);
        if (!fatal) fatal = std::current_exception();
        next.store(c.replications);
        return;
      }
      const std::size_t d = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mu);
        progress(d, c.replications);
      }
    }
  };
  const std::size_t n_workers = std::min(c.workers, c.replications);
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work);
  }
  if (fatal) std::rethrow_exception(fatal);

  result.report = reduce_replications(c, result.replications);
  result.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

/// Throws ExperimentError when fewer than 95% of the replications of some method succeeded.
inline void check_failure_budget(const ExperimentConfig& c, const ExperimentResult& result) {
  for (const auto& m : result.report.methods) {
    if (static_cast<double>(m.successes) < 0.95 * static_cast<double>(c.replications)) {
      std::string first_error;
      for (const auto& rep : result.replications)
        for (const auto& mo : rep.methods)
          if (mo.method == m.method && !mo.ok && first_error.empty()) first_error = mo.error;
      throw ExperimentError("method " + to_string(m.method) + ": only " + std::to_string(m.successes) + " of " +
                            std::to_string(c.replications) + " replications succeeded (first error: " + first_error +
                            ")");
    }
  }
}

/// run_replications followed by the 95% success check.
inline ExperimentResult run_experiment(const ExperimentConfig& c, const ProgressFn& progress = {}) {
  ExperimentResult result = run_replications(c, progress);
  check_failure_budget(c, result);
  return result;
}

}  // namespace qpost
