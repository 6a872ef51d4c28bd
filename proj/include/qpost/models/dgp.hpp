#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "qpost/core/errors.hpp"
#include "qpost/core/normal.hpp"
#include "qpost/core/random.hpp"
#include "qpost/core/types.hpp"
#include "qpost/models/dataset.hpp"

namespace qpost {

enum class ModelKind { linreg, lin_re, probit_re, median };
enum class LatentDist { gaussian, student_t4 };
enum class MedianDgp { dgp1, dgp2 };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::linreg: return "linreg";
    case ModelKind::lin_re: return "lin_re";
    case ModelKind::probit_re: return "probit_re";
    case ModelKind::median: return "median";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "linreg") return ModelKind::linreg;
  if (s == "lin_re") return ModelKind::lin_re;
  if (s == "probit_re") return ModelKind::probit_re;
  if (s == "median") return ModelKind::median;
  throw ConfigError("unknown model kind '" + s + "' (expected linreg, lin_re, probit_re or median)");
}

/// What the coverage of a probit experiment is scored against.
enum class CoverageTarget { pseudo_true, generating };

/// Data-generating process for one of the reference models.
struct DgpSpec {
  ModelKind kind = ModelKind::linreg;
  std::size_t n = 100;
  Vector beta = Vector::Ones(3);
  double sigma = 1.0;
  /// Error variance is sigma^2 (1 + |x_h|^gamma) where x_h is the first random covariate.
  double gamma = 0.0;
  /// Prepend a constant column; beta(0) is then the intercept.
  bool intercept = false;
  double sigma2_alpha = 1.0;
  LatentDist latent_dist = LatentDist::gaussian;
  MedianDgp median_dgp = MedianDgp::dgp1;
  CoverageTarget coverage_target = CoverageTarget::pseudo_true;

  void validate() const {
    if (n < 2) throw ContractError("DgpSpec: n must be >= 2");
    if (gamma < 0.0) throw ContractError("DgpSpec: gamma must be >= 0");
    if (kind != ModelKind::median) {
      if (beta.size() < 1) throw ContractError("DgpSpec: beta must be non-empty");
      if (intercept && beta.size() < 2) throw ContractError("DgpSpec: intercept design needs beta of length >= 2");
    }
    if (!(sigma > 0.0) || !(sigma2_alpha > 0.0)) throw ContractError("DgpSpec: scales must be > 0");
  }

  /// Median designs use odd n so the sample median is a single order statistic.
  std::size_t effective_n() const { return (kind == ModelKind::median && n % 2 == 0) ? n + 1 : n; }
};

struct GeneratedData {
  Dataset data;
  /// Value the credible intervals are scored against, one entry per reported coordinate.
  Vector pseudo_truth;
};

namespace detail {

inline Matrix draw_design(const DgpSpec& spec, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(spec.n);
  const Eigen::Index p = spec.beta.size();
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) x(i, j) = (spec.intercept && j == 0) ? 1.0 : standard_normal(rng);
  }
  return x;
}

inline Eigen::Index heteroskedastic_column(const DgpSpec& spec) { return spec.intercept ? 1 : 0; }

inline double error_sd(const DgpSpec& spec, double x_h) {
  return spec.sigma * std::sqrt(1.0 + std::pow(std::abs(x_h), spec.gamma));
}

}  // namespace detail

/// CDF of 0.9 N(1, 2^2) + 0.1 N(0, 1).
inline double median_dgp2_cdf(double v) { return 0.9 * normal::cdf((v - 1.0) / 2.0) + 0.1 * normal::cdf(v); }

/// Population median of the contaminated design, by bisection on its CDF.
inline double median_dgp2_population_median() {
  double lo = -5.0;
  double hi = 5.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (median_dgp2_cdf(mid) < 0.5 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// P(y = 1 | index t) when alpha ~ t_4:  int Phi(t + a) f_4(a) da.
///
/// Uses a = 2 tan(phi), under which f_4(a) da = (3/4) cos^3(phi) dphi on (-pi/2, pi/2).
inline double probit_t4_success_probability(double t, int nodes = 400) {
  const double h = std::numbers::pi / nodes;
  double sum = 0.0;
  for (int k = 0; k < nodes; ++k) {
    const double phi = -0.5 * std::numbers::pi + (k + 0.5) * h;
    const double c = std::cos(phi);
    sum += normal::cdf(t + 2.0 * std::tan(phi)) * 0.75 * c * c * c;
  }
  return sum * h;
}

/// Pseudo-true beta for the probit random-effects model (sigma_alpha^2 held at
/// `assumed_sigma2_alpha`) when the true random effects are t_4.
///
/// Maximizes the expected log-likelihood E_x[p0(x) log Phi(x'b/s) + (1 - p0(x)) log Phi(-x'b/s)]
/// with s = sqrt(1 + sigma_alpha^2), averaging over a large fixed covariate sample.
inline Vector probit_t4_pseudo_truth(const DgpSpec& spec, double assumed_sigma2_alpha,
                                     std::size_t sample = 100'000, std::uint64_t seed = 20240917ULL) {
  Rng rng = make_rng(seed);
  DgpSpec design = spec;
  design.n = sample;
  const Matrix x = detail::draw_design(design, rng);
  const auto m = static_cast<Eigen::Index>(sample);
  Vector p0(m);
  const Vector t0 = x * spec.beta;
  for (Eigen::Index i = 0; i < m; ++i) p0(i) = probit_t4_success_probability(t0(i));

  // Newton on the weighted probit log-likelihood in g = b / s.
  Vector g = spec.beta / std::sqrt(1.0 + assumed_sigma2_alpha);
  for (int it = 0; it < 50; ++it) {
    const Vector t = x * g;
    Vector grad = Vector::Zero(g.size());
    Matrix info = Matrix::Zero(g.size(), g.size());
    for (Eigen::Index i = 0; i < m; ++i) {
      const double lp = normal::log_pdf(t(i));
      const double up = std::exp(lp - normal::log_cdf(t(i)));   // phi / Phi
      const double dn = std::exp(lp - normal::log_cdf(-t(i)));  // phi / (1 - Phi)
      grad += (p0(i) * up - (1.0 - p0(i)) * dn) * x.row(i).transpose();
      // expected information weight under the true p0 (observed Hessian of the weighted loss)
      const double w = p0(i) * up * (up + t(i)) + (1.0 - p0(i)) * dn * (dn - t(i));
      info += w * x.row(i).transpose() * x.row(i);
    }
    const Vector step = info.ldlt().solve(grad);
    g += step;
    if (step.norm() < 1e-12) break;
  }
  return g * std::sqrt(1.0 + assumed_sigma2_alpha);
}

/// Coverage target for a design (cached per distinct spec, since the probit
/// computation is expensive).
inline Vector pseudo_truth(const DgpSpec& spec) {
  switch (spec.kind) {
    case ModelKind::linreg:
    case ModelKind::lin_re:
      return spec.beta;
    case ModelKind::median:
      return Vector::Constant(1, spec.median_dgp == MedianDgp::dgp1 ? 1.0 : median_dgp2_population_median());
    case ModelKind::probit_re: {
      if (spec.latent_dist == LatentDist::gaussian || spec.coverage_target == CoverageTarget::generating)
        return spec.beta;
      static std::mutex mu;
      static std::map<std::vector<double>, Vector> cache;
      std::vector<double> key(spec.beta.data(), spec.beta.data() + spec.beta.size());
      key.push_back(spec.intercept ? 1.0 : 0.0);
      key.push_back(spec.sigma2_alpha);
      std::lock_guard<std::mutex> lock(mu);
      auto it = cache.find(key);
      if (it == cache.end()) it = cache.emplace(key, probit_t4_pseudo_truth(spec, spec.sigma2_alpha)).first;
      return it->second;
    }
  }
  return spec.beta;
}

/// Draws one dataset from the design and attaches its coverage target.
inline GeneratedData generate(const DgpSpec& spec, Rng& rng) {
  spec.validate();
  GeneratedData out;
  const auto n = static_cast<Eigen::Index>(spec.effective_n());
  if (spec.kind == ModelKind::median) {
    out.data.y.resize(n);
    out.data.x.resize(n, 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool contaminated = spec.median_dgp == MedianDgp::dgp2 && uniform01(rng) < 0.1;
      out.data.y(i) = contaminated ? standard_normal(rng) : 1.0 + 2.0 * standard_normal(rng);
    }
    out.pseudo_truth = pseudo_truth(spec);
    return out;
  }

  DgpSpec sized = spec;
  sized.n = static_cast<std::size_t>(n);
  out.data.x = detail::draw_design(sized, rng);
  const Vector mean = out.data.x * spec.beta;
  const Eigen::Index h = detail::heteroskedastic_column(spec);
  out.data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    switch (spec.kind) {
      case ModelKind::linreg:
        out.data.y(i) = mean(i) + detail::error_sd(spec, out.data.x(i, h)) * standard_normal(rng);
        break;
      case ModelKind::lin_re: {
        const double alpha = std::sqrt(spec.sigma2_alpha) * standard_normal(rng);
        out.data.y(i) = alpha + mean(i) + detail::error_sd(spec, out.data.x(i, h)) * standard_normal(rng);
        break;
      }
      case ModelKind::probit_re: {
        const double alpha = spec.latent_dist == LatentDist::gaussian
                                 ? std::sqrt(spec.sigma2_alpha) * standard_normal(rng)
                                 : student_t(rng, 4.0);
        out.data.y(i) = (mean(i) + alpha + standard_normal(rng) > 0.0) ? 1.0 : 0.0;
        break;
      }
      case ModelKind::median: break;
    }
  }
  out.pseudo_truth = pseudo_truth(spec);
  return out;
}

}  // namespace qpost
