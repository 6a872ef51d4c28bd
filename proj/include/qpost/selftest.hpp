#pragma once

#include <cmath>
#include <functional>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "qpost/qpost.hpp"

namespace qpost {

struct SelfTestResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

namespace selftest_detail {

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

/// Central-difference gradient of f at v.
inline Vector numeric_gradient(const std::function<double(const Vector&)>& f, const Vector& v, double h = 1e-5) {
  Vector g(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    Vector a = v, b = v;
    const double step = h * std::max(1.0, std::abs(v(i)));
    a(i) += step;
    b(i) -= step;
    g(i) = (f(a) - f(b)) / (2.0 * step);
  }
  return g;
}

/// Short general-format rendering, so tiny values stay visible.
inline std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << v;
  return os.str();
}

inline double max_rel(const Vector& a, const Vector& b) {
  return ((a - b).cwiseAbs().array() / b.cwiseAbs().array().max(1.0)).maxCoeff();
}

}  // namespace selftest_detail

/// Fast invariant checks over the core algebra, the conjugate Q-posterior formulas and the
/// analytic scores. `pdf_at_zero` is injectable so a corrupted constant can be
/// exercised.
inline std::vector<SelfTestResult> run_selftest(double pdf_at_zero = normal::pdf(0.0)) {
  using namespace selftest_detail;
  std::vector<SelfTestResult> out;
  auto check = [&](std::string name, const std::function<std::pair<bool, std::string>()>& body) {
    SelfTestResult r;
    r.name = std::move(name);
    try {
      auto [ok, detail] = body();
      r.passed = ok;
      r.detail = std::move(detail);
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("threw: ") + e.what();
    }
    out.push_back(std::move(r));
  };

  check("normal_pdf_at_zero", [&] {
    const double expected = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return std::pair{std::abs(pdf_at_zero - expected) < 1e-15, "phi(0) = " + num(pdf_at_zero)};
  });
  check("quad_form_2x2", [] {
    Matrix w(2, 2);
    w << 2.0, 0.5, 0.5, 1.0;
    Vector s(2);
    s << 1.0, -1.0;
    const double det = 2.0 * 1.0 - 0.25;
    // hand inverse: [[1, -0.5], [-0.5, 2]] / det
    const double expected = 0.5 * (1.0 * 1.0 + 2.0 * 0.5 * 1.0 + 2.0 * 1.0) / det;
    const double got = quad_form(s, factorize_psd(w));
    return std::pair{std::abs(got - expected) < 1e-12, "got " + num(got)};
  });
  check("factorize_log_det", [] {
    Matrix w = Matrix::Zero(2, 2);
    w(0, 0) = 4.0;
    w(1, 1) = 9.0;
    const auto f = factorize_psd(w);
    return std::pair{std::abs(f.log_det - std::log(36.0)) < 1e-12 && f.jitter_applied == 0.0, ""};
  });
  check("factorize_jitter", [] {
    const auto f = factorize_psd(Matrix::Ones(2, 2));
    return std::pair{f.jitter_applied > 0.0, "jitter " + num(f.jitter_applied)};
  });
  check("sample_covariance_two_points", [] {
    Matrix rows(2, 2);
    rows << 0.0, 0.0, 2.0, 0.0;
    const Matrix c = covariance_of_rows(rows);
    return std::pair{c(0, 0) == 1.0 && c(0, 1) == 0.0 && c(1, 1) == 0.0, ""};
  });
  check("conjugate_completion_of_square", [] {
    Matrix s(5, 1);
    s << 0.3, -1.2, 2.5, 0.7, 1.1;
    const double mu0 = 0.4;
    const double w0 = 2.0;
    const auto m = conjugate_expfam_moments(s, {Vector::Constant(1, mu0), Matrix::Constant(1, 1, w0)});
    const double n = 5.0;
    const double sbar = s.mean();
    const double wn = (s.array() - sbar).square().sum() / n;
    const double precision = n / wn + 1.0 / w0;
    const double mean = (n / wn * sbar + mu0 / w0) / precision;
    return std::pair{std::abs(m.b_n(0) - mean) < 1e-10 && std::abs(m.covariance(0, 0) - 1.0 / precision) < 1e-10, ""};
  });
  check("linreg_score_finite_difference", [] {
    Rng rng = make_rng(11);
    DgpSpec spec;
    spec.n = 40;
    const LinRegModel model(generate(spec, rng).data);
    Vector v(4);
    v << 0.8, 1.2, 0.9, 1.5;
    const Vector g = numeric_gradient([&](const Vector& t) { return model.log_likelihood(model.make_theta(t.head(3), t(3))); }, v);
    const double err = max_rel(model.score_panel(model.make_theta(v.head(3), v(3))).total(), g);
    return std::pair{err < 1e-6, "rel err " + num(err)};
  });
  check("lin_re_complete_score_finite_difference", [] {
    Rng rng = make_rng(12);
    DgpSpec spec;
    spec.kind = ModelKind::lin_re;
    spec.n = 30;
    spec.beta = Vector::Ones(2);
    const LinReModel model(generate(spec, rng).data, 1.0);
    Vector v(3);
    v << 0.7, 1.1, 0.8;
    LatentDrawSet z = model.sample_latents(model.make_theta(v.head(2), v(2)), 1, rng);
    const Vector alpha = z.draws[0].col(0);
    const Vector g = numeric_gradient(
        [&](const Vector& t) { return model.complete_log_density(model.make_theta(t.head(2), t(2)), alpha); }, v);
    const Vector a = model.complete_scores(model.make_theta(v.head(2), v(2)), z)[0].colwise().sum().transpose();
    const double err = max_rel(a, g);
    return std::pair{err < 1e-6, "rel err " + num(err)};
  });
  check("probit_u_at_origin", [&] {
    const double u = probit_u(1.0, 0.0);
    return std::pair{std::abs(u - 2.0 * pdf_at_zero) < 1e-12, "u = " + num(u)};
  });
  check("median_score_root", [] { return std::pair{std::abs(median_score(0.37, 0.37)) < 1e-15, ""}; });
  check("equal_tailed_interval", [] {
    std::vector<double> d;
    for (int i = 1; i <= 100; ++i) d.push_back(i);
    const auto [lo, hi] = equal_tailed_interval(d, 0.9);
    return std::pair{std::abs(lo - 5.95) < 1e-12 && std::abs(hi - 95.05) < 1e-12, ""};
  });
  check("mixture_median", [] {
    const double m = median_dgp2_population_median();
    return std::pair{std::abs(median_dgp2_cdf(m) - 0.5) < 1e-12 && std::abs(m - 0.84) < 0.01, num(m)};
  });
  return out;
}

}  // namespace qpost
