#include <gtest/gtest.h>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <functional>
#include <sstream>
#include <vector>

#include "qpost/qpost.hpp"

using namespace qpost;

namespace {

Vector central_difference(const std::function<double(const Vector&)>& f, const Vector& v, double h = 1e-5) {
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

double max_rel_err(const Vector& a, const Vector& b) {
  return ((a - b).cwiseAbs().array() / b.cwiseAbs().array().max(1.0)).maxCoeff();
}

Dataset draw(ModelKind kind, std::size_t n, std::uint64_t seed, double gamma = 0.0) {
  DgpSpec spec;
  spec.kind = kind;
  spec.n = n;
  spec.gamma = gamma;
  if (kind != ModelKind::linreg) {
    spec.beta = Vector::Ones(3);
    spec.intercept = true;
  }
  Rng rng = make_rng(seed);
  return generate(spec, rng).data;
}

}  // namespace

TEST(LinReg, ScoreMatchesFiniteDifference) {
  const LinRegModel model(draw(ModelKind::linreg, 60, 40, 2.0));
  Vector v(4);
  v << 0.7, 1.3, 0.9, 1.7;
  const Vector fd = central_difference([&](const Vector& t) { return model.log_likelihood(model.make_theta(t.head(3), t(3))); }, v);
  EXPECT_LT(max_rel_err(model.score_panel(model.make_theta(v.head(3), v(3))).total(), fd), 1e-6);
}

TEST(LinReg, ScoreVanishesAtMle) {
  const LinRegModel model(draw(ModelKind::linreg, 60, 41));
  EXPECT_LT(model.score_panel(model.mle()).total().cwiseAbs().maxCoeff(), 1e-9);
}

TEST(LinReg, WeightIsScoreCovariance) {
  const LinRegModel model(draw(ModelKind::linreg, 30, 42));
  const auto theta = model.initial_point();
  const auto sw = model.score_and_weight(theta);
  EXPECT_EQ(sw.units, 30);
  EXPECT_LT((sw.weight - covariance_of_rows(model.score_panel(theta).unit_scores)).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(LinRe, CompleteScoreMatchesFiniteDifference) {
  const LinReModel model(draw(ModelKind::lin_re, 50, 43), 1.0);
  Vector v(4);
  v << 0.6, 1.2, 0.8, 0.9;
  Rng rng = make_rng(1);
  const auto z = model.sample_latents(model.make_theta(v.head(3), v(3)), 1, rng);
  const Vector alpha = z.draws[0].col(0);
  const Vector fd = central_difference(
      [&](const Vector& t) { return model.complete_log_density(model.make_theta(t.head(3), t(3)), alpha); }, v);
  const Vector an = model.complete_scores(model.make_theta(v.head(3), v(3)), z)[0].colwise().sum().transpose();
  EXPECT_LT(max_rel_err(an, fd), 1e-6);
}

TEST(LinRe, MarginalScoreMatchesFiniteDifference) {
  const LinReModel model(draw(ModelKind::lin_re, 50, 44), 0.7);
  Vector v(4);
  v << 0.6, 1.2, 0.8, 0.9;
  const Vector fd = central_difference(
      [&](const Vector& t) { return model.marginal_log_likelihood(model.make_theta(t.head(3), t(3))); }, v);
  const Vector an = model.marginal_unit_scores(model.make_theta(v.head(3), v(3))).colwise().sum().transpose();
  EXPECT_LT(max_rel_err(an, fd), 1e-6);
}

TEST(LinRe, LatentConditionalMoments) {
  const LinReModel model(draw(ModelKind::lin_re, 20, 45), 2.0);
  const auto theta = model.make_theta(Vector::Ones(3), 1.0);
  const auto c = model.latent_conditional(theta);
  // shrink = sigma_alpha^2 / (sigma^2 + sigma_alpha^2) = 2/3
  EXPECT_NEAR(c.variance, 2.0 / 3.0, 1e-15);
  const Vector r = model.data().y - model.data().x * Vector::Ones(3);
  EXPECT_LT((c.mean - (2.0 / 3.0) * r).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(LinRe, PriorBoundedAsSigma2Vanishes) {
  const LinReModel model(draw(ModelKind::lin_re, 20, 46), 1.5);
  const Vector b = Vector::Ones(3);
  EXPECT_NEAR(model.log_prior(model.make_theta(b, 1e-12)), -2.0 * std::log(1.5), 1e-10);
  EXPECT_NEAR(model.log_prior(model.make_theta(b, 0.5)), -2.0 * std::log(2.0), 1e-15);
  EXPECT_EQ(model.log_prior(model.make_theta(b, 0.0)), -std::numeric_limits<double>::infinity());
}

TEST(Probit, UMatchesDerivativeOfLogLikelihood) {
  for (double y : {0.0, 1.0}) {
    for (double t : {-30.0, -6.0, -1.0, 0.0, 0.5, 4.0, 25.0}) {
      const double h = 1e-5 * std::max(1.0, std::abs(t));
      const double fd = (probit_log_lik(y, t + h) - probit_log_lik(y, t - h)) / (2.0 * h);
      EXPECT_NEAR(probit_u(y, t), fd, 1e-6 * std::max(1.0, std::abs(fd))) << y << " " << t;
    }
  }
}

TEST(Probit, UAtOriginIsTwicePhiZero) {
  EXPECT_NEAR(probit_u(1.0, 0.0), 2.0 * normal::pdf(0.0), 1e-15);
  EXPECT_NEAR(probit_u(0.0, 0.0), -2.0 * normal::pdf(0.0), 1e-15);
}

TEST(Probit, UIsFiniteAndStrictlyDecreasingEverywhere) {
  for (double y : {0.0, 1.0}) {
    double prev = std::numeric_limits<double>::infinity();
    for (double t = -60.0; t <= 60.0; t += 0.25) {
      const double u = probit_u(y, t);
      ASSERT_TRUE(std::isfinite(u)) << t;
      // strict where u is representable; the far tail underflows to zero
      if (std::abs(t) <= 30.0) ASSERT_LT(u, prev) << y << " " << t;
      else ASSERT_LE(u, prev) << y << " " << t;
      prev = u;
    }
    EXPECT_TRUE(std::isfinite(probit_u(y, 1e6)));
    EXPECT_TRUE(std::isfinite(probit_u(y, -1e6)));
  }
}

TEST(Probit, CompleteScoresMatchFiniteDifference) {
  const Dataset data = draw(ModelKind::probit_re, 40, 46);
  for (bool estimate : {false, true}) {
    const ProbitReModel model(data, {estimate, 1.0});
    Vector v(model.dim());
    v.head(3) << 0.4, 0.9, 1.1;
    if (estimate) v(3) = 1.4;
    Rng rng = make_rng(2);
    const auto theta = model.make_theta(v.head(3), estimate ? v(3) : 1.0);
    const auto z = model.sample_latents(theta, 1, rng);
    const Vector alpha = z.draws[0].col(0);
    const Vector fd = central_difference(
        [&](const Vector& t) { return model.complete_log_density(model.make_theta(t.head(3), estimate ? t(3) : 1.0), alpha); }, v);
    const Vector an = model.complete_scores(theta, z)[0].colwise().sum().transpose();
    EXPECT_LT(max_rel_err(an, fd), 1e-6) << estimate;
  }
}

TEST(Probit, InnerStepAcceptsWithLikelihoodRatio) {
  const Dataset data = draw(ModelKind::probit_re, 10, 47);
  const ProbitReModel model(data, {});
  const double linear = 0.3;
  const double alpha = -0.4;
  int agree = 0;
  for (std::uint64_t s = 0; s < 200; ++s) {
    Rng rng = make_rng(s);
    Rng replay = rng;
    const auto step = model.inner_step(0, linear, alpha, 1.0, rng);
    // replay the proposal and uniform by hand: proposal ~ N(0, 1), accept iff u < g(y|a*) / g(y|a)
    const double prop = standard_normal(replay);
    const double y = data.y(0);
    const double ratio = std::exp(probit_log_lik(y, linear + prop) - probit_log_lik(y, linear + alpha));
    const bool accept = ratio >= 1.0 || uniform01(replay) < ratio;
    EXPECT_EQ(step.accepted, accept);
    EXPECT_EQ(step.alpha, accept ? prop : alpha);
    agree += step.accepted;
  }
  EXPECT_GT(agree, 0);
}

TEST(Probit, LatentSamplerReportsInnerAcceptance) {
  const ProbitReModel model(draw(ModelKind::probit_re, 100, 48), {});
  Rng rng = make_rng(3);
  const auto z = model.sample_latents(model.make_theta(Vector::Ones(3)), 5, rng);
  ASSERT_TRUE(z.inner_acceptance.has_value());
  EXPECT_GT(*z.inner_acceptance, 0.05);
  EXPECT_LT(*z.inner_acceptance, 0.95);
  EXPECT_EQ(z.count(), 5u);
  EXPECT_EQ(z.burn_in, 5u);
}

TEST(Probit, MarginalMleIsAStationaryPoint) {
  const Dataset data = draw(ModelKind::probit_re, 300, 49);
  const double s2a = 1.0;
  const Vector beta = probit_marginal_mle(data, s2a);
  const double s = std::sqrt(1.0 + s2a);
  const Vector grad = central_difference(
      [&](const Vector& b) {
        const Vector t = data.x * b / s;
        double ll = 0.0;
        for (Eigen::Index i = 0; i < data.n(); ++i) ll += probit_log_lik(data.y(i), t(i));
        return ll;
      },
      beta);
  EXPECT_LT(grad.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Probit, MarginalMleFailsOnSeparatedData) {
  Dataset d;
  d.x.resize(20, 2);
  d.y.resize(20);
  for (Eigen::Index i = 0; i < 20; ++i) {
    d.x(i, 0) = 1.0;
    d.x(i, 1) = static_cast<double>(i) - 9.5;
    d.y(i) = i >= 10 ? 1.0 : 0.0;
  }
  EXPECT_THROW(probit_marginal_mle(d, 1.0), NumericError);
}

TEST(Probit, RejectsNonBinaryOutcomes) {
  Dataset d = draw(ModelKind::probit_re, 10, 50);
  d.y(0) = 0.5;
  EXPECT_THROW(ProbitReModel(d, {}), ContractError);
}

TEST(Median, ScoreIsGradientOfLoss) {
  for (double med : {-1.0, 0.3, 2.0}) {
    for (double th : {-2.0, 0.0, 0.31, 1.5}) {
      auto loss = [&](double t) {
        const double u = med - t;
        return -0.5 * (normal::log_cdf(u) + normal::log_cdf(-u));
      };
      const double fd = (loss(th + 1e-6) - loss(th - 1e-6)) / 2e-6;
      EXPECT_NEAR(median_score(med, th), fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
  EXPECT_EQ(median_score(0.37, 0.37), 0.0);
}

TEST(Median, ScoreIncreasesInTheta) {
  double prev = -std::numeric_limits<double>::infinity();
  for (double th = -6.0; th <= 6.0; th += 0.1) {
    const double s = median_score(0.0, th);
    ASSERT_GT(s, prev);
    prev = s;
  }
}

TEST(Median, GeneralizedKernelGradientIsMinusNScore) {
  Rng rng = make_rng(51);
  std::vector<double> y(41);
  for (auto& v : y) v = standard_normal(rng);
  const MedianModel model(y, 60, rng);
  const double th = model.median() + 0.2;
  const double fd = (model.generalized_log_kernel(model.make_theta(th + 1e-6)) -
                     model.generalized_log_kernel(model.make_theta(th - 1e-6))) / 2e-6;
  EXPECT_NEAR(fd, -41.0 * model.score(th), 1e-5);
}

TEST(Median, BootstrapWeightMatchesDirectVariance) {
  Rng rng = make_rng(52);
  std::vector<double> y(31);
  for (auto& v : y) v = 1.0 + 2.0 * standard_normal(rng);
  const MedianModel model(y, 100, rng);
  const double th = 1.1;
  std::vector<double> vals;
  for (double t : model.bootstrap_medians()) vals.push_back(median_score(t, th) / std::sqrt(31.0));
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= static_cast<double>(vals.size());
  EXPECT_NEAR(model.bootstrap_weight(th), var, 1e-12 * var);
  EXPECT_THROW(MedianModel(y, 10, rng), ContractError);
}

TEST(Median, SampleMedianEvenAndOdd) {
  EXPECT_EQ(sample_median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(sample_median({4.0, 1.0, 3.0, 2.0}), 2.5);
  EXPECT_THROW(sample_median({}), InsufficientDataError);
}

TEST(Dgp, ShapesAndIntercept) {
  const Dataset d = draw(ModelKind::lin_re, 70, 53);
  EXPECT_EQ(d.n(), 70);
  EXPECT_EQ(d.covariates(), 3);
  EXPECT_EQ(d.x.col(0).minCoeff(), 1.0);
  EXPECT_EQ(d.x.col(0).maxCoeff(), 1.0);
  DgpSpec m;
  m.kind = ModelKind::median;
  m.n = 100;
  EXPECT_EQ(m.effective_n(), 101u);
}

TEST(Dgp, HeteroskedasticErrorVariance) {
  // Var(e | x) = 1 + |x|^gamma; E[e^2 x^2] is 2 for gamma = 0 and 4 for gamma = 2
  for (double gamma : {0.0, 2.0}) {
    DgpSpec spec;
    spec.n = 200'000;
    spec.gamma = gamma;
    Rng rng = make_rng(54);
    const Dataset d = generate(spec, rng).data;
    const Vector e = d.y - d.x * spec.beta;
    EXPECT_NEAR(e.squaredNorm() / 2e5, 2.0, 0.03) << gamma;
    const double ex2 = (e.array().square() * d.x.col(0).array().square()).mean();
    EXPECT_NEAR(ex2, gamma == 0.0 ? 2.0 : 4.0, gamma == 0.0 ? 0.05 : 0.25) << gamma;
  }
}

TEST(Dgp, MixtureMedianSolvesCdf) {
  const double m = median_dgp2_population_median();
  const boost::math::normal_distribution<double> wide(1.0, 2.0), std_normal;
  EXPECT_NEAR(0.9 * boost::math::cdf(wide, m) + 0.1 * boost::math::cdf(std_normal, m), 0.5, 1e-12);
}

TEST(Dgp, T4SuccessProbabilityMatchesQuadratureOracle) {
  const boost::math::students_t_distribution<double> t4(4.0);
  for (double t : {-2.0, 0.0, 0.8, 3.0}) {
    // midpoint rule on a wide grid directly in a
    double sum = 0.0;
    const double lo = -400.0, hi = 400.0;
    const int k = 800'000;
    const double h = (hi - lo) / k;
    for (int i = 0; i < k; ++i) {
      const double a = lo + (i + 0.5) * h;
      sum += normal::cdf(t + a) * boost::math::pdf(t4, a);
    }
    sum *= h;
    // mass beyond |a| > 400 adds at most ~1e-9
    EXPECT_NEAR(probit_t4_success_probability(t), sum, 2e-6) << t;
  }
  EXPECT_NEAR(probit_t4_success_probability(0.0), 0.5, 1e-9);
}

TEST(Dgp, PseudoTruths) {
  DgpSpec spec;
  spec.kind = ModelKind::probit_re;
  spec.beta = Vector::Ones(3);
  EXPECT_EQ(pseudo_truth(spec), spec.beta);
  spec.kind = ModelKind::median;
  EXPECT_EQ(pseudo_truth(spec)(0), 1.0);
  spec.median_dgp = MedianDgp::dgp2;
  EXPECT_NEAR(pseudo_truth(spec)(0), 0.8339, 1e-4);
}

TEST(Dgp, T4PseudoTruthIsBelowGeneratingValue) {
  DgpSpec spec;
  spec.kind = ModelKind::probit_re;
  spec.beta = Vector::Ones(4);
  spec.intercept = true;
  spec.latent_dist = LatentDist::student_t4;
  const Vector pt = probit_t4_pseudo_truth(spec, 1.0, 20'000);
  // the t4 latent has variance 2 > 1, attenuating the marginal slopes
  for (Eigen::Index j = 1; j < 4; ++j) {
    EXPECT_LT(pt(j), 1.0);
    EXPECT_GT(pt(j), 0.6);
  }
}

TEST(Dataset, CsvRoundTripIsExact) {
  const Dataset d = draw(ModelKind::linreg, 25, 55);
  std::stringstream ss;
  write_dataset_csv(d, ss);
  const Dataset back = read_dataset_csv(ss);
  EXPECT_EQ(back.y, d.y);
  EXPECT_EQ(back.x, d.x);
}

TEST(Dataset, ValidateCatchesShapeAndNan) {
  Dataset d = draw(ModelKind::linreg, 10, 56);
  d.y(3) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(d.validate(), ContractError);
  Dataset e = draw(ModelKind::linreg, 10, 57);
  e.x.conservativeResize(9, Eigen::NoChange);
  EXPECT_THROW(e.validate(), ContractError);
}
