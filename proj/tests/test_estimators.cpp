#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "qpost/qpost.hpp"

using namespace qpost;

namespace {

/// Panel with m_ij = a_i + e_ij, a_i ~ N(0, A), e_ij ~ N(0, B), both 2-d.
ScorePanel two_level_panel(Rng& rng, Eigen::Index n, std::size_t draws, const Matrix& a_lower, const Matrix& b_lower) {
  std::vector<Matrix> d(draws, Matrix(n, 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector a = a_lower * standard_normal_vector(rng, 2);
    for (std::size_t j = 0; j < draws; ++j) d[j].row(i) = (a + b_lower * standard_normal_vector(rng, 2)).transpose();
  }
  return ScorePanel::from_draws(std::move(d));
}

double frobenius_rel(const Matrix& a, const Matrix& ref) { return (a - ref).norm() / ref.norm(); }

}  // namespace

TEST(VarianceSplit, DuplicatedDrawsGiveZeroW2) {
  Rng rng = make_rng(10);
  Matrix base(30, 3);
  for (Eigen::Index i = 0; i < 30; ++i) base.row(i) = standard_normal_vector(rng, 3).transpose();
  const auto panel = ScorePanel::from_draws(std::vector<Matrix>(4, base));
  const auto s = variance_split(panel);
  EXPECT_EQ(s.w2.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ((s.w_total.matrix - s.w1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(VarianceSplit, UnitConstantScoresGiveZeroW1) {
  Rng rng = make_rng(11);
  std::vector<Matrix> d;
  for (int j = 0; j < 5; ++j) d.push_back(Matrix::Ones(20, 2) * standard_normal(rng));
  const auto s = variance_split(ScorePanel::from_draws(std::move(d)));
  EXPECT_EQ(s.w1.cwiseAbs().maxCoeff(), 0.0);
}

TEST(VarianceSplit, PooledCovarianceIsW1PlusW2) {
  Rng rng = make_rng(12);
  Matrix al(2, 2), bl(2, 2);
  al << 1.0, 0.0, 0.4, 0.8;
  bl << 0.7, 0.0, -0.2, 0.5;
  const std::size_t draws = 6;
  const auto panel = two_level_panel(rng, 200, draws, al, bl);
  // stack every single-draw score and take its covariance (divisor nN)
  Matrix pooled(200 * static_cast<Eigen::Index>(draws), 2);
  for (std::size_t j = 0; j < draws; ++j) pooled.middleRows(200 * static_cast<Eigen::Index>(j), 200) = panel.draw_scores[j];
  const auto s = variance_split(panel, WeightComposition::w1_plus_w2);
  EXPECT_NEAR((s.w1 + s.w2 - covariance_of_rows(pooled)).cwiseAbs().maxCoeff(), 0.0, 1e-12);
  EXPECT_NEAR((s.w_total.matrix - (s.w1 + s.w2)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
}

TEST(VarianceSplit, PiecesMatchTheLawOfTotalVariance) {
  Rng rng = make_rng(13);
  Matrix al(2, 2), bl(2, 2);
  al << 1.0, 0.0, 0.5, 1.0;
  bl << 1.2, 0.0, 0.3, 0.9;
  const Matrix a = al * al.transpose();
  const Matrix b = bl * bl.transpose();
  const std::size_t draws = 5;
  const auto s = variance_split(two_level_panel(rng, 20000, draws, al, bl));
  const double nd = static_cast<double>(draws);
  // Var(mean of N draws) = A + B / N; within-unit covariance with divisor N = B (N - 1) / N
  EXPECT_LT(frobenius_rel(s.w1, a + b / nd), 0.05);
  EXPECT_LT(frobenius_rel(s.w2, b * (nd - 1.0) / nd), 0.05);
  EXPECT_LT(frobenius_rel(s.w_total.matrix, s.w1 + s.w2 / nd), 1e-14);
}

TEST(VarianceSplit, Preconditions) {
  EXPECT_THROW(variance_split(ScorePanel::from_draws({Matrix::Ones(5, 2)})), InsufficientDataError);
  EXPECT_THROW(variance_split(ScorePanel::from_draws({Matrix::Ones(1, 2), Matrix::Ones(1, 2)})), InsufficientDataError);
  EXPECT_DOUBLE_EQ(w2_coefficient(WeightComposition::w1_only, 5), 0.0);
  EXPECT_DOUBLE_EQ(w2_coefficient(WeightComposition::w1_plus_w2_over_n, 5), 0.2);
  EXPECT_DOUBLE_EQ(w2_coefficient(WeightComposition::w1_plus_w2, 5), 1.0);
}

TEST(FisherScore, LinReMatchesMarginalScoreWithinMonteCarloError) {
  Rng rng = make_rng(14);
  DgpSpec spec;
  spec.kind = ModelKind::lin_re;
  spec.n = 100;
  const LinReModel model(generate(spec, rng).data, 1.0);
  Vector beta(3);
  beta << 0.9, 1.1, 1.0;
  const ParameterVector theta = model.make_theta(beta, 1.3);
  const std::size_t draws = 400;
  const EstimatedScore est = fisher_score(model, theta, draws, rng);
  const Vector exact = model.marginal_unit_scores(theta).colwise().sum().transpose();
  // conditional on the data, Var(m_hat) = n w2 / N
  const Vector se = (static_cast<double>(model.units()) * est.w2.diagonal() / static_cast<double>(draws)).cwiseSqrt();
  for (Eigen::Index k = 0; k < exact.size(); ++k) EXPECT_LT(std::abs(est.m_hat(k) - exact(k)), 3.0 * se(k)) << k;
}

TEST(FisherScore, SingleDrawHasZeroW2) {
  Rng rng = make_rng(15);
  DgpSpec spec;
  spec.kind = ModelKind::lin_re;
  spec.n = 40;
  const LinReModel model(generate(spec, rng).data, 1.0);
  const auto est = fisher_score(model, model.initial_point(), 1, rng);
  EXPECT_EQ(est.w2.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(est.latents.count(), 1u);
  EXPECT_THROW(fisher_score(model, model.initial_point(), 0, rng), ContractError);
}

TEST(FisherScore, DeterministicAdapterReproducesExactScore) {
  Rng rng = make_rng(16);
  DgpSpec spec;
  spec.n = 50;
  const LinRegModel model(generate(spec, rng).data);
  const DeterministicLatentAdapter adapter(model);
  const auto theta = model.initial_point();
  const auto est = fisher_score(adapter, theta, 3, rng);
  // averaging identical draws only adds rounding
  EXPECT_LT((est.m_hat - model.score_panel(theta).total()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(est.w2.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Bootstrap, MeanScoreVarianceMatchesSampleVariance) {
  Rng rng = make_rng(17);
  std::vector<double> y(400);
  for (auto& v : y) v = 2.0 + 1.5 * standard_normal(rng);
  const ParameterVector theta(Vector::Constant(1, 2.0));
  auto score = [](const std::vector<double>& d, const ParameterVector& t) {
    double s = 0.0;
    for (double v : d) s += v - t[0];
    return Vector::Constant(1, s);
  };
  const WeightMatrix w = ee_bootstrap_variance(score, y, theta, 2000, rng);
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(y.size());
  double var = 0.0;
  for (double v : y) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.size());
  // Var(sum_i (y_i - theta) / sqrt(n)) under resampling = sample variance
  EXPECT_NEAR(w.matrix(0, 0) / var, 1.0, 0.1);
}

TEST(Bootstrap, NeedsFiftyResamples) {
  Rng rng = make_rng(18);
  std::vector<double> y(10, 1.0);
  auto score = [](const std::vector<double>&, const ParameterVector&) { return Vector::Zero(1); };
  EXPECT_THROW(ee_bootstrap_variance(score, y, ParameterVector(Vector::Zero(1)), 49, rng), ContractError);
}

TEST(Bootstrap, IndicesAreReproducibleAndInRange) {
  Rng a = make_rng(19), b = make_rng(19);
  const auto ia = bootstrap_indices(25, 60, a);
  const auto ib = bootstrap_indices(25, 60, b);
  EXPECT_EQ(ia, ib);
  for (const auto& r : ia) {
    ASSERT_EQ(r.size(), 25u);
    for (auto i : r) ASSERT_LT(i, 25u);
  }
}
