#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>
#include <vector>

#include "qpost/qpost.hpp"

using namespace qpost;

namespace {

ExperimentConfig small_linreg() {
  ExperimentConfig c;
  c.name = "small";
  c.dgp.n = 40;
  c.replications = 4;
  c.chain.iterations = 600;
  c.chain.burn_in = 200;
  c.seed = 9;
  return c;
}

}  // namespace

TEST(Config, ParsesSectionsListsAndComments) {
  std::istringstream in(R"(name = "demo"   # trailing comment
methods = [q_posterior, exact]
replications = 12
[dgp]
model = "lin_re"
beta = [1, 2, 3]
gamma = 2
[chain]
iterations = 3000
burn_in = 1000
[q]
weight = "w1_plus_w2"
weight_mode = "fixed_at_estimate"
)");
  const auto c = parse_config(in);
  EXPECT_EQ(c.name, "demo");
  EXPECT_EQ(c.replications, 12u);
  EXPECT_EQ(c.dgp.kind, ModelKind::lin_re);
  ASSERT_EQ(c.dgp.beta.size(), 3);
  EXPECT_EQ(c.dgp.beta(2), 3.0);
  EXPECT_EQ(c.dgp.gamma, 2.0);
  EXPECT_EQ(c.chain.burn_in, 1000u);
  EXPECT_EQ(c.weight, WeightComposition::w1_plus_w2);
  EXPECT_EQ(c.weight_mode, WeightMode::fixed_at_estimate);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RenderRoundTrips) {
  ExperimentConfig c = small_linreg();
  c.dgp.kind = ModelKind::probit_re;
  c.dgp.latent_dist = LatentDist::student_t4;
  c.interval = IntervalKind::hpd;
  c.weight_mode = WeightMode::fixed_at_estimate;
  std::istringstream in(render_config(c));
  const auto back = parse_config(in);
  EXPECT_EQ(config_entries(back), config_entries(c));
}

TEST(Config, EveryShippedConfigLoadsAndValidates) {
  for (const char* stem : {"table1_linreg_gamma0", "table1_linreg_gamma2", "table2_lin_re_gamma0", "table2_lin_re_gamma2",
                           "table3_probit_gaussian", "table3_probit_t4", "table4_median_dgp1", "table4_median_dgp2",
                           "convergence_lin_re"}) {
    const auto c = load_config(std::string(QPOST_CONFIG_DIR) + "/" + stem + ".toml");
    EXPECT_NO_THROW(c.validate()) << stem;
  }
}

TEST(Config, OverridesApply) {
  ExperimentConfig c;
  apply_override(c, "dgp.n=77");
  apply_override(c, "chain.adapt=false");
  EXPECT_EQ(c.dgp.n, 77u);
  EXPECT_FALSE(c.adapt);
  EXPECT_THROW(apply_override(c, "no_equals_sign"), ConfigError);
}

TEST(Config, ErrorsAreConfigErrors) {
  ExperimentConfig c;
  EXPECT_THROW(apply_setting(c, "dgp.bogus", "1"), ConfigError);
  EXPECT_THROW(apply_setting(c, "dgp.model", "logit"), ConfigError);
  EXPECT_THROW(apply_setting(c, "dgp.n", "-3"), ConfigError);
  EXPECT_THROW(apply_setting(c, "credible_level", "abc"), ConfigError);
  std::istringstream bad("replications 5\n");
  EXPECT_THROW(parse_config(bad), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/x.toml"), ConfigError);
}

TEST(Config, ValidationRejectsInconsistentSettings) {
  auto c = small_linreg();
  c.chain.burn_in = c.chain.iterations;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_linreg();
  c.weight_mode = WeightMode::fixed_at_estimate;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_linreg();
  c.methods = {Method::generalized};
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_linreg();
  c.dgp.kind = ModelKind::median;
  c.dgp.beta = Vector::Ones(1);
  c.methods = {Method::exact};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Interval, EqualTailedOnUniformGrid) {
  std::vector<double> d(1001);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<double>(i) / 1000.0;
  std::reverse(d.begin(), d.end());
  const auto [lo, hi] = equal_tailed_interval(d, 0.9);
  EXPECT_NEAR(lo, 0.05, 1e-12);
  EXPECT_NEAR(hi, 0.95, 1e-12);
}

TEST(Interval, HpdIsShortestAndContainsMode) {
  Rng rng = make_rng(60);
  std::vector<double> d(20000);
  for (auto& v : d) v = -std::log(uniform01(rng));  // exponential: HPD starts at 0
  const auto [lo, hi] = hpd_interval(d, 0.95);
  const auto [elo, ehi] = equal_tailed_interval(d, 0.95);
  EXPECT_LT(lo, 0.01);
  EXPECT_NEAR(hi, -std::log(0.05), 0.1);
  EXPECT_LT(hi - lo, ehi - elo);
}

TEST(Interval, NeedsEnoughDraws) {
  EXPECT_THROW(equal_tailed_interval(std::vector<double>(99, 1.0), 0.95), InsufficientDataError);
  EXPECT_THROW(hpd_interval(std::vector<double>(99, 1.0), 0.95), InsufficientDataError);
}

TEST(Report, CsvRoundTripIsBitExact) {
  ReplicationReport r;
  r.name = "x";
  r.replications = 3;
  r.coordinate_names = {"beta1", "beta2"};
  r.pseudo_truth = {1.0, 0.1};
  for (Method m : {Method::q_posterior, Method::exact}) {
    MethodSummary s;
    s.method = m;
    s.coords = {{"beta1", 1.0 / 3.0, 2e-17, 0.95, 0.01}, {"beta2", -0.1, 0.123456789012345678, 1.0, 0.0}};
    r.methods.push_back(s);
  }
  const auto parsed = parse_csv(emit_csv(r));
  ASSERT_EQ(parsed.coordinates, r.coordinate_names);
  ASSERT_EQ(parsed.header.size(), 9u);
  EXPECT_EQ(parsed.header[1], "q_posterior_bias");
  ASSERT_EQ(parsed.values.size(), 2u);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t j = 0; j < 2; ++j) {
      const auto& c = r.methods[m].coords[j];
      const auto& row = parsed.values[j];
      EXPECT_EQ(row[4 * m + 0], c.bias);
      EXPECT_EQ(row[4 * m + 1], c.var);
      EXPECT_EQ(row[4 * m + 2], c.cov);
      EXPECT_EQ(row[4 * m + 3], c.cov_se);
    }
  EXPECT_EQ(emit_csv(r), emit_csv(r));
}

TEST(Run, ReplicationsAreDeterministicAndWorkerInvariant) {
  auto c = small_linreg();
  const auto a = run_replications(c);
  c.workers = 3;
  const auto b = run_replications(c);
  EXPECT_EQ(emit_csv(a.report), emit_csv(b.report));
  ASSERT_EQ(a.replications.size(), 4u);
  for (const auto& m : a.report.methods) EXPECT_EQ(m.successes, 4u);
}

TEST(Run, SingleReplicationReproducible) {
  const auto c = small_linreg();
  const auto a = run_replication(c, 2);
  const auto b = run_replication(c, 2);
  ASSERT_EQ(a.methods.size(), b.methods.size());
  for (std::size_t m = 0; m < a.methods.size(); ++m) EXPECT_EQ(a.methods[m].mean, b.methods[m].mean);
  EXPECT_NE(run_replication(c, 3).methods[0].mean, a.methods[0].mean);
}

TEST(Run, MethodStreamsAreDistinct) {
  Rng q = method_rng(5, Method::q_posterior);
  Rng e = method_rng(5, Method::exact);
  EXPECT_NE(standard_normal(q), standard_normal(e));
}

TEST(Run, FailureBudgetTrips) {
  auto c = small_linreg();
  ExperimentResult r;
  r.report.methods.resize(1);
  r.report.methods[0].successes = 3;
  r.report.methods[0].failures = 1;
  EXPECT_THROW(check_failure_budget(c, r), ExperimentError);
  r.report.methods[0].successes = 4;
  EXPECT_NO_THROW(check_failure_budget(c, r));
}

TEST(Run, CoordinateNames) {
  auto c = small_linreg();
  EXPECT_EQ(coordinate_names(c), (std::vector<std::string>{"beta1", "beta2", "beta3"}));
  c.dgp.kind = ModelKind::median;
  EXPECT_EQ(coordinate_names(c), std::vector<std::string>{"theta"});
}

TEST(Convergence, SummaryOfIidDraws) {
  Rng rng = make_rng(61);
  Matrix d(10000, 1);
  for (Eigen::Index i = 0; i < d.rows(); ++i) d(i, 0) = 2.0 + 3.0 * standard_normal(rng);
  const auto s = summarize_chain(d);
  EXPECT_NEAR(s.mean(0), 2.0, 0.1);
  EXPECT_NEAR(s.sd(0), 3.0, 0.1);
  EXPECT_NEAR(s.mean_mcse(0), 0.03, 0.01);
}

TEST(Run, ProbitQChainMovesFromAFarStart) {
  // from beta = 0 this dataset's kernel is steep enough to freeze an adaptive chain
  auto c = load_config(std::string(QPOST_CONFIG_DIR) + "/table3_probit_gaussian.toml");
  c.methods = {Method::q_posterior};
  const auto rep = run_replication(c, 21);
  ASSERT_TRUE(rep.methods[0].ok) << rep.methods[0].error;
  EXPECT_GT(rep.methods[0].acceptance, 0.1);
  Rng data_rng = make_rng(rep.seed);
  const Vector mle = probit_marginal_mle(generate(c.dgp, data_rng).data, c.dgp.sigma2_alpha);
  EXPECT_LT((rep.methods[0].mean - mle).cwiseAbs().maxCoeff(), 0.5);
}
