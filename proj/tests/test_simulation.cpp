#include <cmath>

#include <gtest/gtest.h>

#include "gcscore/simulation.hpp"

using namespace gcscore;

namespace {

const double kBetaLog2 = std::sqrt(std::log(2.0) * std::log(2.0) / 3.0);

Scenario scenario1(std::array<double, 2> beta_a = {-0.9355, -0.9355}, int n = 326) {
  Scenario s;
  s.name = "scenario1";
  s.n = n;
  s.covariates.assign(3, {});
  s.beta_w = Eigen::VectorXd::Constant(3, kBetaLog2);
  s.beta_a = beta_a;
  return s;
}

std::vector<MethodSpec> wald_score_methods() {
  std::vector<MethodSpec> ms;
  for (auto e : {VarianceEstimator::kI, VarianceEstimator::kII, VarianceEstimator::kIII})
    for (auto t : {TestMethod::kWald, TestMethod::kScore}) {
      MethodSpec m;
      m.label = std::string(to_string(t)) + "-" + std::string(to_string(e));
      m.model = {Family::kBernoulliLogit, {"W1", "W2", "W3"}, false};
      m.test = t;
      m.estimator = e;
      ms.push_back(m);
    }
  return ms;
}

}  // namespace

TEST(TrueMeans, Basics) {
  const auto m = true_marginal_means({-0.5, 0.3}, Eigen::VectorXd(), {});
  EXPECT_NEAR(m[0], expit(-0.5), 1e-15);
  EXPECT_NEAR(m[1], expit(0.3), 1e-15);
  CovariateSpec b{CovariateSpec::Kind::kBernoulli, 0.5};
  const auto mb = true_marginal_means({0.1, 0.2}, Eigen::VectorXd::Constant(1, 0.8), {b});
  EXPECT_NEAR(mb[0], 0.5 * (expit(0.1) + expit(0.9)), 1e-15);
}

TEST(TrueMeans, PublishedScenario) {
  const auto m = true_marginal_means({-0.9355, -0.2224}, Eigen::VectorXd::Constant(3, kBetaLog2),
                                     std::vector<CovariateSpec>(3));
  EXPECT_NEAR(m[0], 0.30, 5e-4);
  EXPECT_NEAR(m[1], 0.45, 5e-4);
}

TEST(TrueMeans, NormalCollapseMatchesMonteCarlo) {
  Philox4x32 rng(17, 0);
  NormalSampler z;
  const Eigen::Vector3d beta(0.4, -0.7, 0.25);
  CovariateSpec bern{CovariateSpec::Kind::kBernoulli, 0.3};
  const std::vector<CovariateSpec> specs{{}, bern, {}};
  const auto m = true_marginal_means({-0.4, 0.2}, beta, specs);
  double s = 0;
  const int n = 400000;
  for (int i = 0; i < n; ++i)
    s += expit(-0.4 + beta(0) * z(rng) + beta(1) * (rng.uniform() < 0.3) + beta(2) * z(rng));
  EXPECT_NEAR(m[0], s / n, 0.003);
}

TEST(Calibrate, RoundTripAndPublishedValues) {
  const Eigen::VectorXd beta = Eigen::VectorXd::Constant(3, kBetaLog2);
  const std::vector<CovariateSpec> specs(3);
  const auto b = calibrate_intercepts({0.30, 0.45}, beta, specs);
  EXPECT_NEAR(b[0], -0.9355, 2e-3);
  EXPECT_NEAR(b[1], -0.2224, 2e-3);
  const auto m = true_marginal_means(b, beta, specs);
  EXPECT_NEAR(m[0], 0.30, 1e-6);
  EXPECT_NEAR(m[1], 0.45, 1e-6);
  const auto zero = calibrate_intercepts({0.5, 0.5}, Eigen::VectorXd(), {});
  EXPECT_NEAR(zero[0], 0.0, 1e-9);
  EXPECT_THROW(calibrate_intercepts({0.0, 0.5}, beta, specs), ConfigError);
}

TEST(Generate, ReproducibleAndCalibrated) {
  auto s = scenario1({-0.9355, -0.2224}, 40000);
  Philox4x32 r1(3, 0), r2(3, 0);
  const auto d1 = generate_trial(s, r1);
  const auto d2 = generate_trial(s, r2);
  EXPECT_EQ(d1.outcome(), d2.outcome());
  EXPECT_EQ(d1.covariates(), d2.covariates());
  EXPECT_EQ(d1.arm(), d2.arm());
  std::array<double, 2> sum{0, 0};
  for (Eigen::Index i = 0; i < d1.n(); ++i) sum[index_of(d1.arm()[i])] += d1.outcome()(i);
  EXPECT_NEAR(sum[0] / 20000, 0.30, 0.012);
  EXPECT_NEAR(sum[1] / 20000, 0.45, 0.012);
}

TEST(Generate, NullModelHalfRate) {
  Scenario s;
  s.n = 20000;
  Philox4x32 rng(4, 0);
  const auto d = generate_trial(s, rng);
  EXPECT_NEAR(d.outcome().mean(), 0.5, 0.012);
}

TEST(Generate, StratifiedBlockBalance) {
  auto s = scenario1();
  s.scheme = Scheme::kStratifiedBlock;
  s.strata = {{2, 0.25}};
  for (std::uint64_t rep = 0; rep < 20; ++rep) {
    Philox4x32 rng(8, rep);
    const auto d = generate_trial(s, rng);
    ASSERT_TRUE(d.stratum());
    std::map<std::string, int> imbalance;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      EXPECT_EQ((*d.stratum())[i], d.covariates()(i, 2) > 0.25 ? "1" : "0");
      imbalance[(*d.stratum())[i]] += d.arm()[i] == Arm::kOne ? 1 : -1;
    }
    for (const auto& [k, v] : imbalance) EXPECT_LE(std::abs(v), 2);
  }
}

TEST(RunOc, DeterministicAcrossWorkerCounts) {
  const auto s = scenario1();
  const auto methods = wald_score_methods();
  OcOptions o;
  o.reps = 60;
  o.seed = 2024;
  o.workers = 1;
  const auto a = run_oc(s, methods, o);
  o.workers = 3;
  const auto b = run_oc(s, methods, o);
  ASSERT_EQ(a.methods.size(), 6u);
  for (std::size_t m = 0; m < a.methods.size(); ++m) {
    EXPECT_EQ(a.methods[m].rejections, b.methods[m].rejections);
    EXPECT_EQ(a.methods[m].covered, b.methods[m].covered);
    EXPECT_EQ(a.methods[m].estimate_sum, b.methods[m].estimate_sum);
  }
}

TEST(RunOc, ScoreNeverRejectsMoreOrCoversLessThanWald) {
  const auto s = scenario1({-1.2, -1.2}, 80);
  OcOptions o;
  o.reps = 300;
  o.seed = 77;
  const auto r = run_oc(s, wald_score_methods(), o);
  for (std::size_t k = 0; k < 6; k += 2) {
    const auto& wald = r.methods[k];
    const auto& score = r.methods[k + 1];
    EXPECT_EQ(wald.failures, score.failures);
    EXPECT_LE(score.rejections, wald.rejections);
    EXPECT_GE(score.covered, wald.covered);
  }
}

TEST(RunOc, RejectionNearAlphaAtTrueNull) {
  // Null set to the true effect; arm means differ.
  auto s = scenario1({-0.9355, -0.2224}, 600);
  OcOptions o;
  o.reps = 1500;
  o.seed = 5;
  o.null_difference = 0.15;
  const auto truth = true_marginal_means(s.beta_a, s.beta_w, s.covariates);
  o.null_difference = truth[1] - truth[0];
  MethodSpec m;
  m.label = "wald-I";
  m.model = {Family::kBernoulliLogit, {"W1", "W2", "W3"}, false};
  const auto r = run_oc(s, {m}, o);
  const auto& oc = r.methods[0];
  EXPECT_EQ(oc.failures, 0);
  EXPECT_NEAR(oc.rejection_rate(), 0.025, 3 * std::sqrt(0.025 * 0.975 / 1500));
  EXPECT_NEAR(oc.mean_estimate(), truth[1] - truth[0], 0.004);
  EXPECT_GT(oc.coverage(), 0.93);
}

TEST(RunOc, FailuresAreCountedNotFatal) {
  // Tiny trials with rare outcomes make some logistic fits fail.
  auto s = scenario1({-3.5, -3.5}, 12);
  OcOptions o;
  o.reps = 100;
  o.seed = 1;
  const auto r = run_oc(s, wald_score_methods(), o);
  EXPECT_GT(r.methods[0].failures, 0);
  EXPECT_EQ(r.methods[0].reps, 100);
  EXPECT_GE(r.methods[0].rejection_rate(), 0.0);
  EXPECT_LE(r.methods[0].rejection_rate(), 1.0);
}
