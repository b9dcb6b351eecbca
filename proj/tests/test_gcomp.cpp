#include <random>

#include "fixture_oracle_values.hpp"
#include "gcscore/gcomp.hpp"
#include "test_util.hpp"

using namespace gcscore;
namespace fo = fixture_oracle;

namespace {

struct LogitFixture {
  TrialDataset data = testutil::fixture();
  DesignMatrix design = build_design(data, {Family::kBernoulliLogit, {"W1"}, false});
  FittedGLM fitted = fit(design, data.outcome(), Family::kBernoulliLogit);
};

}  // namespace

TEST(Gcomp, ArmMeans) {
  LogitFixture fx;
  const auto mu = estimate_mu(fx.fitted, fx.design);
  EXPECT_NEAR(mu.mu[0], fo::kLogitMu[0], 1e-10);
  EXPECT_NEAR(mu.mu[1], fo::kLogitMu[1], 1e-10);
  EXPECT_EQ(mu.n, 20);
}

TEST(Gcomp, ArmOnlyMeansAreRawProportions) {
  LogitFixture fx;
  const auto design = build_design(fx.data, {Family::kBernoulliLogit, {}, false});
  const auto mu = estimate_mu(fit(design, fx.data.outcome(), Family::kBernoulliLogit), design);
  EXPECT_NEAR(mu.mu[0], 0.5, 1e-12);
  EXPECT_NEAR(mu.mu[1], 0.9, 1e-12);
}

TEST(Gcomp, GaussianAdjustedDifferenceIsArmCoefficientContrast) {
  LogitFixture fx;
  const auto design = build_design(fx.data, {Family::kGaussianIdentity, {"W1"}, false});
  const auto mu =
      estimate_mu(fit(design, fx.data.outcome(), Family::kGaussianIdentity), design);
  EXPECT_NEAR(mu.difference(), fo::kGaussAdjustedDiff, 1e-10);
}

TEST(Gcomp, PoissonMeans) {
  LogitFixture fx;
  const auto design = build_design(fx.data, {Family::kPoissonLog, {"W1"}, false});
  const auto mu = estimate_mu(fit(design, fx.data.outcome(), Family::kPoissonLog), design);
  EXPECT_NEAR(mu.mu[0], fo::kPoissonMu[0], 1e-8);
  EXPECT_NEAR(mu.mu[1], fo::kPoissonMu[1], 1e-8);
}

TEST(Gcomp, InfluenceMatricesMatchReference) {
  LogitFixture fx;
  const auto s = influence_score(fx.fitted, fx.design);
  const auto a = influence_aipw(fx.fitted, fx.design);
  testutil::expect_near(s.values, testutil::as_matrix(fo::kLogitPsiScore, 20, 2), 1e-8);
  testutil::expect_near(a.values, testutil::as_matrix(fo::kLogitPsiAipw, 20, 2), 1e-8);
  // Both influence functions are mean zero.
  EXPECT_NEAR(s.values.col(0).sum(), 0.0, 1e-9);
  EXPECT_NEAR(a.values.col(1).sum(), 0.0, 1e-9);
}

TEST(Gcomp, VarianceEstimatorsMatchReference) {
  LogitFixture fx;
  const GcompContext ctx(fx.fitted, fx.design);
  testutil::expect_near(estimate_variance(ctx, VarianceEstimator::kI).sigma,
                        testutil::as_matrix(fo::kLogitSigmaI, 2, 2), 1e-10);
  testutil::expect_near(estimate_variance(ctx, VarianceEstimator::kII).sigma,
                        testutil::as_matrix(fo::kLogitSigmaII, 2, 2), 1e-10);
  testutil::expect_near(estimate_variance(ctx, VarianceEstimator::kIII).sigma,
                        testutil::as_matrix(fo::kLogitSigmaIII, 2, 2), 1e-10);
}

TEST(Gcomp, EstimatorIEqualsStackedSandwich) {
  LogitFixture fx;
  const auto v = var_from_influence(influence_score(fx.fitted, fx.design));
  testutil::expect_near(v.sigma, testutil::as_matrix(fo::kLogitSigmaStacked, 2, 2), 1e-10);
  EXPECT_EQ(v.estimator, VarianceEstimator::kI);
}

TEST(Gcomp, SigmaIsSymmetricPsd) {
  LogitFixture fx;
  const GcompContext ctx(fx.fitted, fx.design);
  for (auto e : {VarianceEstimator::kI, VarianceEstimator::kII}) {
    const auto s = estimate_variance(ctx, e).sigma;
    EXPECT_EQ(s(0, 1), s(1, 0));
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(s);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-15);
  }
}

TEST(Gcomp, Hc1ScalesByDegreesOfFreedom) {
  LogitFixture fx;
  const GcompContext ctx(fx.fitted, fx.design);
  const auto v0 = estimate_variance(ctx, VarianceEstimator::kI, Correction::kHC0);
  const auto v1 = estimate_variance(ctx, VarianceEstimator::kI, Correction::kHC1);
  testutil::expect_near(v1.sigma, v0.sigma * 20.0 / 17.0, 1e-15);
  EXPECT_EQ(v1.correction, Correction::kHC1);
  VarianceEstimate tiny = v0;
  tiny.n = 3;
  EXPECT_THROW(apply_correction(tiny, 3, Correction::kHC1), ValueError);
}

TEST(Gcomp, DecompositionMatchesReferenceAndSums) {
  LogitFixture fx;
  const auto d = variance_decomposition(fx.fitted, fx.design);
  testutil::expect_near(d.beta_estimation, testutil::as_matrix(fo::kLogitDecompBeta, 2, 2), 1e-10);
  testutil::expect_near(d.covariate, testutil::as_matrix(fo::kLogitDecompCovariate, 2, 2), 1e-10);
  testutil::expect_near(d.misspecification, testutil::as_matrix(fo::kLogitDecompCross, 2, 2),
                        1e-10);
  const auto sigma = testutil::as_matrix(fo::kLogitSigmaI, 2, 2);
  testutil::expect_near(d.total_n_divisor(), sigma * 19.0 / 20.0, 1e-12);
  testutil::expect_near(d.total_sample_divisor(), sigma, 1e-12);
}

TEST(Gcomp, DecompositionBetaComponentIsDeltaMethod) {
  // G Sigma_beta G' against a finite-difference Jacobian of mu(beta).
  LogitFixture fx;
  const auto d = variance_decomposition(fx.fitted, fx.design);
  const auto x1 = counterfactual_design(fx.design, Arm::kOne);
  const auto x2 = counterfactual_design(fx.design, Arm::kTwo);
  auto mu_of = [&](const Eigen::VectorXd& b) {
    return Eigen::Vector2d(mean_response(fx.fitted.family, b, x1).mean(),
                           mean_response(fx.fitted.family, b, x2).mean());
  };
  Eigen::MatrixXd jac(2, 3);
  for (int j = 0; j < 3; ++j) {
    Eigen::VectorXd up = fx.fitted.beta, dn = fx.fitted.beta;
    up(j) += 1e-6;
    dn(j) -= 1e-6;
    jac.col(j) = (mu_of(up) - mu_of(dn)) / 2e-6;
  }
  const double n = 20.0;
  const Eigen::MatrixXd binv = fx.fitted.bread.inverse();
  const Eigen::MatrixXd meat = fx.design.x.transpose() *
                               fx.fitted.residuals.cwiseAbs2().asDiagonal() * fx.design.x / n;
  const Eigen::MatrixXd sb = binv * meat * binv.transpose() / n;
  testutil::expect_near(d.beta_estimation, jac * sb * jac.transpose(), 1e-9);
}

TEST(Gcomp, FixedPiChangesOnlyAipwWeights) {
  LogitFixture fx;
  const GcompContext ctx(fx.fitted, fx.design);
  const auto emp = influence_aipw(ctx);
  const auto fixed = influence_aipw(ctx, std::array<double, 2>{0.5, 0.5});
  testutil::expect_near(emp.values, fixed.values, 1e-15);  // empirical pi is 0.5 here
  const auto other = influence_aipw(ctx, std::array<double, 2>{0.4, 0.6});
  EXPECT_GT((other.values - emp.values).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_THROW(influence_aipw(ctx, std::array<double, 2>{0.4, 0.5}), ConfigError);
}

TEST(Gcomp, YeNeedsTwoSubjectsPerArm) {
  Eigen::VectorXd y(4);
  y << 1.0, 2.0, 3.0, 1.5;
  std::vector<Arm> arm{Arm::kOne, Arm::kTwo, Arm::kTwo, Arm::kTwo};
  const auto data = TrialDataset::make(y, arm, {}, Eigen::MatrixXd());
  const auto design = build_design(data, {Family::kGaussianIdentity, {}, false});
  const auto f = fit(design, y, Family::kGaussianIdentity);
  EXPECT_THROW(var_conditional(f, design), DegenerateArmError);
  EXPECT_NO_THROW(var_from_influence(influence_score(f, design)));
}

TEST(Gcomp, GaussianArmOnlyEstimatorIIsScaledArmVariance) {
  // Arm-only model: psi_a = I(A=a)(Y - ybar_a)/pi-hat_a, so estimator I and II coincide.
  LogitFixture fx;
  const auto design = build_design(fx.data, {Family::kGaussianIdentity, {}, false});
  const auto f = fit(design, fx.data.outcome(), Family::kGaussianIdentity);
  const GcompContext ctx(f, design);
  const auto v1 = estimate_variance(ctx, VarianceEstimator::kI);
  const auto v2 = estimate_variance(ctx, VarianceEstimator::kII);
  testutil::expect_near(v1.sigma, v2.sigma, 1e-14);
  // Arm 1 is 5/10 ones: sum psi^2 = 10 * 0.25 / 0.25 = 10, var = 10/19/20.
  EXPECT_NEAR(v1.sigma(0, 0), 10.0 / 19.0 / 20.0, 1e-14);
  EXPECT_NEAR(v1.sigma(0, 1), 0.0, 1e-14);
}

TEST(Gcomp, ThreeEstimatorsAgreeAsymptotically) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> u;
  const int n = 20000;
  Eigen::VectorXd y(n);
  std::vector<Arm> arm(n);
  Eigen::MatrixXd w(n, 1);
  for (int i = 0; i < n; ++i) {
    arm[i] = i % 2 ? Arm::kTwo : Arm::kOne;
    w(i, 0) = z(rng);
    y(i) = u(rng) < expit(-0.5 + 0.6 * (i % 2) + 0.9 * w(i, 0));
  }
  const auto data = TrialDataset::make(y, arm, {"W"}, w);
  const auto design = build_design(data, {Family::kBernoulliLogit, {"W"}, false});
  const auto f = fit(design, y, Family::kBernoulliLogit);
  const GcompContext ctx(f, design);
  const auto s1 = estimate_variance(ctx, VarianceEstimator::kI).sigma;
  const auto s2 = estimate_variance(ctx, VarianceEstimator::kII).sigma;
  const auto s3 = estimate_variance(ctx, VarianceEstimator::kIII).sigma;
  for (int k = 0; k < 4; ++k) {
    EXPECT_NEAR(s2(k) / s1(k), 1.0, 0.03);
    EXPECT_NEAR(s3(k) / s1(k), 1.0, 0.03);
  }
}
