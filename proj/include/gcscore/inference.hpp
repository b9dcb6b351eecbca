#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "gcscore/dataset.hpp"
#include "gcscore/distributions.hpp"
#include "gcscore/errors.hpp"
#include "gcscore/gcomp.hpp"
#include "gcscore/glm.hpp"

namespace gcscore {

enum class Measure { kDifference, kRatio };
enum class Sidedness { kGreater, kLess, kTwoSided };
enum class TestMethod { kWald, kScore };
enum class Reference { kChiSquare1, kStandardNormal };

inline std::string_view to_string(Measure m) {
  return m == Measure::kDifference ? "difference" : "ratio";
}
inline std::string_view to_string(Sidedness s) {
  switch (s) {
    case Sidedness::kGreater: return "one-sided-greater";
    case Sidedness::kLess: return "one-sided-less";
    case Sidedness::kTwoSided: return "two-sided";
  }
  return "?";
}
inline std::string_view to_string(TestMethod m) { return m == TestMethod::kWald ? "wald" : "score"; }
inline std::string_view to_string(Reference r) {
  return r == Reference::kChiSquare1 ? "chi-square-1" : "standard-normal";
}

inline Measure parse_measure(std::string_view s) {
  if (s == "difference" || s == "diff") return Measure::kDifference;
  if (s == "ratio") return Measure::kRatio;
  throw ConfigError("unknown effect measure '" + std::string(s) + "'");
}
inline Sidedness parse_sidedness(std::string_view s) {
  if (s == "one-sided-greater" || s == "greater") return Sidedness::kGreater;
  if (s == "one-sided-less" || s == "less") return Sidedness::kLess;
  if (s == "two-sided") return Sidedness::kTwoSided;
  throw ConfigError("unknown sidedness '" + std::string(s) + "'");
}
inline TestMethod parse_method(std::string_view s) {
  if (s == "wald") return TestMethod::kWald;
  if (s == "score") return TestMethod::kScore;
  throw ConfigError("unknown test method '" + std::string(s) + "'");
}

struct Hypothesis {
  Measure measure = Measure::kDifference;
  double null_value = 0.0;
  double level = 0.95;  // confidence level 1 - alpha
  Sidedness sidedness = Sidedness::kTwoSided;

  void validate() const {
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0,1)");
    if (!std::isfinite(null_value)) throw ConfigError("null value must be finite");
    if (measure == Measure::kRatio && !(null_value > 0.0))
      throw ConfigError("ratio null value must be positive");
  }
};

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct TestResult {
  Measure measure = Measure::kDifference;
  TestMethod method = TestMethod::kWald;
  double estimate = 0.0;
  double null_value = 0.0;
  // Always on the chi-square-1 scale; signed_root carries the direction.
  double statistic = 0.0;
  double signed_root = 0.0;
  Reference reference = Reference::kChiSquare1;
  Sidedness sidedness = Sidedness::kTwoSided;
  double p_value = 1.0;
  double p_greater = 0.5;
  double p_less = 0.5;
  double p_two_sided = 1.0;
  double level = 0.95;
  std::optional<Interval> ci;
  std::string interval_diagnostic;  // set when ci is empty
  VarianceEstimator estimator = VarianceEstimator::kI;
  Correction correction = Correction::kHC0;
  double effect_variance = 0.0;  // sigma_D^2, or log-scale s^2 for the ratio Wald test
  bool log_scale = false;

  // Throws if the interval could not be formed.
  const Interval& interval() const {
    if (!ci) throw IntervalUndefinedError(interval_diagnostic);
    return *ci;
  }
};

namespace detail {

inline void fill_p_values(TestResult& r, double stat, double direction, Sidedness s) {
  r.statistic = stat;
  const double root = std::sqrt(std::max(stat, 0.0));
  r.signed_root = direction > 0 ? root : (direction < 0 ? -root : 0.0);
  r.p_greater = dist::norm_sf(r.signed_root);
  r.p_less = dist::norm_sf(-r.signed_root);
  r.p_two_sided = dist::chisq1_sf(stat);
  r.sidedness = s;
  switch (s) {
    case Sidedness::kGreater: r.p_value = r.p_greater; break;
    case Sidedness::kLess: r.p_value = r.p_less; break;
    case Sidedness::kTwoSided: r.p_value = r.p_two_sided; break;
  }
}

inline TestResult start(const MuEstimate& mu, const VarianceEstimate& v, const Hypothesis& h,
                        TestMethod method) {
  h.validate();
  TestResult r;
  r.measure = h.measure;
  r.method = method;
  r.null_value = h.null_value;
  r.level = h.level;
  r.estimator = v.estimator;
  r.correction = v.correction;
  r.estimate = h.measure == Measure::kDifference ? mu.difference() : mu.ratio();
  return r;
}

// chi^2_{1-alpha}: the two-sided critical value, z_{1-alpha/2}^2.
inline double critical_chisq(double level) { return dist::chisq1_quantile(level); }

}  // namespace detail

// sigma_D^2 = S22 - 2 S21 + S11, clipped at 0.
inline double effect_diff_variance(const VarianceEstimate& v, bool* clipped = nullptr) {
  const double s = v.sigma(1, 1) - 2.0 * v.sigma(1, 0) + v.sigma(0, 0);
  if (clipped) *clipped = s < 0.0;
  return std::max(s, 0.0);
}

inline TestResult wald_test_diff(const MuEstimate& mu, const VarianceEstimate& v,
                                 const Hypothesis& h) {
  TestResult r = detail::start(mu, v, h, TestMethod::kWald);
  const double vd = effect_diff_variance(v);
  if (!(vd > 0.0)) throw ZeroVarianceError("variance of the difference is zero");
  const double d = r.estimate - h.null_value;
  r.effect_variance = vd;
  detail::fill_p_values(r, d * d / vd, d, h.sidedness);
  const double half = dist::norm_quantile(0.5 + 0.5 * h.level) * std::sqrt(vd);
  r.ci = Interval{r.estimate - half, r.estimate + half};
  return r;
}

inline TestResult score_test_diff(const MuEstimate& mu, const VarianceEstimate& v,
                                  const Hypothesis& h) {
  TestResult r = detail::start(mu, v, h, TestMethod::kScore);
  const double vd = effect_diff_variance(v);
  if (!(vd > 0.0)) throw ZeroVarianceError("variance of the difference is zero");
  const double n = static_cast<double>(mu.n);
  const double d = r.estimate - h.null_value;
  r.effect_variance = vd;
  detail::fill_p_values(r, d * d / (vd + d * d / n), d, h.sidedness);
  const double c = detail::critical_chisq(h.level);
  if (n > c) {
    const double half = std::sqrt(vd) * std::sqrt(c / (1.0 - c / n));
    r.ci = Interval{r.estimate - half, r.estimate + half};
  } else {
    r.interval_diagnostic = "score interval undefined: n = " + csv::number(n) +
                            " does not exceed the critical value " + csv::number(c);
  }
  return r;
}

inline TestResult wald_test_ratio(const MuEstimate& mu, const VarianceEstimate& v,
                                  const Hypothesis& h) {
  TestResult r = detail::start(mu, v, h, TestMethod::kWald);
  const double m1 = mu.mu[0], m2 = mu.mu[1];
  if (!(m1 > 0.0 && m2 > 0.0))
    throw ValueError("ratio Wald test needs positive arm means");
  const double s2 = v.sigma(1, 1) / (m2 * m2) - 2.0 * v.sigma(1, 0) / (m1 * m2) +
                    v.sigma(0, 0) / (m1 * m1);
  if (!(s2 > 0.0)) throw ZeroVarianceError("variance of the log ratio is zero");
  r.effect_variance = s2;
  r.log_scale = true;
  const double lr = std::log(m2) - std::log(m1);
  const double d = lr - std::log(h.null_value);
  detail::fill_p_values(r, d * d / s2, d, h.sidedness);
  const double half = dist::norm_quantile(0.5 + 0.5 * h.level) * std::sqrt(s2);
  r.ci = Interval{std::exp(lr - half), std::exp(lr + half)};
  return r;
}

struct RatioScoreCoefficients {
  double a = 0.0;
  double b = 0.0;
};

inline RatioScoreCoefficients ratio_score_coefficients(const MuEstimate& mu,
                                                       const VarianceEstimate& v, double c) {
  const double m1 = mu.mu[0], m2 = mu.mu[1];
  const double n = static_cast<double>(mu.n);
  const double den = 1.0 - c * (v.sigma(0, 0) / (m1 * m1) + 1.0 / n);
  return {(1.0 - c * (v.sigma(1, 0) / (m1 * m2) + 1.0 / n)) / den,
          (1.0 - c * (v.sigma(1, 1) / (m2 * m2) + 1.0 / n)) / den};
}

inline TestResult score_test_ratio(const MuEstimate& mu, const VarianceEstimate& v,
                                   const Hypothesis& h) {
  TestResult r = detail::start(mu, v, h, TestMethod::kScore);
  const double m1 = mu.mu[0], m2 = mu.mu[1];
  if (!(m1 > 0.0)) throw ValueError("ratio score test needs a positive reference-arm mean");
  const double n = static_cast<double>(mu.n);
  const double d0 = h.null_value;
  const double num = m2 - d0 * m1;
  const double var0 = v.sigma(1, 1) - 2.0 * d0 * v.sigma(1, 0) + d0 * d0 * v.sigma(0, 0);
  const double den = var0 + num * num / n;
  if (!(den > 0.0)) throw ZeroVarianceError("score statistic denominator is zero");
  r.effect_variance = var0;
  detail::fill_p_values(r, num * num / den, num, h.sidedness);

  const double c = detail::critical_chisq(h.level);
  if (!((1.0 - c / n) * m1 * m1 > c * v.sigma(0, 0))) {
    r.interval_diagnostic =
        "score ratio interval undefined: (1 - chi2/n) mu1^2 <= chi2 Sigma11 (mu1 = " +
        csv::number(m1) + ", Sigma11 = " + csv::number(v.sigma(0, 0)) + ")";
    return r;
  }
  const auto [a, b] = ratio_score_coefficients(mu, v, c);
  const double disc = a * a - b;
  if (!(disc > 0.0)) {
    r.interval_diagnostic = "score ratio interval undefined: a^2 - b = " + csv::number(disc) +
                            " (a = " + csv::number(a) + ", b = " + csv::number(b) + ")";
    return r;
  }
  const double scale = m2 / m1, root = std::sqrt(disc);
  Interval ci{scale * (a - root), scale * (a + root)};
  if (ci.lower > ci.upper) std::swap(ci.lower, ci.upper);
  r.ci = ci;
  return r;
}

inline TestResult run_test(const MuEstimate& mu, const VarianceEstimate& v, const Hypothesis& h,
                           TestMethod method) {
  if (h.measure == Measure::kDifference)
    return method == TestMethod::kWald ? wald_test_diff(mu, v, h) : score_test_diff(mu, v, h);
  return method == TestMethod::kWald ? wald_test_ratio(mu, v, h) : score_test_ratio(mu, v, h);
}

// Arm-only model with estimator I.
inline TestResult unadjusted_analysis(const TrialDataset& data, const Hypothesis& h,
                                      TestMethod method, Family family = Family::kGaussianIdentity,
                                      Correction correction = Correction::kHC0) {
  const DesignMatrix design = build_design(data, ModelSpec{family, {}, false});
  const FittedGLM f = fit(design, data.outcome(), family);
  const GcompContext ctx(f, design);
  const VarianceEstimate v = estimate_variance(ctx, VarianceEstimator::kI, correction);
  return run_test(ctx.mu, v, h, method);
}

}  // namespace gcscore
