#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcscore/config.hpp"
#include "gcscore/dataset.hpp"
#include "gcscore/gcomp.hpp"
#include "gcscore/glm.hpp"
#include "gcscore/inference.hpp"

namespace gcscore {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kReportSchemaVersion = 1;

struct AnalysisReport {
  AnalysisConfig config;
  Eigen::Index n = 0;
  std::size_t dropped = 0;
  std::array<std::size_t, 2> arm_counts{0, 0};
  MuEstimate mu;
  VarianceEstimate variance;
  std::array<double, 2> se{0.0, 0.0};
  TestResult wald;
  TestResult score;
  std::vector<std::string> terms;
  Eigen::VectorXd beta;
  int iterations = 0;
  double score_norm = 0.0;
  std::vector<std::string> warnings;

  bool interval_undefined() const { return !wald.ci || !score.ci; }
};

inline AnalysisReport run_analysis(const AnalysisConfig& c, const TrialDataset& loaded) {
  c.hypothesis.validate();
  const TrialDataset data = c.adjust_for_stratum ? with_stratum_dummies(loaded) : loaded;
  data.check_outcomes(c.model.family);

  ModelSpec model = c.model;
  if (c.adjust_for_stratum)
    for (const auto& name : data.covariate_names())
      if (name.rfind("stratum[", 0) == 0) model.covariates.push_back(name);

  const DesignMatrix design = build_design(data, model);
  const FittedGLM f = fit(design, data.outcome(), model.family, c.controls);
  const GcompContext ctx(f, design);

  AnalysisReport r;
  r.config = c;
  r.n = data.n();
  r.dropped = data.dropped();
  r.arm_counts = {data.arm_count(Arm::kOne), data.arm_count(Arm::kTwo)};
  r.mu = ctx.mu;
  r.variance = estimate_variance(ctx, c.estimator, c.correction, c.pi);
  r.se = {std::sqrt(std::max(r.variance.sigma(0, 0), 0.0)),
          std::sqrt(std::max(r.variance.sigma(1, 1), 0.0))};
  r.wald = run_test(r.mu, r.variance, c.hypothesis, TestMethod::kWald);
  r.score = run_test(r.mu, r.variance, c.hypothesis, TestMethod::kScore);
  for (const auto& t : design.terms) r.terms.push_back(t.label);
  r.beta = f.beta;
  r.iterations = f.iterations;
  r.score_norm = f.score_norm;
  r.warnings = design.warnings;
  if (c.estimator != VarianceEstimator::kII && c.pi)
    r.warnings.push_back("fixed pi only affects estimators II and III");
  return r;
}

inline AnalysisReport run_analysis(const AnalysisConfig& c) {
  return run_analysis(c, load_csv(c.data, c.schema));
}

inline json to_json(const TestResult& t) {
  json j;
  j["method"] = to_string(t.method);
  j["measure"] = to_string(t.measure);
  j["estimate"] = t.estimate;
  j["null"] = t.null_value;
  j["statistic"] = t.statistic;
  j["signed_root"] = t.signed_root;
  j["reference"] = to_string(t.reference);
  j["sidedness"] = to_string(t.sidedness);
  j["p_value"] = t.p_value;
  j["p_one_sided_greater"] = t.p_greater;
  j["p_one_sided_less"] = t.p_less;
  j["p_two_sided"] = t.p_two_sided;
  j["level"] = t.level;
  j["ci"] = t.ci ? json::array({t.ci->lower, t.ci->upper}) : json();
  if (!t.ci) j["interval_diagnostic"] = t.interval_diagnostic;
  j["variance_tag"] = std::string(to_string(t.estimator)) + "/" + std::string(to_string(t.correction));
  j["effect_variance"] = t.effect_variance;
  j["scale"] = t.log_scale ? "log" : "natural";
  return j;
}

inline json to_json(const AnalysisReport& r) {
  json j;
  j["schema_version"] = kReportSchemaVersion;
  j["software"] = {{"name", "gcscore"}, {"version", kVersion}};
  j["config"] = to_json(r.config);
  j["n"] = r.n;
  j["dropped"] = r.dropped;
  j["arm_counts"] = r.arm_counts;
  j["arms"] = json::array({{{"arm", 1}, {"mean", r.mu.mu[0]}, {"se", r.se[0]}},
                           {{"arm", 2}, {"mean", r.mu.mu[1]}, {"se", r.se[1]}}});
  j["estimate"] = r.wald.estimate;
  j["variance"] = {{"estimator", to_string(r.variance.estimator)},
                   {"correction", to_string(r.variance.correction)},
                   {"sigma", {{r.variance.sigma(0, 0), r.variance.sigma(0, 1)},
                              {r.variance.sigma(1, 0), r.variance.sigma(1, 1)}}}};
  j["tests"] = {{"wald", to_json(r.wald)}, {"score", to_json(r.score)}};
  json coef = json::array();
  for (std::size_t k = 0; k < r.terms.size(); ++k)
    coef.push_back({{"term", r.terms[k]}, {"estimate", r.beta(static_cast<Eigen::Index>(k))}});
  j["fit"] = {{"family", to_string(r.config.model.family)},
              {"coefficients", coef},
              {"iterations", r.iterations},
              {"score_norm", r.score_norm}};
  j["warnings"] = r.warnings;
  return j;
}

namespace detail {

inline std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

}  // namespace detail

// Rounded for reading only; the JSON report carries full precision.
inline void write_table(std::ostream& out, const AnalysisReport& r) {
  const bool diff = r.config.hypothesis.measure == Measure::kDifference;
  auto effect = [&](double v) { return diff ? detail::fmt("%.2f%%", 100 * v) : detail::fmt("%.4f", v); };
  out << "g-computation, " << to_string(r.config.model.family) << " working model, "
      << (diff ? "risk difference (arm 2 - arm 1)" : "ratio (arm 2 / arm 1)") << "\n";
  out << "n = " << r.n << " (arm 1: " << r.arm_counts[0] << ", arm 2: " << r.arm_counts[1]
      << ", dropped: " << r.dropped << "), variance " << to_string(r.variance.estimator) << "/"
      << to_string(r.variance.correction) << "\n";
  for (int a = 0; a < 2; ++a)
    out << "  arm " << a + 1 << " mean " << detail::fmt("%.4f", r.mu.mu[a]) << "  se "
        << detail::fmt("%.4f", r.se[a]) << "\n";
  out << "  " << "test   estimate   " << detail::fmt("%.0f%%", 100 * r.config.hypothesis.level)
      << " CI                  p (" << to_string(r.config.hypothesis.sidedness) << ")\n";
  for (const TestResult* t : {&r.wald, &r.score}) {
    std::string ci = "undefined";
    if (t->ci) ci = "(" + effect(t->ci->lower) + ", " + effect(t->ci->upper) + ")";
    char line[160];
    std::snprintf(line, sizeof line, "  %-6s %-10s %-24s %.4f\n", to_string(t->method).data(),
                  effect(t->estimate).c_str(), ci.c_str(), t->p_value);
    out << line;
  }
  for (const auto& w : r.warnings) out << "warning: " << w << "\n";
}

}  // namespace gcscore
