#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "gcscore/dataset.hpp"
#include "gcscore/errors.hpp"
#include "gcscore/family.hpp"
#include "gcscore/gcomp.hpp"
#include "gcscore/glm.hpp"
#include "gcscore/inference.hpp"
#include "gcscore/quadrature.hpp"
#include "gcscore/random.hpp"

namespace gcscore {

struct CovariateSpec {
  enum class Kind { kStandardNormal, kBernoulli };
  Kind kind = Kind::kStandardNormal;
  double p = 0.5;  // Bernoulli success probability
};

enum class Scheme { kComplete, kStratifiedBlock };

// Stratum membership I(W_c > threshold); several rules cross-classify.
struct StratificationRule {
  int covariate = 0;
  double threshold = 0.0;
};

struct Scenario {
  std::string name;
  int n = 0;
  std::array<double, 2> allocation{0.5, 0.5};
  Scheme scheme = Scheme::kComplete;
  int block_size = 4;
  std::vector<CovariateSpec> covariates;
  Eigen::VectorXd beta_w;
  std::array<double, 2> beta_a{0.0, 0.0};
  std::vector<StratificationRule> strata;

  std::vector<std::string> covariate_names() const {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < covariates.size(); ++j) names.push_back("W" + std::to_string(j + 1));
    return names;
  }

  void validate() const {
    if (n < 2) throw ConfigError("scenario n must be at least 2");
    check_allocation(allocation);
    if (beta_w.size() != static_cast<Eigen::Index>(covariates.size()))
      throw ConfigError("beta_W has " + std::to_string(beta_w.size()) + " entries for " +
                        std::to_string(covariates.size()) + " covariates");
    for (const auto& c : covariates)
      if (c.kind == CovariateSpec::Kind::kBernoulli && !(c.p > 0.0 && c.p < 1.0))
        throw ConfigError("Bernoulli covariate probability must lie in (0,1)");
    for (const auto& r : strata)
      if (r.covariate < 0 || r.covariate >= static_cast<int>(covariates.size()))
        throw ConfigError("stratification rule refers to a missing covariate");
    if (scheme == Scheme::kStratifiedBlock && block_size < 2)
      throw ConfigError("block size must be at least 2");
  }
};

inline TrialDataset generate_trial(const Scenario& s, Philox4x32& rng) {
  s.validate();
  const auto n = static_cast<Eigen::Index>(s.n);
  const auto q = static_cast<Eigen::Index>(s.covariates.size());
  NormalSampler normal;
  Eigen::MatrixXd w(n, q);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < q; ++j) {
      const auto& spec = s.covariates[static_cast<std::size_t>(j)];
      w(i, j) = spec.kind == CovariateSpec::Kind::kStandardNormal ? normal(rng)
                                                                  : (rng.uniform() < spec.p ? 1.0 : 0.0);
    }

  std::optional<std::vector<std::string>> stratum;
  if (!s.strata.empty()) {
    stratum.emplace();
    for (Eigen::Index i = 0; i < n; ++i) {
      std::string label;
      for (const auto& r : s.strata) label += w(i, r.covariate) > r.threshold ? '1' : '0';
      stratum->push_back(label);
    }
  }

  std::vector<Arm> arms;
  if (s.scheme == Scheme::kComplete) {
    arms = randomize_complete(static_cast<std::size_t>(n), s.allocation, rng);
  } else {
    const std::vector<std::string> labels =
        stratum ? *stratum : std::vector<std::string>(static_cast<std::size_t>(n), "");
    arms = randomize_stratified_block(labels, s.block_size, s.allocation, rng);
  }

  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double eta = s.beta_a[index_of(arms[i])] + (q ? w.row(i).dot(s.beta_w) : 0.0);
    y(i) = rng.uniform() < expit(eta) ? 1.0 : 0.0;
  }
  return TrialDataset::make(std::move(y), std::move(arms), s.covariate_names(), std::move(w),
                            std::move(stratum));
}

// mu_a = E[expit(beta_a + beta_W' W)]. Normal covariates collapse into one
// normal with sd ||beta_normal||; Bernoulli ones are enumerated.
inline std::array<double, 2> true_marginal_means(const std::array<double, 2>& beta_a,
                                                 const Eigen::VectorXd& beta_w,
                                                 const std::vector<CovariateSpec>& specs) {
  if (beta_w.size() != static_cast<Eigen::Index>(specs.size()))
    throw ConfigError("beta_W and covariate specs differ in length");
  double ss = 0.0;
  std::vector<std::pair<double, double>> bern;  // (coefficient, probability)
  for (std::size_t j = 0; j < specs.size(); ++j) {
    if (specs[j].kind == CovariateSpec::Kind::kStandardNormal)
      ss += beta_w(static_cast<Eigen::Index>(j)) * beta_w(static_cast<Eigen::Index>(j));
    else
      bern.emplace_back(beta_w(static_cast<Eigen::Index>(j)), specs[j].p);
  }
  if (bern.size() > 20) throw ConfigError("too many Bernoulli covariates to enumerate");
  const double sd = std::sqrt(ss);
  const GaussHermite& gh = gauss_hermite();

  std::array<double, 2> mu{0.0, 0.0};
  const std::uint32_t combos = 1u << bern.size();
  for (std::uint32_t mask = 0; mask < combos; ++mask) {
    double prob = 1.0, shift = 0.0;
    for (std::size_t k = 0; k < bern.size(); ++k) {
      const bool on = mask >> k & 1u;
      prob *= on ? bern[k].second : 1.0 - bern[k].second;
      if (on) shift += bern[k].first;
    }
    for (int a = 0; a < 2; ++a) {
      const double base = beta_a[a] + shift;
      mu[a] += prob * (sd == 0.0 ? expit(base)
                                 : gh.expect([&](double z) { return expit(base + sd * z); }));
    }
  }
  return mu;
}

// Bisection on each intercept; the marginal mean is strictly increasing in it.
inline std::array<double, 2> calibrate_intercepts(const std::array<double, 2>& targets,
                                                  const Eigen::VectorXd& beta_w,
                                                  const std::vector<CovariateSpec>& specs,
                                                  double precision = 1e-6) {
  std::array<double, 2> out{};
  for (int a = 0; a < 2; ++a) {
    const double t = targets[a];
    if (!(t > 0.0 && t < 1.0))
      throw ConfigError("calibration target " + csv::number(t) + " is not bracketed in (0,1)");
    auto mean_at = [&](double b) { return true_marginal_means({b, b}, beta_w, specs)[0]; };
    double lo = -50.0, hi = 50.0;
    if (!(mean_at(lo) < t && mean_at(hi) > t))
      throw ConfigError("calibration target " + csv::number(t) + " is not bracketed");
    double mid = 0.0;
    for (int it = 0; it < 200; ++it) {
      mid = 0.5 * (lo + hi);
      const double m = mean_at(mid);
      if (std::abs(m - t) < 1e-3 * precision || hi - lo < 1e-13) break;
      (m < t ? lo : hi) = mid;
    }
    out[a] = mid;
  }
  return out;
}

// One analysis applied to every simulated trial.
struct MethodSpec {
  std::string label;
  ModelSpec model;
  Measure measure = Measure::kDifference;
  TestMethod test = TestMethod::kWald;
  VarianceEstimator estimator = VarianceEstimator::kI;
  Correction correction = Correction::kHC0;
};

struct OcOptions {
  int reps = 1000;
  std::uint64_t seed = 1;
  double null_difference = 0.0;
  double null_ratio = 1.0;
  double level = 0.95;
  // Rejection uses this sidedness at alpha = (1-level)/2 one-sided, 1-level two-sided.
  Sidedness sidedness = Sidedness::kGreater;
  int workers = 0;  // 0: hardware concurrency
};

struct MethodOC {
  std::string label;
  int reps = 0;
  int failures = 0;
  int rejections = 0;
  int covered = 0;
  int interval_undefined = 0;
  double estimate_sum = 0.0;

  int valid() const { return reps - failures; }
  double rejection_rate() const { return valid() ? static_cast<double>(rejections) / valid() : 0.0; }
  double mc_se() const {
    const double r = rejection_rate();
    return valid() ? std::sqrt(r * (1.0 - r) / valid()) : 0.0;
  }
  int coverage_denominator() const { return valid() - interval_undefined; }
  double coverage() const {
    return coverage_denominator() ? static_cast<double>(covered) / coverage_denominator() : 0.0;
  }
  double mean_estimate() const { return valid() ? estimate_sum / valid() : 0.0; }
};

struct OCResult {
  std::vector<MethodOC> methods;
  std::array<double, 2> true_means{0.0, 0.0};
  std::uint64_t seed = 0;
  int reps = 0;
};

// Outcome of one method on one replication.
struct RepOutcome {
  bool failed = false;
  bool rejected = false;
  bool interval_defined = false;
  bool covered = false;
  double estimate = 0.0;
  double statistic = 0.0;
};

inline int worker_count(int requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("GCSCORE_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

// Runs every method on one generated trial. Fits and variance matrices are
// shared across methods that use the same working model.
inline std::vector<RepOutcome> analyze_replication(const TrialDataset& data,
                                                   const std::vector<MethodSpec>& methods,
                                                   const OcOptions& opt,
                                                   const std::array<double, 2>& truth) {
  struct ModelCache {
    std::optional<DesignMatrix> design;
    std::optional<FittedGLM> fit;
    std::optional<GcompContext> ctx;
    std::map<std::pair<int, int>, VarianceEstimate> variance;
    bool failed = false;
  };
  std::map<std::string, ModelCache> cache;
  const double alpha = opt.sidedness == Sidedness::kTwoSided ? 1.0 - opt.level : 0.5 * (1.0 - opt.level);

  std::vector<RepOutcome> out(methods.size());
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const MethodSpec& ms = methods[m];
    std::string key = std::string(to_string(ms.model.family)) + (ms.model.heterogeneous ? "|h" : "|c");
    for (const auto& c : ms.model.covariates) key += "|" + c;
    ModelCache& mc = cache[key];
    RepOutcome& r = out[m];
    try {
      if (mc.failed) throw FitError("cached failure");
      if (!mc.ctx) {
        try {
          mc.design.emplace(build_design(data, ms.model));
          mc.fit.emplace(fit(*mc.design, data.outcome(), ms.model.family));
          mc.ctx.emplace(*mc.fit, *mc.design);
        } catch (const FitError&) {
          mc.failed = true;
          throw;
        }
      }
      const auto vkey = std::make_pair(static_cast<int>(ms.estimator), static_cast<int>(ms.correction));
      auto it = mc.variance.find(vkey);
      if (it == mc.variance.end())
        it = mc.variance.emplace(vkey, estimate_variance(*mc.ctx, ms.estimator, ms.correction)).first;
      const Hypothesis h{ms.measure,
                         ms.measure == Measure::kDifference ? opt.null_difference : opt.null_ratio,
                         opt.level, opt.sidedness};
      const TestResult t = run_test(mc.ctx->mu, it->second, h, ms.test);
      const double true_effect =
          ms.measure == Measure::kDifference ? truth[1] - truth[0] : truth[1] / truth[0];
      r.estimate = t.estimate;
      r.statistic = t.statistic;
      r.rejected = t.p_value < alpha;
      r.interval_defined = t.ci.has_value();
      r.covered = t.ci && t.ci->lower <= true_effect && true_effect <= t.ci->upper;
    } catch (const FitError&) {
      r = RepOutcome{};
      r.failed = true;
    } catch (const DataError&) {
      r = RepOutcome{};
      r.failed = true;
    }
  }
  return out;
}

inline OCResult run_oc(const Scenario& s, const std::vector<MethodSpec>& methods,
                       const OcOptions& opt) {
  s.validate();
  if (opt.reps < 1) throw ConfigError("reps must be at least 1");
  if (methods.empty()) throw ConfigError("no methods given");
  const auto truth = true_marginal_means(s.beta_a, s.beta_w, s.covariates);

  const auto reps = static_cast<std::size_t>(opt.reps);
  std::vector<std::vector<RepOutcome>> results(reps);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t rep; (rep = next.fetch_add(1)) < reps;) {
      Philox4x32 rng(opt.seed, rep);
      results[rep] = analyze_replication(generate_trial(s, rng), methods, opt, truth);
    }
  };
  const int workers = std::min<int>(worker_count(opt.workers), static_cast<int>(reps));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  OCResult res;
  res.true_means = truth;
  res.seed = opt.seed;
  res.reps = opt.reps;
  for (const auto& ms : methods) res.methods.push_back(MethodOC{ms.label});
  for (const auto& rep : results)  // fixed order, so sums do not depend on scheduling
    for (std::size_t m = 0; m < methods.size(); ++m) {
      MethodOC& agg = res.methods[m];
      const RepOutcome& r = rep[m];
      ++agg.reps;
      if (r.failed) {
        ++agg.failures;
        continue;
      }
      agg.rejections += r.rejected;
      if (!r.interval_defined) ++agg.interval_undefined;
      agg.covered += r.covered;
      agg.estimate_sum += r.estimate;
    }
  return res;
}

}  // namespace gcscore
