#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gcscore/dataset.hpp"
#include "gcscore/errors.hpp"
#include "gcscore/gcomp.hpp"
#include "gcscore/glm.hpp"
#include "gcscore/inference.hpp"
#include "gcscore/simulation.hpp"

namespace gcscore {

using json = nlohmann::json;

struct AnalysisConfig {
  std::string data;  // absolute once resolved
  CsvSchema schema;
  ModelSpec model;
  bool adjust_for_stratum = false;
  Hypothesis hypothesis{Measure::kDifference, 0.0, 0.95, Sidedness::kTwoSided};
  VarianceEstimator estimator = VarianceEstimator::kI;
  Correction correction = Correction::kHC0;
  std::optional<std::array<double, 2>> pi;  // empty: empirical
  GlmControls controls;
};

namespace detail {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline const json& require(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError(std::string("missing required key '") + key + "'");
  return j.at(key);
}

inline std::vector<std::string> string_list(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return {};
  const json& v = j.at(key);
  if (v.is_string()) return {v.get<std::string>()};
  if (!v.is_array()) throw ConfigError(std::string("'") + key + "' must be a list of strings");
  std::vector<std::string> out;
  for (const auto& e : v) {
    if (!e.is_string()) throw ConfigError(std::string("'") + key + "' must be a list of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

inline std::array<double, 2> pair_of(const json& v, const char* what) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(std::string(what) + " must be a pair of numbers");
  return {v[0].get<double>(), v[1].get<double>()};
}

inline json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace detail

// base_dir resolves a relative data path.
inline AnalysisConfig parse_analysis_config(const json& j,
                                            const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("analysis config must be a JSON object");
  AnalysisConfig c;
  std::filesystem::path data = detail::require(j, "data").get<std::string>();
  if (data.is_relative() && !base_dir.empty()) data = base_dir / data;
  c.data = data.lexically_normal().string();

  const json& s = detail::require(j, "schema");
  c.schema.outcome = detail::require(s, "outcome").get<std::string>();
  c.schema.arm = detail::require(s, "arm").get<std::string>();
  c.schema.covariates = detail::string_list(s, "covariates");
  if (s.contains("stratum") && !s.at("stratum").is_null())
    c.schema.stratum = s.at("stratum").get<std::string>();
  const std::string delim = detail::get_or<std::string>(s, "delimiter", ",");
  if (delim.size() != 1) throw ConfigError("delimiter must be a single character");
  c.schema.delimiter = delim[0];
  if (s.contains("arm_map")) {
    for (const auto& [raw, arm] : s.at("arm_map").items()) {
      const int a = arm.get<int>();
      if (a != 1 && a != 2) throw ConfigError("arm_map values must be 1 or 2");
      c.schema.arm_map[raw] = a == 1 ? Arm::kOne : Arm::kTwo;
    }
  }

  const json m = j.value("model", json::object());
  c.model.family = parse_family(detail::get_or<std::string>(m, "family", "bernoulli-logit"));
  c.model.covariates = m.contains("covariates") ? detail::string_list(m, "covariates")
                                                : c.schema.covariates;
  c.model.heterogeneous = detail::get_or<bool>(m, "heterogeneous", false);
  c.adjust_for_stratum = detail::get_or<bool>(m, "adjust_for_stratum", false);
  if (c.adjust_for_stratum && !c.schema.stratum)
    throw ConfigError("adjust_for_stratum needs schema.stratum");

  const json e = j.value("effect", json::object());
  c.hypothesis.measure = parse_measure(detail::get_or<std::string>(e, "measure", "difference"));
  c.hypothesis.null_value = detail::get_or<double>(
      e, "null", c.hypothesis.measure == Measure::kRatio ? 1.0 : 0.0);
  c.hypothesis.level = detail::get_or<double>(e, "level", 0.95);
  c.hypothesis.sidedness = parse_sidedness(detail::get_or<std::string>(e, "sidedness", "two-sided"));
  c.hypothesis.validate();

  const json v = j.value("variance", json::object());
  c.estimator = parse_estimator(detail::get_or<std::string>(v, "estimator", "I"));
  c.correction = parse_correction(detail::get_or<std::string>(v, "correction", "HC0"));
  if (v.contains("pi")) {
    const json& pi = v.at("pi");
    if (pi.is_string()) {
      if (pi.get<std::string>() != "empirical") throw ConfigError("pi must be 'empirical' or a pair");
    } else {
      c.pi = detail::pair_of(pi, "pi");
      check_allocation(*c.pi);
    }
  }

  const json g = j.value("glm", json::object());
  c.controls.max_iter = detail::get_or<int>(g, "max_iter", c.controls.max_iter);
  c.controls.tol = detail::get_or<double>(g, "tol", c.controls.tol);
  c.controls.separation_bound = detail::get_or<double>(g, "separation_bound", c.controls.separation_bound);
  c.controls.rank_threshold = detail::get_or<double>(g, "rank_threshold", c.controls.rank_threshold);
  c.controls.step_tol = detail::get_or<double>(g, "step_tol", c.controls.step_tol);
  return c;
}

inline AnalysisConfig load_analysis_config(const std::string& path) {
  return parse_analysis_config(detail::read_json(path),
                               std::filesystem::absolute(path).parent_path());
}

// Inverse of parse_analysis_config; the result parses back to the same config.
inline json to_json(const AnalysisConfig& c) {
  json arm_map = json::object();
  for (const auto& [raw, a] : c.schema.arm_map) arm_map[raw] = index_of(a) + 1;
  json j;
  j["data"] = c.data;
  j["schema"] = {{"outcome", c.schema.outcome},
                 {"arm", c.schema.arm},
                 {"covariates", c.schema.covariates},
                 {"stratum", c.schema.stratum ? json(*c.schema.stratum) : json()},
                 {"delimiter", std::string(1, c.schema.delimiter)},
                 {"arm_map", arm_map}};
  j["model"] = {{"family", to_string(c.model.family)},
                {"covariates", c.model.covariates},
                {"heterogeneous", c.model.heterogeneous},
                {"adjust_for_stratum", c.adjust_for_stratum}};
  j["effect"] = {{"measure", to_string(c.hypothesis.measure)},
                 {"null", c.hypothesis.null_value},
                 {"level", c.hypothesis.level},
                 {"sidedness", to_string(c.hypothesis.sidedness)}};
  j["variance"] = {{"estimator", to_string(c.estimator)},
                   {"correction", to_string(c.correction)},
                   {"pi", c.pi ? json(*c.pi) : json("empirical")}};
  j["glm"] = {{"max_iter", c.controls.max_iter},
              {"tol", c.controls.tol},
              {"separation_bound", c.controls.separation_bound},
              {"rank_threshold", c.controls.rank_threshold},
              {"step_tol", c.controls.step_tol}};
  return j;
}

// Scenario document. Intercepts come from "beta_a" or, failing that, are
// calibrated to "marginal_targets". With resolve_intercepts false both may be
// absent and beta_a is left at zero.
inline Scenario parse_scenario(const json& j, bool resolve_intercepts = true) {
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  Scenario s;
  s.name = detail::get_or<std::string>(j, "name", "scenario");
  s.n = detail::require(j, "n").get<int>();
  if (j.contains("allocation")) s.allocation = detail::pair_of(j.at("allocation"), "allocation");
  const std::string scheme = detail::get_or<std::string>(j, "scheme", "complete");
  if (scheme == "complete")
    s.scheme = Scheme::kComplete;
  else if (scheme == "stratified-block")
    s.scheme = Scheme::kStratifiedBlock;
  else
    throw ConfigError("unknown randomization scheme '" + scheme + "'");
  s.block_size = detail::get_or<int>(j, "block_size", 4);

  const json covs = j.value("covariates", json::array());
  if (!covs.is_array()) throw ConfigError("covariates must be a list");
  s.beta_w.resize(static_cast<Eigen::Index>(covs.size()));
  for (std::size_t k = 0; k < covs.size(); ++k) {
    const json& c = covs[k];
    const std::string type = detail::get_or<std::string>(c, "type", "normal");
    CovariateSpec spec;
    if (type == "normal") {
      spec.kind = CovariateSpec::Kind::kStandardNormal;
    } else if (type == "bernoulli") {
      spec.kind = CovariateSpec::Kind::kBernoulli;
      spec.p = detail::require(c, "p").get<double>();
    } else {
      throw ConfigError("unknown covariate type '" + type + "'");
    }
    s.covariates.push_back(spec);
    s.beta_w(static_cast<Eigen::Index>(k)) = detail::require(c, "beta").get<double>();
  }

  for (const auto& r : j.value("strata", json::array())) {
    StratificationRule rule;
    const std::string name = detail::require(r, "covariate").get<std::string>();
    const auto names = s.covariate_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ConfigError("stratification covariate '" + name + "' not defined");
    rule.covariate = static_cast<int>(it - names.begin());
    rule.threshold = detail::get_or<double>(r, "threshold", 0.0);
    s.strata.push_back(rule);
  }

  if (j.contains("beta_a")) {
    s.beta_a = detail::pair_of(j.at("beta_a"), "beta_a");
  } else if (j.contains("marginal_targets")) {
    s.beta_a = calibrate_intercepts(detail::pair_of(j.at("marginal_targets"), "marginal_targets"),
                                    s.beta_w, s.covariates);
  } else if (resolve_intercepts) {
    throw ConfigError("scenario needs beta_a or marginal_targets");
  }
  s.validate();
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  return parse_scenario(detail::read_json(path));
}

struct MethodsConfig {
  std::vector<MethodSpec> methods;
  OcOptions options;
};

// Each entry may list several tests and estimators; the cartesian product is
// expanded in (estimator, test) order.
inline MethodsConfig parse_methods(const json& j) {
  MethodsConfig out;
  const json& list = j.is_array() ? j : detail::require(j, "methods");
  if (j.is_object()) {
    out.options.null_difference = detail::get_or<double>(j, "null_difference", 0.0);
    out.options.null_ratio = detail::get_or<double>(j, "null_ratio", 1.0);
    out.options.level = detail::get_or<double>(j, "level", 0.95);
    out.options.sidedness =
        parse_sidedness(detail::get_or<std::string>(j, "sidedness", "one-sided-greater"));
  }
  if (!list.is_array() || list.empty()) throw ConfigError("methods must be a non-empty list");
  for (const auto& m : list) {
    auto tests = detail::string_list(m, "test");
    auto estimators = detail::string_list(m, "estimator");
    if (tests.empty()) tests = {"wald", "score"};
    if (estimators.empty()) estimators = {"I"};
    const std::string prefix = detail::get_or<std::string>(m, "label", "");
    for (const auto& e : estimators)
      for (const auto& t : tests) {
        MethodSpec ms;
        ms.model.family = parse_family(detail::get_or<std::string>(m, "family", "bernoulli-logit"));
        ms.model.covariates = detail::string_list(m, "covariates");
        ms.model.heterogeneous = detail::get_or<bool>(m, "heterogeneous", false);
        ms.measure = parse_measure(detail::get_or<std::string>(m, "measure", "difference"));
        ms.test = parse_method(t);
        ms.estimator = parse_estimator(e);
        ms.correction = parse_correction(detail::get_or<std::string>(m, "correction", "HC0"));
        ms.label = (prefix.empty() ? "" : prefix + ":") + t + "-" + e +
                   (ms.correction == Correction::kHC1 ? "-HC1" : "") +
                   (ms.measure == Measure::kRatio ? "-ratio" : "");
        out.methods.push_back(ms);
      }
  }
  return out;
}

inline MethodsConfig load_methods(const std::string& path) {
  return parse_methods(detail::read_json(path));
}

}  // namespace gcscore
