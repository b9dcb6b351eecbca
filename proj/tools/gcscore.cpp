// gcscore command-line front end: analyze, simulate, calibrate.
//
// Exit codes: 0 ok, 2 data/config error, 3 fit error, 4 interval undefined
// (report still written), 1 anything else.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gcscore/gcscore.hpp"

namespace {

using namespace gcscore;

int exit_code(const std::exception& e) {
  if (dynamic_cast<const DataError*>(&e)) return 2;
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return 2;
  if (dynamic_cast<const FitError*>(&e)) return 3;
  if (dynamic_cast<const IntervalUndefinedError*>(&e)) return 4;
  return 1;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << text;
}

int cmd_analyze(const std::string& config_path, const std::string& out_path,
                const std::string& table_path) {
  const AnalysisConfig cfg = load_analysis_config(config_path);
  const AnalysisReport report = run_analysis(cfg);
  write_file(out_path, to_json(report).dump(2) + "\n");
  std::ostringstream table;
  write_table(table, report);
  std::cout << table.str();
  if (!table_path.empty()) write_file(table_path, table.str());
  if (report.interval_undefined()) {
    std::cerr << "gcscore: a confidence interval is undefined; see interval_diagnostic in "
              << out_path << "\n";
    return 4;
  }
  return 0;
}

std::string oc_csv(const Scenario& s, const MethodsConfig& mc, const OCResult& r) {
  std::ostringstream out;
  csv::write_row(out, {"method", "measure", "test", "estimator", "correction", "covariates",
                       "reps", "failures", "valid", "rejections", "rejection_rate", "mc_se",
                       "covered", "coverage_n", "coverage", "interval_undefined", "mean_estimate",
                       "true_effect", "null", "seed", "scenario"});
  for (std::size_t m = 0; m < mc.methods.size(); ++m) {
    const MethodSpec& ms = mc.methods[m];
    const MethodOC& oc = r.methods[m];
    const bool diff = ms.measure == Measure::kDifference;
    std::string covs;
    for (const auto& c : ms.model.covariates) covs += (covs.empty() ? "" : ";") + c;
    csv::write_row(out, {ms.label, std::string(to_string(ms.measure)), std::string(to_string(ms.test)),
                         std::string(to_string(ms.estimator)), std::string(to_string(ms.correction)),
                         covs, std::to_string(oc.reps), std::to_string(oc.failures),
                         std::to_string(oc.valid()), std::to_string(oc.rejections),
                         csv::number(oc.rejection_rate()), csv::number(oc.mc_se()),
                         std::to_string(oc.covered), std::to_string(oc.coverage_denominator()),
                         csv::number(oc.coverage()), std::to_string(oc.interval_undefined),
                         csv::number(oc.mean_estimate()),
                         csv::number(diff ? r.true_means[1] - r.true_means[0]
                                          : r.true_means[1] / r.true_means[0]),
                         csv::number(diff ? mc.options.null_difference : mc.options.null_ratio),
                         std::to_string(r.seed), s.name});
  }
  return out.str();
}

int cmd_simulate(const std::string& scenario_path, const std::string& methods_path, int reps,
                 std::uint64_t seed, const std::string& out_path, std::string report_path,
                 int workers) {
  const Scenario s = load_scenario(scenario_path);
  MethodsConfig mc = load_methods(methods_path);
  mc.options.reps = reps;
  mc.options.seed = seed;
  mc.options.workers = workers;
  const OCResult r = run_oc(s, mc.methods, mc.options);
  write_file(out_path, oc_csv(s, mc, r));

  if (report_path.empty())
    report_path = std::filesystem::path(out_path).replace_extension(".json").string();
  json rep;
  rep["schema_version"] = kReportSchemaVersion;
  rep["software"] = {{"name", "gcscore"}, {"version", kVersion}};
  rep["seed"] = seed;
  rep["reps"] = reps;
  rep["scenario"] = {{"name", s.name},
                     {"n", s.n},
                     {"allocation", s.allocation},
                     {"scheme", s.scheme == Scheme::kComplete ? "complete" : "stratified-block"},
                     {"block_size", s.block_size},
                     {"beta_a", s.beta_a},
                     {"beta_w", std::vector<double>(s.beta_w.data(), s.beta_w.data() + s.beta_w.size())}};
  rep["true_means"] = r.true_means;
  rep["level"] = mc.options.level;
  rep["sidedness"] = to_string(mc.options.sidedness);
  json rows = json::array();
  for (std::size_t m = 0; m < mc.methods.size(); ++m) {
    const MethodOC& oc = r.methods[m];
    rows.push_back({{"method", oc.label},
                    {"reps", oc.reps},
                    {"failures", oc.failures},
                    {"rejection_rate", oc.rejection_rate()},
                    {"mc_se", oc.mc_se()},
                    {"coverage", oc.coverage()},
                    {"interval_undefined", oc.interval_undefined},
                    {"mean_estimate", oc.mean_estimate()}});
  }
  rep["methods"] = rows;
  write_file(report_path, rep.dump(2) + "\n");
  std::cout << "wrote " << out_path << " and " << report_path << "\n";
  return 0;
}

int cmd_calibrate(std::vector<double> targets, std::vector<double> beta_w,
                  const std::vector<std::string>& kinds, const std::string& scenario_path,
                  double precision) {
  std::vector<CovariateSpec> specs;
  Eigen::VectorXd beta;
  if (!scenario_path.empty()) {
    const json j = detail::read_json(scenario_path);
    if (targets.empty() && j.contains("marginal_targets")) {
      const auto t = detail::pair_of(j.at("marginal_targets"), "marginal_targets");
      targets = {t[0], t[1]};
    }
    const Scenario s = parse_scenario(j, false);
    specs = s.covariates;
    beta = s.beta_w;
  } else {
    beta = Eigen::Map<Eigen::VectorXd>(beta_w.data(), static_cast<Eigen::Index>(beta_w.size()));
    for (std::size_t k = 0; k < beta_w.size(); ++k) {
      CovariateSpec spec;
      const std::string kind = k < kinds.size() ? kinds[k] : "normal";
      if (kind.rfind("bernoulli:", 0) == 0) {
        spec.kind = CovariateSpec::Kind::kBernoulli;
        const auto p = csv::parse_number(kind.substr(10));
        if (!p) throw ConfigError("bad Bernoulli probability in '" + kind + "'");
        spec.p = *p;
      } else if (kind != "normal") {
        throw ConfigError("covariate kind must be 'normal' or 'bernoulli:<p>'");
      }
      specs.push_back(spec);
    }
  }
  if (targets.size() != 2) throw ConfigError("need two marginal targets");
  const auto b = calibrate_intercepts({targets[0], targets[1]}, beta, specs, precision);
  const auto achieved = true_marginal_means(b, beta, specs);
  json out = {{"beta_a", b}, {"targets", targets}, {"achieved", achieved}};
  std::cout << out.dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariate-adjusted g-computation with Wald and score tests"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(gcscore::kVersion));

  std::string config, out, table;
  auto* analyze = app.add_subcommand("analyze", "Analyze one trial dataset");
  analyze->add_option("--config", config, "Analysis config (JSON)")->required();
  analyze->add_option("--out", out, "Report path (JSON)")->required();
  analyze->add_option("--table", table, "Also write the readable table here");

  std::string scenario, methods, report;
  int reps = 1000, workers = 0;
  std::uint64_t seed = 1;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo operating characteristics");
  simulate->add_option("--scenario", scenario, "Scenario file (JSON)")->required();
  simulate->add_option("--methods", methods, "Methods file (JSON)")->required();
  simulate->add_option("--reps", reps, "Replications")->check(CLI::PositiveNumber);
  simulate->add_option("--seed", seed, "Seed");
  simulate->add_option("--out", out, "Per-method CSV")->required();
  simulate->add_option("--report", report, "JSON report (default: --out with .json)");
  simulate->add_option("--workers", workers,
                       "Worker threads (default: GCSCORE_WORKERS, else all cores)");

  std::vector<double> targets, beta_w;
  std::vector<std::string> kinds;
  double precision = 1e-6;
  auto* calibrate = app.add_subcommand("calibrate", "Intercepts hitting target marginal rates");
  calibrate->add_option("--targets", targets, "Marginal rates for arms 1 and 2")
      ->expected(2)
      ->delimiter(',');
  calibrate->add_option("--beta-w", beta_w, "Covariate log-odds coefficients")->delimiter(',');
  calibrate->add_option("--covariates", kinds, "Per covariate: normal | bernoulli:<p>")
      ->delimiter(',');
  calibrate->add_option("--scenario", scenario, "Read covariates and betas from a scenario file");
  calibrate->add_option("--precision", precision, "Target precision");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*analyze) return cmd_analyze(config, out, table);
    if (*simulate) return cmd_simulate(scenario, methods, reps, seed, out, report, workers);
    if (*calibrate) return cmd_calibrate(targets, beta_w, kinds, scenario, precision);
  } catch (const std::exception& e) {
    std::cerr << "gcscore: " << e.what() << "\n";
    return exit_code(e);
  }
  return 1;
}
