#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gcscore/csv.hpp"
#include "gcscore/errors.hpp"
#include "gcscore/family.hpp"

namespace gcscore {

// Arm 1 is always the reference arm.
enum class Arm : std::uint8_t { kOne = 1, kTwo = 2 };

constexpr int index_of(Arm a) { return a == Arm::kOne ? 0 : 1; }
constexpr Arm arm_from_index(int i) { return i == 0 ? Arm::kOne : Arm::kTwo; }
constexpr Arm other(Arm a) { return a == Arm::kOne ? Arm::kTwo : Arm::kOne; }

// Outcomes, arm labels and covariates for n subjects. Immutable once built
// through make(), which enforces the invariants.
class TrialDataset {
 public:
  static TrialDataset make(Eigen::VectorXd outcome, std::vector<Arm> arm,
                           std::vector<std::string> covariate_names,
                           Eigen::MatrixXd covariates,
                           std::optional<std::vector<std::string>> stratum = {},
                           std::size_t dropped = 0) {
    const auto n = outcome.size();
    if (static_cast<std::size_t>(n) != arm.size())
      throw ValueError("outcome and arm lengths differ");
    if (covariates.rows() != n && !(covariates.size() == 0 && covariate_names.empty()))
      throw ValueError("covariate rows differ from outcome length");
    if (covariates.size() == 0) covariates.resize(n, 0);
    if (covariates.cols() != static_cast<Eigen::Index>(covariate_names.size()))
      throw ValueError("covariate names do not match covariate columns");
    if (stratum && stratum->size() != static_cast<std::size_t>(n))
      throw ValueError("stratum length differs from outcome length");
    if (n < 2) throw EmptyDataError("need at least 2 subjects, have " + std::to_string(n));
    if (!outcome.allFinite() || !covariates.allFinite())
      throw ValueError("missing or non-finite values in dataset");
    std::array<std::size_t, 2> counts{0, 0};
    for (Arm a : arm) ++counts[index_of(a)];
    if (counts[0] == 0 || counts[1] == 0)
      throw ValueError("both arms must be present (arm 1: " + std::to_string(counts[0]) +
                       ", arm 2: " + std::to_string(counts[1]) + ")");

    TrialDataset d;
    d.outcome_ = std::move(outcome);
    d.arm_ = std::move(arm);
    d.covariate_names_ = std::move(covariate_names);
    d.covariates_ = std::move(covariates);
    d.stratum_ = std::move(stratum);
    d.dropped_ = dropped;
    d.arm_counts_ = counts;
    return d;
  }

  Eigen::Index n() const { return outcome_.size(); }
  const Eigen::VectorXd& outcome() const { return outcome_; }
  const std::vector<Arm>& arm() const { return arm_; }
  const std::vector<std::string>& covariate_names() const { return covariate_names_; }
  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const std::optional<std::vector<std::string>>& stratum() const { return stratum_; }
  std::size_t dropped() const { return dropped_; }
  std::size_t arm_count(Arm a) const { return arm_counts_[index_of(a)]; }

  // Empirical allocation proportions (pi-hat_1, pi-hat_2).
  std::array<double, 2> arm_proportions() const {
    const double total = static_cast<double>(n());
    return {arm_counts_[0] / total, arm_counts_[1] / total};
  }

  int covariate_index(const std::string& name) const {
    for (std::size_t j = 0; j < covariate_names_.size(); ++j)
      if (covariate_names_[j] == name) return static_cast<int>(j);
    return -1;
  }

  void check_outcomes(Family family) const {
    for (Eigen::Index i = 0; i < n(); ++i)
      if (!valid_outcome(family, outcome_(i)))
        throw ValueError("outcome value " + csv::number(outcome_(i)) + " in row " +
                         std::to_string(i + 1) + " is invalid for family " +
                         std::string(to_string(family)));
  }

 private:
  TrialDataset() = default;

  Eigen::VectorXd outcome_;
  std::vector<Arm> arm_;
  std::vector<std::string> covariate_names_;
  Eigen::MatrixXd covariates_;
  std::optional<std::vector<std::string>> stratum_;
  std::size_t dropped_ = 0;
  std::array<std::size_t, 2> arm_counts_{0, 0};
};

// Which CSV columns play which role.
struct CsvSchema {
  std::string outcome;
  std::string arm;
  std::vector<std::string> covariates;
  std::optional<std::string> stratum;
  // Raw arm token -> canonical arm. Empty means the column already holds 1/2.
  std::map<std::string, Arm> arm_map;
  char delimiter = ',';
};

inline TrialDataset load_csv(std::istream& in, const CsvSchema& schema) {
  const csv::Table table = csv::read(in, schema.delimiter);

  auto require = [&](const std::string& name) {
    const int j = table.column(name);
    if (j < 0) throw SchemaError("column '" + name + "' not found in CSV header");
    return j;
  };
  const int y_col = require(schema.outcome);
  const int a_col = require(schema.arm);
  std::vector<int> w_cols;
  for (const auto& name : schema.covariates) w_cols.push_back(require(name));
  const int s_col = schema.stratum ? require(*schema.stratum) : -1;

  auto to_arm = [&](std::string_view raw, std::size_t row) -> Arm {
    const auto token = std::string(csv::trim(raw));
    if (!schema.arm_map.empty()) {
      const auto it = schema.arm_map.find(token);
      if (it == schema.arm_map.end())
        throw ValueError("arm value '" + token + "' in row " + std::to_string(row) +
                         " has no entry in the arm relabel map");
      return it->second;
    }
    const auto v = csv::parse_number(token);
    if (v && *v == 1.0) return Arm::kOne;
    if (v && *v == 2.0) return Arm::kTwo;
    throw ValueError("arm value '" + token + "' in row " + std::to_string(row) +
                     " is not in {1,2}");
  };
  auto to_number = [&](std::string_view raw, const std::string& column, std::size_t row) {
    const auto v = csv::parse_number(raw);
    if (!v)
      throw ValueError("non-numeric value '" + std::string(raw) + "' in column '" + column +
                       "' row " + std::to_string(row));
    return *v;
  };

  std::vector<double> y;
  std::vector<Arm> arms;
  std::vector<std::vector<double>> w;
  std::vector<std::string> strata;
  std::size_t dropped = 0;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const std::size_t line = r + 2;  // 1-based, header is line 1
    bool missing = csv::is_missing(row[y_col]) || csv::is_missing(row[a_col]);
    for (int j : w_cols) missing = missing || csv::is_missing(row[j]);
    if (s_col >= 0) missing = missing || csv::is_missing(row[s_col]);
    if (missing) {
      ++dropped;
      continue;
    }
    y.push_back(to_number(row[y_col], schema.outcome, line));
    arms.push_back(to_arm(row[a_col], line));
    std::vector<double> wr;
    for (std::size_t k = 0; k < w_cols.size(); ++k)
      wr.push_back(to_number(row[w_cols[k]], schema.covariates[k], line));
    w.push_back(std::move(wr));
    if (s_col >= 0) strata.emplace_back(csv::trim(row[s_col]));
  }
  if (y.empty()) throw EmptyDataError("no usable rows after dropping missing values");

  const auto n = static_cast<Eigen::Index>(y.size());
  Eigen::VectorXd outcome = Eigen::Map<Eigen::VectorXd>(y.data(), n);
  Eigen::MatrixXd cov(n, static_cast<Eigen::Index>(w_cols.size()));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < cov.cols(); ++k) cov(i, k) = w[i][k];
  std::optional<std::vector<std::string>> stratum;
  if (s_col >= 0) stratum = std::move(strata);
  return TrialDataset::make(std::move(outcome), std::move(arms), schema.covariates,
                            std::move(cov), std::move(stratum), dropped);
}

inline TrialDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open data file '" + path + "'");
  return load_csv(in, schema);
}

// Appends k-1 indicator columns "stratum[level]" for the k stratum levels;
// the lexicographically first level is the reference.
inline TrialDataset with_stratum_dummies(const TrialDataset& data) {
  if (!data.stratum()) throw SchemaError("dataset has no stratum column");
  std::vector<std::string> levels(data.stratum()->begin(), data.stratum()->end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  const auto n = data.n();
  const auto q = data.covariates().cols();
  const auto extra = static_cast<Eigen::Index>(levels.size()) - 1;
  Eigen::MatrixXd w(n, q + extra);
  w.leftCols(q) = data.covariates();
  auto names = data.covariate_names();
  for (Eigen::Index k = 0; k < extra; ++k) {
    const std::string& level = levels[static_cast<std::size_t>(k + 1)];
    names.push_back("stratum[" + level + "]");
    for (Eigen::Index i = 0; i < n; ++i)
      w(i, q + k) = (*data.stratum())[static_cast<std::size_t>(i)] == level ? 1.0 : 0.0;
  }
  return TrialDataset::make(data.outcome(), data.arm(), std::move(names), std::move(w),
                            data.stratum(), data.dropped());
}

struct ModelSpec {
  Family family = Family::kBernoulliLogit;
  std::vector<std::string> covariates;
  bool heterogeneous = false;
};

enum class TermKind { kArmIndicator, kCovariate, kArmInteraction };

// Symbolic recipe for one design column.
struct Term {
  TermKind kind;
  Arm arm = Arm::kOne;  // indicator / interaction arm
  int covariate = -1;   // column of DesignMatrix::covariate_values
  std::string label;
};

// Observed model matrix with arm-indicator columns and the recipe needed to
// rebuild any row under a different arm assignment.
struct DesignMatrix {
  Eigen::MatrixXd x;
  std::vector<Arm> arm;
  std::array<int, 2> arm_columns{0, 1};
  std::vector<Term> terms;
  Eigen::MatrixXd covariate_values;  // n x (#covariate terms), raw values
  std::vector<std::string> warnings;

  Eigen::Index n() const { return x.rows(); }
  Eigen::Index p() const { return x.cols(); }
};

// Homogeneous:   [I(A=1), I(A=2), W_1..W_q]
// Heterogeneous: [I(A=1), I(A=2), W_1 I(A=1)..W_q I(A=1), W_1 I(A=2)..W_q I(A=2)]
inline DesignMatrix build_design(const TrialDataset& data, const ModelSpec& spec) {
  const Eigen::Index n = data.n();
  const auto q = static_cast<Eigen::Index>(spec.covariates.size());

  DesignMatrix d;
  d.arm = data.arm();
  d.covariate_values.resize(n, q);
  for (Eigen::Index k = 0; k < q; ++k) {
    const int j = data.covariate_index(spec.covariates[k]);
    if (j < 0) throw SchemaError("unknown covariate '" + spec.covariates[k] + "'");
    d.covariate_values.col(k) = data.covariates().col(j);
  }

  d.terms.push_back({TermKind::kArmIndicator, Arm::kOne, -1, "arm1"});
  d.terms.push_back({TermKind::kArmIndicator, Arm::kTwo, -1, "arm2"});
  if (!spec.heterogeneous) {
    for (Eigen::Index k = 0; k < q; ++k)
      d.terms.push_back({TermKind::kCovariate, Arm::kOne, static_cast<int>(k),
                         spec.covariates[k]});
  } else {
    for (Arm a : {Arm::kOne, Arm::kTwo})
      for (Eigen::Index k = 0; k < q; ++k)
        d.terms.push_back({TermKind::kArmInteraction, a, static_cast<int>(k),
                           spec.covariates[k] + ":arm" + std::to_string(index_of(a) + 1)});
    for (Eigen::Index k = 0; k < q; ++k) {
      const auto col = d.covariate_values.col(k);
      if ((col.array() == col(0)).all())
        d.warnings.push_back("covariate '" + spec.covariates[k] +
                             "' is constant; its arm interactions duplicate the arm columns");
    }
  }

  d.x.resize(n, static_cast<Eigen::Index>(d.terms.size()));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Arm a = d.arm[i];
    for (std::size_t c = 0; c < d.terms.size(); ++c) {
      const Term& t = d.terms[c];
      double v = 0.0;
      switch (t.kind) {
        case TermKind::kArmIndicator: v = (t.arm == a) ? 1.0 : 0.0; break;
        case TermKind::kCovariate: v = d.covariate_values(i, t.covariate); break;
        case TermKind::kArmInteraction:
          v = (t.arm == a) ? d.covariate_values(i, t.covariate) : 0.0;
          break;
      }
      d.x(i, static_cast<Eigen::Index>(c)) = v;
    }
  }
  return d;
}

// X_(a): every row rebuilt as if assigned to arm a.
inline Eigen::MatrixXd counterfactual_design(const DesignMatrix& design, Arm a) {
  Eigen::MatrixXd xa = design.x;
  for (std::size_t c = 0; c < design.terms.size(); ++c) {
    const Term& t = design.terms[c];
    const auto col = static_cast<Eigen::Index>(c);
    switch (t.kind) {
      case TermKind::kArmIndicator:
        xa.col(col).setConstant(t.arm == a ? 1.0 : 0.0);
        break;
      case TermKind::kCovariate: break;
      case TermKind::kArmInteraction:
        if (t.arm == a)
          xa.col(col) = design.covariate_values.col(t.covariate);
        else
          xa.col(col).setZero();
        break;
    }
  }
  return xa;
}

}  // namespace gcscore
