#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace gcscore {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes, so new error kinds must derive from one of the groups below.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Data and schema problems (CLI exit code 2).
class DataError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

class ValueError : public DataError {
 public:
  using DataError::DataError;
};

class EmptyDataError : public DataError {
 public:
  using DataError::DataError;
};

class ConfigError : public DataError {
 public:
  using DataError::DataError;
};

// Model fitting problems (CLI exit code 3).
class FitError : public Error {
 public:
  using Error::Error;
};

class NonConvergenceError : public FitError {
 public:
  NonConvergenceError(const std::string& what, Eigen::VectorXd last_beta,
                      double score_norm, int iterations)
      : FitError(what),
        last_beta_(std::move(last_beta)),
        score_norm_(score_norm),
        iterations_(iterations) {}

  const Eigen::VectorXd& last_beta() const { return last_beta_; }
  double score_norm() const { return score_norm_; }
  int iterations() const { return iterations_; }

 private:
  Eigen::VectorXd last_beta_;
  double score_norm_;
  int iterations_;
};

class RankDeficiencyError : public FitError {
 public:
  RankDeficiencyError(const std::string& what, std::vector<int> dependent)
      : FitError(what), dependent_columns_(std::move(dependent)) {}

  // Column indices judged linearly dependent on the others.
  const std::vector<int>& dependent_columns() const {
    return dependent_columns_;
  }

 private:
  std::vector<int> dependent_columns_;
};

class SeparationError : public FitError {
 public:
  using FitError::FitError;
};

class DegenerateArmError : public FitError {
 public:
  using FitError::FitError;
};

class ZeroVarianceError : public FitError {
 public:
  using FitError::FitError;
};

// Confidence interval undefined (CLI exit code 4). Statistics are still
// available on the TestResult that carried the diagnostic.
class IntervalUndefinedError : public Error {
 public:
  using Error::Error;
};

}  // namespace gcscore
