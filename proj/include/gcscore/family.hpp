#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <string_view>

#include "gcscore/errors.hpp"

namespace gcscore {

// Canonical-link GLM families. Only canonical links are offered: the
// randomization-based consistency of g-computation needs them.
enum class Family { kBernoulliLogit, kPoissonLog, kGaussianIdentity };

inline std::string_view to_string(Family f) {
  switch (f) {
    case Family::kBernoulliLogit: return "bernoulli-logit";
    case Family::kPoissonLog: return "poisson-log";
    case Family::kGaussianIdentity: return "gaussian-identity";
  }
  return "unknown";
}

inline Family parse_family(std::string_view name) {
  if (name == "bernoulli-logit" || name == "logit" || name == "binomial")
    return Family::kBernoulliLogit;
  if (name == "poisson-log" || name == "log" || name == "poisson")
    return Family::kPoissonLog;
  if (name == "gaussian-identity" || name == "identity" || name == "gaussian")
    return Family::kGaussianIdentity;
  throw ConfigError("unknown family '" + std::string(name) + "'");
}

inline double expit(double eta) {
  // Split on sign so exp never overflows.
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Inverse link m(eta).
inline double inverse_link(Family f, double eta) {
  switch (f) {
    case Family::kBernoulliLogit: return expit(eta);
    case Family::kPoissonLog: return std::exp(eta);
    case Family::kGaussianIdentity: return eta;
  }
  return eta;
}

// m'(eta). For canonical links this is also the IRLS working weight.
inline double inverse_link_derivative(Family f, double eta) {
  switch (f) {
    case Family::kBernoulliLogit: {
      const double m = expit(eta);
      return m * (1.0 - m);
    }
    case Family::kPoissonLog: return std::exp(eta);
    case Family::kGaussianIdentity: return 1.0;
  }
  return 1.0;
}

// Link applied to a mean, clipped so the starting value is finite.
inline double clipped_link(Family f, double mean) {
  constexpr double kEps = 1e-6;
  switch (f) {
    case Family::kBernoulliLogit: return logit(std::clamp(mean, kEps, 1.0 - kEps));
    case Family::kPoissonLog: return std::log(std::max(mean, kEps));
    case Family::kGaussianIdentity: return mean;
  }
  return mean;
}

inline bool valid_outcome(Family f, double y) {
  if (!std::isfinite(y)) return false;
  switch (f) {
    case Family::kBernoulliLogit: return y == 0.0 || y == 1.0;
    case Family::kPoissonLog: return y >= 0.0;
    case Family::kGaussianIdentity: return true;
  }
  return false;
}

}  // namespace gcscore
