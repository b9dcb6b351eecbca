#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gcscore/dataset.hpp"
#include "gcscore/errors.hpp"
#include "gcscore/family.hpp"

namespace gcscore {

struct GlmControls {
  int max_iter = 50;
  // Bound on max_j |(1/n) sum_i X_ij (Y_i - m_i)|.
  double tol = 1e-10;
  // Logistic fits with ||beta||_inf beyond this are reported as separated.
  double separation_bound = 30.0;
  // Relative threshold for the rank-revealing QR.
  double rank_threshold = 1e-10;
  // Bound on the last accepted Newton step, relative to 1 + ||beta||_inf.
  double step_tol = 1e-6;
};

struct FittedGLM {
  Family family = Family::kBernoulliLogit;
  Eigen::VectorXd beta;
  // B_beta = (1/n) sum_i m'(beta' X_i) X_i X_i'
  Eigen::MatrixXd bread;
  Eigen::VectorXd fitted;
  // Y - fitted
  Eigen::VectorXd residuals;
  bool converged = false;
  int iterations = 0;
  // Max-abs component of the mean score at beta.
  double score_norm = 0.0;
};

inline Eigen::VectorXd mean_response(Family family, const Eigen::VectorXd& beta,
                                     const Eigen::MatrixXd& x) {
  Eigen::VectorXd eta = x * beta;
  return eta.unaryExpr([family](double e) { return inverse_link(family, e); });
}

inline Eigen::VectorXd mean_derivative(Family family, const Eigen::VectorXd& beta,
                                       const Eigen::MatrixXd& x) {
  Eigen::VectorXd eta = x * beta;
  return eta.unaryExpr([family](double e) { return inverse_link_derivative(family, e); });
}

namespace detail {

// Negative log-likelihood up to terms free of eta; used only for step control.
inline double objective(Family family, const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double e = eta(i);
    switch (family) {
      case Family::kBernoulliLogit:
        // log(1 + exp(e)) without overflow
        total += (e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e))) - y(i) * e;
        break;
      case Family::kPoissonLog: total += std::exp(e) - y(i) * e; break;
      case Family::kGaussianIdentity: total += 0.5 * (y(i) - e) * (y(i) - e); break;
    }
  }
  return total;
}

inline std::vector<int> trailing_columns(const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
  std::vector<int> cols;
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = qr.rank(); k < perm.size(); ++k) cols.push_back(perm(k));
  return cols;
}

inline std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t k = 0; k < v.size(); ++k) s += (k ? "," : "") + std::to_string(v[k]);
  return s;
}

}  // namespace detail

// IRLS (Newton for canonical links) on an explicit model matrix. Arm columns
// are used only to seed the start at link(arm mean of Y).
inline FittedGLM fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, Family family,
                     const GlmControls& controls = {},
                     std::array<int, 2> arm_columns = {0, 1}) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n) throw ValueError("design rows and outcome length differ");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!valid_outcome(family, y(i)))
      throw ValueError("outcome value " + csv::number(y(i)) + " invalid for family " +
                       std::string(to_string(family)));

  {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    qr.setThreshold(controls.rank_threshold);
    if (qr.rank() < p) {
      const auto dep = detail::trailing_columns(qr);
      throw RankDeficiencyError("design matrix is rank deficient (rank " +
                                    std::to_string(qr.rank()) + " of " + std::to_string(p) +
                                    "); dependent columns: " + detail::join(dep),
                                dep);
    }
  }

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  for (int c : arm_columns) {
    if (c < 0 || c >= p) continue;
    double sum = 0.0, count = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (x(i, c) == 1.0) {
        sum += y(i);
        count += 1.0;
      }
    if (count > 0) beta(c) = clipped_link(family, sum / count);
  }

  const double dn = static_cast<double>(n);
  Eigen::VectorXd eta = x * beta;
  double obj = detail::objective(family, y, eta);

  auto score_of = [&](const Eigen::VectorXd& e) -> Eigen::VectorXd {
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) r(i) = y(i) - inverse_link(family, e(i));
    return x.transpose() * r;
  };

  Eigen::VectorXd score = score_of(eta);
  double score_norm = score.cwiseAbs().maxCoeff() / dn;
  int iter = 0;
  bool converged = score_norm <= controls.tol;
  bool polished = false;

  while (iter < controls.max_iter && (!converged || !polished)) {
    if (converged) polished = true;
    ++iter;
    Eigen::VectorXd sw(n), rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = std::max(inverse_link_derivative(family, eta(i)),
                                std::numeric_limits<double>::min());
      sw(i) = std::sqrt(w);
      rhs(i) = (y(i) - inverse_link(family, eta(i))) / sw(i);
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sw.asDiagonal() * x);
    qr.setThreshold(controls.rank_threshold);
    if (qr.rank() < p) {
      if (family == Family::kBernoulliLogit)
        throw SeparationError("working weights vanished during logistic fit (separation)");
      const auto dep = detail::trailing_columns(qr);
      throw RankDeficiencyError("weighted normal matrix is singular; dependent columns: " +
                                    detail::join(dep),
                                dep);
    }
    const Eigen::VectorXd step = qr.solve(rhs);

    // Step halving guards against overshoot on the likelihood surface.
    double scale = 1.0;
    Eigen::VectorXd next_beta, next_eta;
    double next_obj = 0.0;
    for (int halvings = 0;; ++halvings) {
      next_beta = beta + scale * step;
      next_eta = x * next_beta;
      next_obj = detail::objective(family, y, next_eta);
      if (std::isfinite(next_obj) && next_obj <= obj + 1e-12 * (1.0 + std::abs(obj))) break;
      if (halvings == 30) break;
      scale *= 0.5;
    }
    const double step_size = (scale * step).cwiseAbs().maxCoeff();
    const Eigen::VectorXd next_score = score_of(next_eta);
    const double next_norm = next_score.cwiseAbs().maxCoeff() / dn;
    if (converged && !(next_norm < score_norm)) break;  // polish did not help

    beta = next_beta;
    eta = next_eta;
    obj = next_obj;
    score = next_score;
    score_norm = next_norm;

    if (family == Family::kBernoulliLogit &&
        beta.cwiseAbs().maxCoeff() > controls.separation_bound)
      throw SeparationError("logistic coefficients diverge (|beta|_inf = " +
                            csv::number(beta.cwiseAbs().maxCoeff()) +
                            "); outcome appears separated");
    if (!beta.allFinite())
      throw NonConvergenceError("IRLS produced non-finite coefficients", beta, score_norm, iter);
    // A small score alone is not enough: under separation the score vanishes
    // while the coefficients keep drifting by roughly constant steps.
    if (score_norm <= controls.tol &&
        step_size <= controls.step_tol * (1.0 + beta.cwiseAbs().maxCoeff()))
      converged = true;
  }
  if (!converged)
    throw NonConvergenceError("IRLS did not converge in " + std::to_string(controls.max_iter) +
                                  " iterations (score norm " + csv::number(score_norm) + ")",
                              beta, score_norm, iter);

  FittedGLM out;
  out.family = family;
  out.beta = beta;
  out.fitted = mean_response(family, beta, x);
  out.residuals = y - out.fitted;
  const Eigen::VectorXd w = mean_derivative(family, beta, x);
  out.bread = (x.transpose() * w.asDiagonal() * x) / dn;
  out.bread = 0.5 * (out.bread + out.bread.transpose()).eval();
  out.converged = true;
  out.iterations = iter;
  out.score_norm = score_norm;
  return out;
}

inline FittedGLM fit(const DesignMatrix& design, const Eigen::VectorXd& y, Family family,
                     const GlmControls& controls = {}) {
  return fit(design.x, y, family, controls, design.arm_columns);
}

}  // namespace gcscore
