#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "gcscore/dataset.hpp"
#include "gcscore/errors.hpp"
#include "gcscore/glm.hpp"

namespace gcscore {

struct MuEstimate {
  std::array<double, 2> mu{0.0, 0.0};
  Eigen::Index n = 0;

  double operator[](Arm a) const { return mu[index_of(a)]; }
  double difference() const { return mu[1] - mu[0]; }
  double ratio() const { return mu[1] / mu[0]; }
};

enum class InfluenceKind { kScore, kAipw };

struct InfluenceMatrix {
  Eigen::MatrixXd values;  // n x 2
  InfluenceKind kind = InfluenceKind::kScore;
};

// I: score-based plug-in, II: AIPW plug-in, III: conditional-moment
// expansion of the AIPW variance.
enum class VarianceEstimator { kI, kII, kIII };
enum class Correction { kHC0, kHC1 };

inline std::string_view to_string(VarianceEstimator e) {
  switch (e) {
    case VarianceEstimator::kI: return "I";
    case VarianceEstimator::kII: return "II";
    case VarianceEstimator::kIII: return "III";
  }
  return "?";
}

inline std::string_view to_string(Correction c) {
  return c == Correction::kHC0 ? "HC0" : "HC1";
}

inline VarianceEstimator parse_estimator(std::string_view s) {
  if (s == "I" || s == "1") return VarianceEstimator::kI;
  if (s == "II" || s == "2") return VarianceEstimator::kII;
  if (s == "III" || s == "3") return VarianceEstimator::kIII;
  throw ConfigError("unknown variance estimator '" + std::string(s) + "'");
}

inline Correction parse_correction(std::string_view s) {
  if (s == "HC0") return Correction::kHC0;
  if (s == "HC1") return Correction::kHC1;
  throw ConfigError("unknown correction '" + std::string(s) + "'");
}

struct VarianceEstimate {
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
  VarianceEstimator estimator = VarianceEstimator::kI;
  Correction correction = Correction::kHC0;
  Eigen::Index n = 0;
};

// Everything downstream needs from one fit, evaluated once: predictions and
// mean-derivative averages under both counterfactual arm settings.
struct GcompContext {
  const FittedGLM& fit;
  const DesignMatrix& design;
  std::array<Eigen::MatrixXd, 2> x_cf;
  std::array<Eigen::VectorXd, 2> pred;  // m(beta' X_i(a))
  MuEstimate mu;

  GcompContext(const FittedGLM& f, const DesignMatrix& d) : fit(f), design(d) {
    if (f.beta.size() != d.p())
      throw ValueError("fit and design have different parameter counts");
    for (int a = 0; a < 2; ++a) {
      x_cf[a] = counterfactual_design(d, arm_from_index(a));
      pred[a] = mean_response(f.family, f.beta, x_cf[a]);
      mu.mu[a] = pred[a].mean();
    }
    mu.n = d.n();
  }

  // g_a = (1/n) sum_j m'(beta' X_j(a)) X_j(a)
  Eigen::VectorXd mean_gradient(int a) const {
    const Eigen::VectorXd w = mean_derivative(fit.family, fit.beta, x_cf[a]);
    return x_cf[a].transpose() * w / static_cast<double>(design.n());
  }
};

inline MuEstimate estimate_mu(const FittedGLM& fit, const DesignMatrix& design) {
  return GcompContext(fit, design).mu;
}

namespace detail {

inline Eigen::ColPivHouseholderQR<Eigen::MatrixXd> factor_bread(const FittedGLM& fit) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(fit.bread);
  qr.setThreshold(1e-12);
  if (qr.rank() < fit.bread.rows()) {
    std::vector<int> dep;
    const auto& perm = qr.colsPermutation().indices();
    for (Eigen::Index k = qr.rank(); k < perm.size(); ++k) dep.push_back(perm(k));
    throw RankDeficiencyError("bread matrix is singular", dep);
  }
  return qr;
}

// Sample covariance (divisor n-1) of the rows of an n x 2 matrix.
inline Eigen::Matrix2d sample_covariance(const Eigen::MatrixXd& rows) {
  const Eigen::Index n = rows.rows();
  const Eigen::RowVector2d mean = rows.colwise().mean();
  const Eigen::MatrixXd centered = rows.rowwise() - mean;
  Eigen::Matrix2d cov = centered.transpose() * centered / static_cast<double>(n - 1);
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  return cov;
}

inline std::array<double, 2> resolve_pi(const DesignMatrix& design,
                                        const std::optional<std::array<double, 2>>& pi) {
  std::array<double, 2> counts{0.0, 0.0};
  for (Arm a : design.arm) counts[index_of(a)] += 1.0;
  if (counts[0] == 0.0 || counts[1] == 0.0)
    throw DegenerateArmError("an arm has no subjects");
  if (!pi) {
    const double n = static_cast<double>(design.n());
    return {counts[0] / n, counts[1] / n};
  }
  const auto& p = *pi;
  if (!(p[0] > 0.0 && p[0] < 1.0 && p[1] > 0.0 && p[1] < 1.0) ||
      std::abs(p[0] + p[1] - 1.0) > 1e-12)
    throw ConfigError("allocation probabilities must lie in (0,1) and sum to 1");
  return p;
}

}  // namespace detail

// psi-hat_a(D_i) = g_a' B^{-1} X_i (Y_i - m_i) + m(beta' X_i(a)) - mu_a
inline InfluenceMatrix influence_score(const GcompContext& ctx) {
  const auto qr = detail::factor_bread(ctx.fit);
  const Eigen::Index n = ctx.design.n();
  InfluenceMatrix out;
  out.kind = InfluenceKind::kScore;
  out.values.resize(n, 2);
  for (int a = 0; a < 2; ++a) {
    // B is symmetric, so g_a' B^{-1} X_i = X_i' (B^{-1} g_a).
    const Eigen::VectorXd v = qr.solve(ctx.mean_gradient(a));
    out.values.col(a) = (ctx.design.x * v).cwiseProduct(ctx.fit.residuals) +
                        (ctx.pred[a].array() - ctx.mu.mu[a]).matrix();
  }
  return out;
}

inline InfluenceMatrix influence_score(const FittedGLM& fit, const DesignMatrix& design) {
  return influence_score(GcompContext(fit, design));
}

// psi-tilde_a(D_i) = I(A_i = a)/pi_a (Y_i - m_i) + m(beta' X_i(a)) - mu_a
inline InfluenceMatrix influence_aipw(const GcompContext& ctx,
                                      const std::optional<std::array<double, 2>>& pi = {}) {
  const auto p = detail::resolve_pi(ctx.design, pi);
  const Eigen::Index n = ctx.design.n();
  InfluenceMatrix out;
  out.kind = InfluenceKind::kAipw;
  out.values.resize(n, 2);
  for (int a = 0; a < 2; ++a)
    for (Eigen::Index i = 0; i < n; ++i) {
      const double ipw = index_of(ctx.design.arm[i]) == a ? 1.0 / p[a] : 0.0;
      out.values(i, a) = ipw * ctx.fit.residuals(i) + ctx.pred[a](i) - ctx.mu.mu[a];
    }
  return out;
}

inline InfluenceMatrix influence_aipw(const FittedGLM& fit, const DesignMatrix& design,
                                      const std::optional<std::array<double, 2>>& pi = {}) {
  return influence_aipw(GcompContext(fit, design), pi);
}

inline VarianceEstimate var_from_influence(const InfluenceMatrix& infl) {
  const Eigen::Index n = infl.values.rows();
  if (n < 2) throw DegenerateArmError("need at least 2 rows for a sample covariance");
  VarianceEstimate v;
  v.sigma = detail::sample_covariance(infl.values) / static_cast<double>(n);
  v.estimator = infl.kind == InfluenceKind::kScore ? VarianceEstimator::kI
                                                   : VarianceEstimator::kII;
  v.correction = Correction::kHC0;
  v.n = n;
  return v;
}

// Estimator III, cellwise from conditional sample moments:
//   (a,a): Var[Y-m | A=a]/(n pi_a) + 2 Cov[Y, m | A=a]/n - Var[m_(a)]/n
//   (a,b): (Cov[Y, m_(b) | A=a] + Cov[Y, m_(a) | A=b] - Cov[m_(a), m_(b)])/n
inline VarianceEstimate var_conditional(const GcompContext& ctx,
                               const std::optional<std::array<double, 2>>& pi = {}) {
  const auto p = detail::resolve_pi(ctx.design, pi);
  const Eigen::Index n = ctx.design.n();
  const Eigen::VectorXd y = ctx.fit.fitted + ctx.fit.residuals;

  std::array<std::vector<Eigen::Index>, 2> rows;
  for (Eigen::Index i = 0; i < n; ++i) rows[index_of(ctx.design.arm[i])].push_back(i);
  for (int a = 0; a < 2; ++a)
    if (rows[a].size() < 2)
      throw DegenerateArmError("arm " + std::to_string(a + 1) +
                               " has fewer than 2 subjects; estimator III undefined");

  auto cov_within = [&](int a, const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    double su = 0.0, sv = 0.0;
    for (auto i : rows[a]) {
      su += u(i);
      sv += v(i);
    }
    const double k = static_cast<double>(rows[a].size());
    su /= k;
    sv /= k;
    double s = 0.0;
    for (auto i : rows[a]) s += (u(i) - su) * (v(i) - sv);
    return s / (k - 1.0);
  };
  auto cov_all = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    return ((u.array() - u.mean()) * (v.array() - v.mean())).sum() /
           static_cast<double>(n - 1);
  };

  const double dn = static_cast<double>(n);
  VarianceEstimate out;
  for (int a = 0; a < 2; ++a) {
    const Eigen::VectorXd& r = ctx.fit.residuals;
    out.sigma(a, a) = cov_within(a, r, r) / (dn * p[a]) +
                      2.0 / dn * cov_within(a, y, ctx.fit.fitted) -
                      cov_all(ctx.pred[a], ctx.pred[a]) / dn;
  }
  const double off = (cov_within(0, y, ctx.pred[1]) + cov_within(1, y, ctx.pred[0]) -
                      cov_all(ctx.pred[0], ctx.pred[1])) /
                     dn;
  out.sigma(0, 1) = out.sigma(1, 0) = off;
  out.estimator = VarianceEstimator::kIII;
  out.correction = Correction::kHC0;
  out.n = n;
  return out;
}

inline VarianceEstimate var_conditional(const FittedGLM& fit, const DesignMatrix& design,
                               const std::optional<std::array<double, 2>>& pi = {}) {
  return var_conditional(GcompContext(fit, design), pi);
}

inline VarianceEstimate apply_correction(const VarianceEstimate& v, Eigen::Index p,
                                         Correction kind) {
  if (kind == Correction::kHC0) return v;
  if (v.n <= p)
    throw ValueError("HC1 needs n > p (n = " + std::to_string(v.n) +
                     ", p = " + std::to_string(p) + ")");
  VarianceEstimate out = v;
  out.sigma *= static_cast<double>(v.n) / static_cast<double>(v.n - p);
  out.correction = Correction::kHC1;
  return out;
}

// Components of sigma_I, all on the n-divisor scale. Their sum equals
// sigma_I * (n-1)/n; total_sample_divisor() undoes that factor.
struct VarianceDecomposition {
  Eigen::Matrix2d beta_estimation;  // G Sigma_beta G'
  Eigen::Matrix2d covariate;        // Var[m-vector]/n
  Eigen::Matrix2d misspecification; // cross term plus its transpose
  Eigen::Index n = 0;

  Eigen::Matrix2d total_n_divisor() const {
    return beta_estimation + covariate + misspecification;
  }
  Eigen::Matrix2d total_sample_divisor() const {
    return total_n_divisor() * static_cast<double>(n) / static_cast<double>(n - 1);
  }
};

inline VarianceDecomposition variance_decomposition(const GcompContext& ctx) {
  const auto qr = detail::factor_bread(ctx.fit);
  const Eigen::Index n = ctx.design.n();
  const double dn = static_cast<double>(n);
  const Eigen::MatrixXd& x = ctx.design.x;
  const Eigen::VectorXd& r = ctx.fit.residuals;

  Eigen::MatrixXd g(2, x.cols());
  g.row(0) = ctx.mean_gradient(0).transpose();
  g.row(1) = ctx.mean_gradient(1).transpose();

  // Sigma_beta = B^{-1} M B^{-1} / n with M = (1/n) sum r_i^2 X_i X_i'.
  const Eigen::MatrixXd meat = x.transpose() * r.cwiseAbs2().asDiagonal() * x / dn;
  const Eigen::MatrixXd binv_meat = qr.solve(meat);
  const Eigen::MatrixXd sigma_beta = qr.solve(binv_meat.transpose()).transpose() / dn;

  Eigen::MatrixXd mdev(n, 2);
  for (int a = 0; a < 2; ++a) mdev.col(a) = ctx.pred[a].array() - ctx.mu.mu[a];

  // Rows of G psi_beta(D_i) = (X_i r_i)' B^{-1} G'.
  const Eigen::MatrixXd bg = qr.solve(g.transpose());  // p x 2
  const Eigen::MatrixXd gpsi = r.asDiagonal() * x * bg;  // n x 2

  VarianceDecomposition out;
  out.n = n;
  out.beta_estimation = g * sigma_beta * g.transpose();
  out.covariate = mdev.transpose() * mdev / (dn * dn);
  const Eigen::Matrix2d cross = gpsi.transpose() * mdev / (dn * dn);
  out.misspecification = cross + cross.transpose();
  return out;
}

inline VarianceDecomposition variance_decomposition(const FittedGLM& fit,
                                                    const DesignMatrix& design) {
  return variance_decomposition(GcompContext(fit, design));
}

// Dispatch on estimator identity, then apply the correction.
inline VarianceEstimate estimate_variance(const GcompContext& ctx, VarianceEstimator estimator,
                                          Correction correction = Correction::kHC0,
                                          const std::optional<std::array<double, 2>>& pi = {}) {
  VarianceEstimate v;
  switch (estimator) {
    case VarianceEstimator::kI: v = var_from_influence(influence_score(ctx)); break;
    case VarianceEstimator::kII: v = var_from_influence(influence_aipw(ctx)); break;
    case VarianceEstimator::kIII: v = var_conditional(ctx, pi); break;
  }
  return apply_correction(v, ctx.design.p(), correction);
}

}  // namespace gcscore
