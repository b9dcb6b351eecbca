#pragma once

#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <Eigen/Dense>

namespace gcscore {

// Nodes and weights for E[f(Z)], Z ~ N(0,1): sum_k w_k f(z_k).
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;

  template <typename F>
  double expect(F&& f) const {
    double s = 0.0;
    for (Eigen::Index k = 0; k < nodes.size(); ++k) s += weights(k) * f(nodes(k));
    return s;
  }
};

// Golub-Welsch on the Hermite Jacobi matrix (weight exp(-x^2)), rescaled to
// the standard normal.
inline GaussHermite make_gauss_hermite(int order) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(k / 2.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  GaussHermite gh;
  gh.nodes = es.eigenvalues() * std::numbers::sqrt2;
  gh.weights = es.eigenvectors().row(0).transpose().cwiseAbs2();
  gh.weights /= gh.weights.sum();
  return gh;
}

inline const GaussHermite& gauss_hermite(int order = 200) {
  static std::mutex mu;
  static std::map<int, GaussHermite> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(order);
  if (it == cache.end()) it = cache.emplace(order, make_gauss_hermite(order)).first;
  return it->second;
}

}  // namespace gcscore
