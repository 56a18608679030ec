#pragma once

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "manistab/errors.hpp"
#include "manistab/graph.hpp"

namespace manistab {

/// Dense reference computations. They cost O(n^3) and are used as test oracles
/// and small-graph diagnostics; every entry point refuses graphs above `cap`.
inline constexpr Eigen::Index kDefaultOracleCap = 2000;

namespace detail {
inline void check_cap(Eigen::Index n, Eigen::Index cap, const char* what) {
  if (n > cap) {
    throw OracleCapExceeded(std::string(what) + ": n = " + std::to_string(n) +
                            " exceeds oracle cap " + std::to_string(cap));
  }
}
}  // namespace detail

inline Eigen::MatrixXd dense_laplacian(const LaplacianMatrix& L,
                                       Eigen::Index cap = kDefaultOracleCap) {
  detail::check_cap(L.size(), cap, "dense_laplacian");
  return Eigen::MatrixXd(L.matrix());
}

/// Full ascending spectrum of L with orthonormal eigenvectors.
inline Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense_spectrum(
    const LaplacianMatrix& L, Eigen::Index cap = kDefaultOracleCap) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(dense_laplacian(L, cap));
}

/// Moore-Penrose pseudoinverse of a graph Laplacian. Eigenvalues below
/// 1e-10 * lambda_max are treated as the nullspace, so disconnected graphs are
/// handled too.
inline Eigen::MatrixXd dense_pseudoinverse(const LaplacianMatrix& L,
                                           Eigen::Index cap = kDefaultOracleCap) {
  const auto es = dense_spectrum(L, cap);
  const Eigen::VectorXd& lam = es.eigenvalues();
  const double cutoff = 1e-10 * std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam[i] > cutoff) inv[i] = 1.0 / lam[i];
  }
  const Eigen::MatrixXd& V = es.eigenvectors();
  return V * inv.asDiagonal() * V.transpose();
}

/// Effective resistance e_pq' L^+ e_pq read off a dense pseudoinverse.
inline double dense_resistance(const Eigen::MatrixXd& Lpinv, NodeId p, NodeId q) {
  return Lpinv(p, p) + Lpinv(q, q) - 2.0 * Lpinv(p, q);
}

/// Nonzero eigenvalues of L_Y^+ L_X in descending order, via the symmetric
/// form (L_Y^+)^{1/2} L_X (L_Y^+)^{1/2}. Both graphs must be connected.
inline Eigen::VectorXd dense_generalized_eigenvalues(const LaplacianMatrix& LX,
                                                     const LaplacianMatrix& LY,
                                                     Eigen::Index cap = kDefaultOracleCap) {
  if (LX.size() != LY.size()) throw NodeSetMismatch("dense_generalized_eigenvalues: size mismatch");
  const auto ey = dense_spectrum(LY, cap);
  const Eigen::VectorXd& lam = ey.eigenvalues();
  const double cutoff = 1e-10 * std::max(lam.cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd isq = Eigen::VectorXd::Zero(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam[i] > cutoff) isq[i] = 1.0 / std::sqrt(lam[i]);
  }
  const Eigen::MatrixXd& V = ey.eigenvectors();
  const Eigen::MatrixXd half = V * isq.asDiagonal() * V.transpose();
  const Eigen::MatrixXd M = half * dense_laplacian(LX, cap) * half;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()),
                                                    Eigen::EigenvaluesOnly);
  // The shared nullspace contributes one zero; drop the smallest value.
  const Eigen::Index n = LX.size();
  return es.eigenvalues().tail(n - 1).reverse();
}

/// log det of a symmetric positive definite matrix via Cholesky.
inline double logdet_spd(const Eigen::MatrixXd& M) {
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) throw ValidationError("logdet_spd: matrix is not positive definite");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace manistab
