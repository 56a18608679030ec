#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include "manistab/errors.hpp"
#include "manistab/graph.hpp"
#include "manistab/rng.hpp"

namespace manistab {

namespace detail {

/// Residual floor reachable in floating point: a backward-stable solve of an
/// ill-conditioned Laplacian (weights spanning many decades) leaves a residual
/// of order eps * ||L|| * ||x|| that no tolerance can beat.
inline double residual_floor(const LaplacianMatrix& L, const Eigen::VectorXd& x) {
  const double lnorm = 2.0 * L.degrees().maxCoeff();  // ||L||_1 bound
  return 64.0 * std::numeric_limits<double>::epsilon() * lnorm * x.norm();
}

}  // namespace detail

/// Solves Lx = b on the complement of the all-ones vector with Jacobi
/// preconditioned conjugate gradients. b is projected off the constant vector
/// first; the returned x is orthogonal to it. Converged means
/// ||Lx - b|| <= max(tol * ||b||, floating-point residual floor).
inline Eigen::VectorXd laplacian_solve(const LaplacianMatrix& L, const Eigen::VectorXd& b,
                                       double tol = 1e-10, Eigen::Index max_iter = 0) {
  L.check_dim(b.size());
  if (!L.connected()) throw DisconnectedGraph("laplacian_solve requires a connected graph");
  const Eigen::Index n = L.size();
  Eigen::VectorXd rhs = project_off_constant(b);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  const double bnorm = rhs.norm();
  if (bnorm == 0.0) return x;
  if (max_iter <= 0) max_iter = 20 * n + 1000;

  const Eigen::VectorXd inv_diag = L.degrees().cwiseMax(1e-300).cwiseInverse();
  const auto& A = L.matrix();
  Eigen::VectorXd r = rhs;
  Eigen::VectorXd z = project_off_constant(inv_diag.cwiseProduct(r));
  Eigen::VectorXd p = z;
  Eigen::VectorXd Ap(n);
  double rz = r.dot(z);
  auto target = [&] { return std::max(tol * bnorm, detail::residual_floor(L, x)); };
  for (Eigen::Index it = 0; it < max_iter; ++it) {
    Ap.noalias() = A * p;
    const double pAp = p.dot(Ap);
    if (!(pAp > 0.0)) break;
    const double alpha = rz / pAp;
    x += alpha * p;
    r -= alpha * Ap;
    if (r.norm() <= target()) {
      // Guard against drift of the recursive residual.
      Eigen::VectorXd true_r = rhs - A * x;
      if (true_r.norm() <= target()) return project_off_constant(std::move(x));
      r = project_off_constant(std::move(true_r));
    }
    z = project_off_constant(inv_diag.cwiseProduct(r));
    const double rz_new = r.dot(z);
    p = z + (rz_new / rz) * p;
    rz = rz_new;
  }
  x = project_off_constant(std::move(x));
  if ((rhs - A * x).norm() <= target()) return x;
  throw NotConverged("laplacian_solve: no convergence to relative residual " +
                     std::to_string(tol) + " after " + std::to_string(max_iter) + " iterations");
}

/// Reusable solver for many right-hand sides. Graphs up to `direct_limit`
/// nodes are factored once (sparse LDL' of L with the last node grounded);
/// larger ones fall back to laplacian_solve.
class LaplacianSolver {
 public:
  static constexpr Eigen::Index kDirectLimit = 50000;

  explicit LaplacianSolver(const LaplacianMatrix& L, double tol = 1e-12,
                           Eigen::Index direct_limit = kDirectLimit)
      : L_(L), tol_(tol) {
    if (!L.connected()) throw DisconnectedGraph("LaplacianSolver requires a connected graph");
    const Eigen::Index n = L.size();
    direct_ = n >= 2 && n <= direct_limit;
    if (direct_) {
      const Eigen::SparseMatrix<double> grounded = L.matrix().topLeftCorner(n - 1, n - 1);
      ldlt_.compute(grounded);
      if (ldlt_.info() != Eigen::Success) direct_ = false;
    }
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const {
    L_.check_dim(b.size());
    const Eigen::Index n = L_.size();
    const Eigen::VectorXd rhs = project_off_constant(b);
    if (!direct_ || rhs.norm() == 0.0) return laplacian_solve(L_, rhs, tol_);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    x.head(n - 1) = ldlt_.solve(rhs.head(n - 1));
    x = project_off_constant(std::move(x));
    // Two steps of iterative refinement tighten ill-conditioned cases.
    for (int step = 0; step < 2; ++step) {
      const Eigen::VectorXd r = rhs - L_.matrix() * x;
      if (r.norm() <= std::max(tol_ * rhs.norm(), detail::residual_floor(L_, x))) return x;
      Eigen::VectorXd dx = Eigen::VectorXd::Zero(n);
      dx.head(n - 1) = ldlt_.solve(r.head(n - 1) - Eigen::VectorXd::Constant(n - 1, r.mean()));
      x = project_off_constant(x + dx);
    }
    const double res = (rhs - L_.matrix() * x).norm();
    if (res <= std::max(tol_ * rhs.norm(), 16.0 * detail::residual_floor(L_, x))) return x;
    throw NotConverged("LaplacianSolver: residual " + std::to_string(res) + " above tolerance");
  }

  const LaplacianMatrix& laplacian() const { return L_; }

 private:
  const LaplacianMatrix& L_;
  double tol_;
  bool direct_ = false;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
};

/// Ascending eigenvalues and unit-norm eigenvectors (columns), each orthogonal
/// to the all-ones vector.
struct EigenPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

/// Descending eigenvalues of L_Y^+ L_X with unit-norm eigenvectors orthogonal
/// to the all-ones vector.
struct GeneralizedSpectrum {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
};

struct EigenOptions {
  double tol = 1e-8;
  std::uint64_t seed = 0;
  /// Cap on Krylov dimension per Lanczos run; 0 selects max(50 * count, 300).
  Eigen::Index max_dim = 0;
};

namespace detail {

enum class Which { kSmallest, kLargest };

inline void fix_sign(Eigen::Ref<Eigen::VectorXd> v) {
  const double cutoff = 1e-8 * v.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (std::abs(v[i]) > cutoff) {
      if (v[i] < 0.0) v = -v;
      return;
    }
  }
}

/// Converged Ritz pairs of one Lanczos run. `vectors` are B-orthonormal and
/// `b_vectors` holds B times each of them.
struct RitzPairs {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  Eigen::MatrixXd b_vectors;
  bool exhaustive = false;  // the run spanned the whole search space
};

/// Lanczos iteration for an operator that is self-adjoint in the inner product
/// <x, y>_B = x'By, restricted to the complement of the all-ones vector and of
/// a set of locked vectors. Full reorthogonalization; an invariant subspace
/// triggers a fresh random direction, which is how repeated eigenvalues are
/// picked up.
///
/// Op must provide:
///   Eigen::Index size() const;
///   Eigen::VectorXd apply(const Eigen::VectorXd&) const;   // operator
///   Eigen::VectorXd apply_b(const Eigen::VectorXd&) const; // inner product matrix
template <class Op>
class DeflatedLanczos {
 public:
  DeflatedLanczos(const Op& op, Which which, double tol, Eigen::Index max_dim)
      : op_(op), which_(which), tol_(tol), max_dim_(max_dim) {}

  RitzPairs run(Eigen::Index nev, const Eigen::MatrixXd& locked, const Eigen::MatrixXd& locked_b,
                Rng& rng) const {
    const Eigen::Index n = op_.size();
    const Eigen::Index space = n - 1 - locked.cols();
    RitzPairs out;
    if (space <= 0) {
      out.exhaustive = true;
      return out;
    }
    nev = std::min(nev, space);
    const Eigen::Index cap = std::min(max_dim_, space);

    Eigen::MatrixXd Q(n, cap), BQ(n, cap);
    std::vector<double> alpha, beta;
    alpha.reserve(cap);
    beta.reserve(cap);

    auto orthogonalize = [&](Eigen::VectorXd& w, Eigen::Index m) {
      for (int pass = 0; pass < 2; ++pass) {
        w = project_off_constant(std::move(w));
        if (locked.cols() > 0) w -= locked * (locked_b.transpose() * w);
        if (m > 0) w -= Q.leftCols(m) * (BQ.leftCols(m).transpose() * w);
      }
    };
    // Random unit direction in the current search space; false if none is left.
    auto fresh_direction = [&](Eigen::Index m) -> bool {
      std::uniform_int_distribution<int> coin(0, 1);
      for (int attempt = 0; attempt < 8; ++attempt) {
        Eigen::VectorXd w(n);
        for (Eigen::Index i = 0; i < n; ++i) w[i] = coin(rng) ? 1.0 : -1.0;
        orthogonalize(w, m);
        Eigen::VectorXd bw = op_.apply_b(w);
        const double nrm2 = w.dot(bw);
        if (nrm2 > 1e-20 * std::max(1.0, w.squaredNorm())) {
          const double nrm = std::sqrt(nrm2);
          Q.col(m) = w / nrm;
          BQ.col(m) = bw / nrm;
          return true;
        }
      }
      return false;
    };

    if (!fresh_direction(0)) {
      out.exhaustive = true;
      return out;
    }

    double scale = 0.0;
    Eigen::Index next_check = std::min(cap, nev + 20);
    bool values_only_stable = false;
    Eigen::VectorXd prev_wanted;

    for (Eigen::Index j = 0; j < cap; ++j) {
      Eigen::VectorXd w = op_.apply(Q.col(j));
      const double a = w.dot(BQ.col(j));
      alpha.push_back(a);
      w -= a * Q.col(j);
      if (j > 0) w -= beta[j - 1] * Q.col(j - 1);
      orthogonalize(w, j + 1);
      Eigen::VectorXd bw = op_.apply_b(w);
      const double b = std::sqrt(std::max(0.0, w.dot(bw)));
      scale = std::max({scale, std::abs(a), b});
      const Eigen::Index m = j + 1;
      const bool full = (m == cap);
      const bool breakdown = b <= 1e-12 * std::max(scale, 1e-300);
      beta.push_back(breakdown ? 0.0 : b);

      if (m < cap) {
        if (breakdown) {
          if (!fresh_direction(m)) {
            return extract(Q, BQ, alpha, beta, m, nev, /*exhaustive=*/true);
          }
        } else {
          Q.col(m) = w / b;
          BQ.col(m) = bw / b;
        }
      }

      if (full) {
        return extract(Q, BQ, alpha, beta, m, nev, /*exhaustive=*/cap == space);
      }
      if (m < next_check || m < nev) continue;
      next_check = m + std::max<Eigen::Index>(10, m / 8);

      // Cheap gate: Ritz values only, once they stop moving try the full test.
      if (m > 400) {
        Eigen::VectorXd theta = tridiagonal_values(alpha, beta, m);
        Eigen::VectorXd wanted = pick(theta, nev);
        values_only_stable = prev_wanted.size() == wanted.size() &&
                             ((wanted - prev_wanted).cwiseAbs().array() <=
                              1e-12 * wanted.cwiseAbs().array().max(1.0))
                                 .all();
        prev_wanted = wanted;
        if (!values_only_stable) continue;
      }
      RitzPairs trial = extract(Q, BQ, alpha, beta, m, nev, false);
      if (trial.values.size() == nev) return trial;
    }
    return extract(Q, BQ, alpha, beta, cap, nev, cap == space);
  }

 private:
  static Eigen::VectorXd tridiagonal_values(const std::vector<double>& alpha,
                                            const std::vector<double>& beta, Eigen::Index m) {
    Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(std::max<Eigen::Index>(m - 1, 0));
    for (Eigen::Index i = 0; i + 1 < m; ++i) e[i] = beta[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(d, e, Eigen::EigenvaluesOnly);
    return es.eigenvalues();
  }

  Eigen::VectorXd pick(const Eigen::VectorXd& ascending, Eigen::Index nev) const {
    nev = std::min(nev, ascending.size());
    return which_ == Which::kSmallest ? Eigen::VectorXd(ascending.head(nev))
                                      : Eigen::VectorXd(ascending.tail(nev).reverse());
  }

  /// Ritz pairs of the m-step factorization that pass the residual estimate
  /// |beta_m * s_{m,i}| <= tol * max(|theta_i|, 1). With exhaustive = true the
  /// factorization spans the whole space and every wanted pair is exact.
  RitzPairs extract(const Eigen::MatrixXd& Q, const Eigen::MatrixXd& BQ,
                    const std::vector<double>& alpha, const std::vector<double>& beta,
                    Eigen::Index m, Eigen::Index nev, bool exhaustive) const {
    Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(std::max<Eigen::Index>(m - 1, 0));
    for (Eigen::Index i = 0; i + 1 < m; ++i) e[i] = beta[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
    const Eigen::VectorXd& theta = es.eigenvalues();
    const Eigen::MatrixXd& S = es.eigenvectors();
    const double tail_beta = exhaustive ? 0.0 : beta[m - 1];

    nev = std::min(nev, m);
    std::vector<Eigen::Index> keep;
    for (Eigen::Index t = 0; t < nev; ++t) {
      const Eigen::Index i = which_ == Which::kSmallest ? t : m - 1 - t;
      const double resid = std::abs(tail_beta * S(m - 1, i));
      if (resid <= tol_ * std::max(std::abs(theta[i]), 1.0)) keep.push_back(i);
    }
    RitzPairs out;
    out.exhaustive = exhaustive;
    const auto k = static_cast<Eigen::Index>(keep.size());
    out.values.resize(k);
    Eigen::MatrixXd Ssel(m, k);
    for (Eigen::Index c = 0; c < k; ++c) {
      out.values[c] = theta[keep[c]];
      Ssel.col(c) = S.col(keep[c]);
    }
    out.vectors = Q.leftCols(m) * Ssel;
    out.b_vectors = BQ.leftCols(m) * Ssel;
    return out;
  }

  const Op& op_;
  Which which_;
  double tol_;
  Eigen::Index max_dim_;
};

/// Extremal eigenpairs with locking: pairs found by one run are locked and the
/// next run searches their B-orthogonal complement. A final verification run
/// confirms nothing more extremal than the current selection remains, which
/// catches copies of repeated eigenvalues a single Krylov sequence cannot see.
template <class Op>
RitzPairs extremal_eigenpairs(const Op& op, Eigen::Index nev, Which which, double tol,
                              Eigen::Index max_dim, Rng& rng) {
  const Eigen::Index n = op.size();
  DeflatedLanczos<Op> lanczos(op, which, tol, max_dim);
  Eigen::MatrixXd locked(n, 0), locked_b(n, 0);
  std::vector<double> values;
  bool exhausted = false;

  auto more_extreme = [&](double a, double b) {
    return which == Which::kSmallest ? a < b : a > b;
  };
  auto order = [&] {
    std::vector<Eigen::Index> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
      return more_extreme(values[a], values[b]);
    });
    return idx;
  };
  auto append = [&](const RitzPairs& r) {
    const Eigen::Index old = locked.cols();
    locked.conservativeResize(n, old + r.values.size());
    locked_b.conservativeResize(n, old + r.values.size());
    locked.rightCols(r.values.size()) = r.vectors;
    locked_b.rightCols(r.values.size()) = r.b_vectors;
    for (Eigen::Index i = 0; i < r.values.size(); ++i) values.push_back(r.values[i]);
  };

  for (int round = 0; round < 4 * nev + 16; ++round) {
    const auto found = static_cast<Eigen::Index>(values.size());
    if (found >= n - 1 || exhausted) break;
    if (found < nev) {
      RitzPairs r = lanczos.run(nev - found, locked, locked_b, rng);
      if (r.values.size() == 0) {
        throw NotConverged("Lanczos: no Ritz pair reached tolerance within " +
                           std::to_string(max_dim) + " steps");
      }
      append(r);
      exhausted = r.exhaustive;
      continue;
    }
    // Verification: search the complement of everything found so far.
    auto idx = order();
    const double boundary = values[idx[nev - 1]];
    RitzPairs r = lanczos.run(1, locked, locked_b, rng);
    const double slack = 1e3 * tol * std::max(1.0, std::abs(boundary));
    if (r.values.size() == 0 || !more_extreme(r.values[0], boundary) ||
        std::abs(r.values[0] - boundary) <= slack) {
      break;
    }
    append(r);
    exhausted = r.exhaustive;
  }

  auto idx = order();
  const Eigen::Index k = std::min<Eigen::Index>(nev, static_cast<Eigen::Index>(values.size()));
  RitzPairs out;
  out.values.resize(k);
  out.vectors.resize(n, k);
  out.b_vectors.resize(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    out.values[c] = values[idx[c]];
    out.vectors.col(c) = locked.col(idx[c]);
    out.b_vectors.col(c) = locked_b.col(idx[c]);
  }
  return out;
}

struct LaplacianOperator {
  const LaplacianMatrix& L;
  Eigen::Index size() const { return L.size(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return L.matrix() * x; }
  Eigen::VectorXd apply_b(const Eigen::VectorXd& x) const { return x; }
};

/// b -> L_Y^+ L_X b, self-adjoint in the L_Y inner product.
struct PencilOperator {
  const LaplacianMatrix& LX;
  const LaplacianMatrix& LY;
  LaplacianSolver solver_y;
  Eigen::Index size() const { return LX.size(); }
  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return solver_y.solve(LX.matrix() * x); }
  Eigen::VectorXd apply_b(const Eigen::VectorXd& x) const { return LY.matrix() * x; }
};

inline Eigen::Index default_max_dim(Eigen::Index count, const EigenOptions& opt) {
  return opt.max_dim > 0 ? opt.max_dim : std::max<Eigen::Index>(50 * count, 300);
}

}  // namespace detail

/// The k smallest nonzero Laplacian eigenpairs of a connected graph.
inline EigenPairs smallest_eigenpairs(const LaplacianMatrix& L, Eigen::Index k,
                                      const EigenOptions& opt = {}) {
  const Eigen::Index n = L.size();
  if (k < 1 || k >= n) {
    throw ValidationError("smallest_eigenpairs: need 1 <= k < n (k = " + std::to_string(k) +
                          ", n = " + std::to_string(n) + ")");
  }
  if (!L.connected()) throw DisconnectedGraph("smallest_eigenpairs requires a connected graph");
  Rng rng = make_rng(opt.seed, "eigensolver");
  detail::LaplacianOperator op{L};
  auto r = detail::extremal_eigenpairs(op, k, detail::Which::kSmallest, opt.tol,
                                       detail::default_max_dim(k, opt), rng);
  if (r.values.size() < k) {
    throw NotConverged("smallest_eigenpairs: only " + std::to_string(r.values.size()) + " of " +
                       std::to_string(k) + " pairs converged");
  }
  EigenPairs out{r.values, r.vectors};
  for (Eigen::Index i = 0; i < k; ++i) {
    out.vectors.col(i).normalize();
    detail::fix_sign(out.vectors.col(i));
    const double resid = (L.matrix() * out.vectors.col(i) - out.values[i] * out.vectors.col(i)).norm();
    if (!(out.values[i] > 0.0) || resid > opt.tol * std::max(out.values[i], 1.0)) {
      throw NotConverged("smallest_eigenpairs: residual " + std::to_string(resid) +
                         " above tolerance for pair " + std::to_string(i));
    }
  }
  return out;
}

/// The s largest eigenpairs of the pencil L_X v = zeta L_Y v on the complement
/// of the shared nullspace, i.e. of L_Y^+ L_X.
inline GeneralizedSpectrum generalized_eigenpairs(const LaplacianMatrix& LX,
                                                  const LaplacianMatrix& LY, Eigen::Index s,
                                                  const EigenOptions& opt = {}) {
  if (LX.size() != LY.size()) {
    throw NodeSetMismatch("generalized_eigenpairs: Laplacians of size " +
                          std::to_string(LX.size()) + " and " + std::to_string(LY.size()));
  }
  const Eigen::Index n = LX.size();
  if (s < 1 || s > n - 1) {
    throw ValidationError("generalized_eigenpairs: need 1 <= s <= n - 1");
  }
  if (!LX.connected() || !LY.connected()) {
    throw DisconnectedGraph("generalized_eigenpairs requires connected graphs");
  }
  Rng rng = make_rng(opt.seed, "generalized-eigensolver");
  detail::PencilOperator op{LX, LY, LaplacianSolver(LY, std::min(1e-12, opt.tol * 1e-4))};
  auto r = detail::extremal_eigenpairs(op, s, detail::Which::kLargest, opt.tol,
                                       detail::default_max_dim(s, opt), rng);
  if (r.values.size() < s) {
    throw NotConverged("generalized_eigenpairs: only " + std::to_string(r.values.size()) +
                       " of " + std::to_string(s) + " pairs converged");
  }
  GeneralizedSpectrum out{r.values, r.vectors};
  for (Eigen::Index i = 0; i < s; ++i) {
    auto v = out.vectors.col(i);
    v.normalize();
    detail::fix_sign(v);
    // True residual in the norm the iteration controls:
    // ||L_Y^+ L_X v - zeta v||_{L_Y} / ||v||_{L_Y}.
    const Eigen::VectorXd r_vec = op.apply(v) - out.values[i] * v;
    const double vb = std::sqrt(v.dot(LY.matrix() * v));
    const double resid = std::sqrt(std::max(0.0, r_vec.dot(LY.matrix() * r_vec))) / vb;
    if (!(out.values[i] > 0.0) || resid > 10.0 * opt.tol * std::max(out.values[i], 1.0)) {
      throw NotConverged("generalized_eigenpairs: residual " + std::to_string(resid) +
                         " above tolerance for pair " + std::to_string(i));
    }
  }
  return out;
}

}  // namespace manistab
