#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "manistab/eigensolver.hpp"
#include "manistab/errors.hpp"
#include "manistab/graph.hpp"
#include "manistab/parallel.hpp"
#include "manistab/rng.hpp"

namespace manistab {

/// e_pq' L^+ e_pq from a prepared solver.
inline double exact_resistance(const LaplacianSolver& solver, NodeId p, NodeId q) {
  const Eigen::Index n = solver.laplacian().size();
  if (p < 0 || q < 0 || p >= n || q >= n) {
    throw IndexOutOfRange("exact_resistance: node id out of range");
  }
  if (p == q) throw ValidationError("exact_resistance: p and q must differ");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  b[p] = 1.0;
  b[q] = -1.0;
  const Eigen::VectorXd x = solver.solve(b);
  return x[p] - x[q];
}

/// e_pq' L^+ e_pq via one Laplacian solve.
inline double exact_resistance(const LaplacianMatrix& L, NodeId p, NodeId q, double tol = 1e-12) {
  const Eigen::Index n = L.size();
  if (p < 0 || q < 0 || p >= n || q >= n) {
    throw IndexOutOfRange("exact_resistance: node id out of range");
  }
  if (p == q) throw ValidationError("exact_resistance: p and q must differ");
  return exact_resistance(LaplacianSolver(L, tol), p, q);
}

inline double exact_resistance(const SparseGraph& g, NodeId p, NodeId q, double tol = 1e-12) {
  return exact_resistance(laplacian(g), p, q, tol);
}

/// Exact resistance of every edge, in edge order. Dense-ish graphs of moderate
/// size use one solve per node (columns of L^+); otherwise one solve per edge.
inline std::vector<double> exact_edge_resistances(const SparseGraph& g, double tol = 1e-12) {
  const auto L = laplacian(g);
  if (!L.connected()) throw DisconnectedGraph("exact_edge_resistances requires a connected graph");
  const LaplacianSolver solver(L, tol);
  const auto& edges = g.edges();
  const NodeId n = g.num_nodes();
  std::vector<double> r(edges.size());
  if (static_cast<NodeId>(edges.size()) >= n && n <= 4000) {
    Eigen::MatrixXd P(n, n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t j) {
      Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
      b[static_cast<Eigen::Index>(j)] = 1.0;
      P.col(static_cast<Eigen::Index>(j)) = solver.solve(b);
    });
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const auto& e = edges[i];
      r[i] = P(e.u, e.u) + P(e.v, e.v) - P(e.u, e.v) - P(e.v, e.u);
    }
  } else {
    parallel_for(edges.size(), [&](std::size_t i) {
      r[i] = exact_resistance(solver, edges[i].u, edges[i].v);
    });
  }
  return r;
}

/// Orthonormal basis of span(c, Ac, ..., A^{m-1}c) restricted to the
/// complement of the all-ones vector, A the weighted adjacency matrix. By
/// default the vectors are Ritz vectors of L on that span.
struct KrylovBasis {
  Eigen::MatrixXd vectors;  // n x m', m' <= m
  std::uint64_t seed = 0;
  bool collapsed = false;  // the sequence became dependent before reaching m

  Eigen::Index size() const { return vectors.cols(); }
};

/// Rotates an orthonormal basis X into the Ritz vectors of L on span(X), so
/// the columns stay orthonormal and become L-orthogonal as well. The per-vector
/// estimate sum_i (x_i' e)^2 / (x_i' L x_i) then equals e' X (X'LX)^+ X' e,
/// the Galerkin approximation of e' L^+ e on the subspace.
inline void ritz_rotate(const LaplacianMatrix& L, KrylovBasis& basis) {
  if (basis.size() == 0) return;
  const Eigen::MatrixXd LX = L.matrix() * basis.vectors;
  Eigen::MatrixXd H = basis.vectors.transpose() * LX;
  H = 0.5 * (H + H.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
  basis.vectors = (basis.vectors * es.eigenvectors()).eval();
}

inline KrylovBasis krylov_basis(const SparseGraph& g, Eigen::Index m, std::uint64_t seed,
                                bool ritz = true) {
  const NodeId n = g.num_nodes();
  if (n < 1) throw ValidationError("krylov_basis: empty graph");
  if (m < 1 || m > n) throw ValidationError("krylov_basis: need 1 <= m <= n");
  Rng rng = make_rng(seed, "krylov");
  std::uniform_int_distribution<int> coin(0, 1);
  const Eigen::SparseMatrix<double> A = g.adjacency();

  KrylovBasis out;
  out.seed = seed;
  out.vectors.resize(n, m);

  auto orthogonalize = [&](Eigen::VectorXd& w, Eigen::Index j) {
    for (int pass = 0; pass < 2; ++pass) {
      w = project_off_constant(std::move(w));
      if (j > 0) w -= out.vectors.leftCols(j) * (out.vectors.leftCols(j).transpose() * w);
    }
  };

  Eigen::VectorXd c(n);
  double cn = 0.0;
  for (int attempt = 0; attempt < 16 && cn < 1e-12; ++attempt) {
    for (NodeId i = 0; i < n; ++i) c[i] = coin(rng) ? 1.0 : -1.0;
    c = project_off_constant(std::move(c));
    cn = c.norm();
  }
  if (cn < 1e-12) {  // n = 1: nothing lives off the constant direction
    out.vectors.resize(n, 0);
    out.collapsed = true;
    return out;
  }
  out.vectors.col(0) = c / cn;

  for (Eigen::Index j = 1; j < m; ++j) {
    Eigen::VectorXd w = A * out.vectors.col(j - 1);
    const double before = std::max(w.norm(), 1.0);
    orthogonalize(w, j);
    const double nrm = w.norm();
    if (nrm < 1e-12 * before) {
      out.vectors.conservativeResize(n, j);
      out.collapsed = true;
      break;
    }
    out.vectors.col(j) = w / nrm;
  }
  if (ritz) ritz_rotate(laplacian(g), out);
  return out;
}

/// sum_i (x_i' e_pq)^2 / (x_i' L x_i) over the basis vectors, skipping
/// directions with a vanishing quadratic form.
class ResistanceEstimator {
 public:
  ResistanceEstimator(const SparseGraph& g, KrylovBasis basis)
      : basis_(std::move(basis)), inv_energy_(basis_.size()) {
    if (basis_.vectors.rows() != g.num_nodes()) {
      throw DimensionMismatch("ResistanceEstimator: basis dimension does not match graph");
    }
    const auto L = laplacian(g);
    for (Eigen::Index i = 0; i < basis_.size(); ++i) {
      const double e = quadratic_form(L, basis_.vectors.col(i));
      inv_energy_[i] = e < 1e-12 ? 0.0 : 1.0 / e;
    }
  }

  double operator()(NodeId p, NodeId q) const {
    const Eigen::Index n = basis_.vectors.rows();
    if (p < 0 || q < 0 || p >= n || q >= n) {
      throw IndexOutOfRange("estimate_resistance: node id out of range");
    }
    if (p == q) throw ValidationError("estimate_resistance: p and q must differ");
    const Eigen::VectorXd d = (basis_.vectors.row(p) - basis_.vectors.row(q)).transpose();
    return d.cwiseAbs2().dot(inv_energy_);
  }

  const KrylovBasis& basis() const { return basis_; }

 private:
  KrylovBasis basis_;
  Eigen::VectorXd inv_energy_;
};

inline double estimate_resistance(const SparseGraph& g, const KrylovBasis& basis, NodeId p,
                                  NodeId q) {
  return ResistanceEstimator(g, basis)(p, q);
}

/// Estimated resistance of every edge with one shared basis.
inline std::vector<double> estimate_edge_resistances(const SparseGraph& g, Eigen::Index m,
                                                     std::uint64_t seed) {
  ResistanceEstimator est(g, krylov_basis(g, std::min<Eigen::Index>(m, g.num_nodes()), seed));
  const auto& edges = g.edges();
  std::vector<double> r(edges.size());
  parallel_for(edges.size(), [&](std::size_t i) { r[i] = est(edges[i].u, edges[i].v); });
  return r;
}

/// Node weights eta at contraction level `level` (all zeros at level 0).
struct NodeWeights {
  std::vector<double> eta;
  int level = 0;
};

struct Contraction {
  NodeWeights weights;
  /// old id -> id at the next level; p and q both map to the supernode.
  std::vector<NodeId> remap;
  NodeId supernode = 0;
};

inline NodeWeights initial_node_weights(NodeId n) {
  return NodeWeights{std::vector<double>(static_cast<std::size_t>(n), 0.0), 0};
}

/// Contracts (p, q) into one supernode with eta = eta(p) + eta(q) + d_eff.
/// The supernode takes the smaller id; later ids shift down by one.
inline Contraction propagate_node_weights(const NodeWeights& w, NodeId p, NodeId q, double d_eff) {
  const auto n = static_cast<NodeId>(w.eta.size());
  if (p < 0 || q < 0 || p >= n || q >= n) {
    throw IndexOutOfRange("propagate_node_weights: unknown node id");
  }
  if (p == q) throw ValidationError("propagate_node_weights: cannot contract a node with itself");
  if (!(d_eff >= 0.0)) throw ValidationError("propagate_node_weights: d_eff must be >= 0");
  const NodeId lo = std::min(p, q), hi = std::max(p, q);
  Contraction c;
  c.supernode = lo;
  c.weights.level = w.level + 1;
  c.weights.eta.reserve(static_cast<std::size_t>(n - 1));
  c.remap.resize(static_cast<std::size_t>(n));
  for (NodeId i = 0; i < n; ++i) {
    if (i == hi) {
      c.remap[i] = lo;
      continue;
    }
    c.remap[i] = i < hi ? i : i - 1;
    c.weights.eta.push_back(i == lo ? w.eta[p] + w.eta[q] + d_eff : w.eta[i]);
  }
  return c;
}

}  // namespace manistab
