#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "manistab/eigensolver.hpp"
#include "manistab/errors.hpp"
#include "manistab/graph.hpp"
#include "manistab/parallel.hpp"
#include "manistab/resistance.hpp"
#include "manistab/rng.hpp"

namespace manistab {

/// Weighted spectral embedding U_k: column i is u_i / sqrt(lambda_i).
struct EmbeddingMatrix {
  Eigen::MatrixXd U;
  Eigen::VectorXd eigenvalues;

  Eigen::Index rows() const { return U.rows(); }
  Eigen::Index dim() const { return U.cols(); }
};

inline EmbeddingMatrix spectral_embed(const SparseGraph& g, Eigen::Index k,
                                      const EigenOptions& opt = {}) {
  const auto ep = smallest_eigenpairs(laplacian(g), k, opt);
  EmbeddingMatrix out{ep.vectors, ep.values};
  for (Eigen::Index i = 0; i < k; ++i) out.U.col(i) /= std::sqrt(ep.values[i]);
  return out;
}

/// ||U' (e_p - e_q)||^2, which approximates the effective resistance and equals
/// it when k = n - 1.
inline double approx_resistance(const EmbeddingMatrix& emb, NodeId p, NodeId q) {
  const Eigen::Index n = emb.rows();
  if (p < 0 || q < 0 || p >= n || q >= n) {
    throw IndexOutOfRange("approx_resistance: node id out of range");
  }
  if (p == q) throw ValidationError("approx_resistance: p and q must differ");
  return (emb.U.row(p) - emb.U.row(q)).squaredNorm();
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw ValidationError("pearson: need two equal-length samples of size >= 2");
  }
  const auto n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return saa == sbb ? 1.0 : 0.0;
  return sab / std::sqrt(saa * sbb);
}

/// Distinct unordered node pairs drawn uniformly without replacement.
inline std::vector<std::pair<NodeId, NodeId>> sample_pairs(NodeId n, std::size_t count, Rng& rng) {
  const double total = 0.5 * static_cast<double>(n) * static_cast<double>(n - 1);
  if (static_cast<double>(count) > total) {
    throw ValidationError("sample_pairs: requested more pairs than exist");
  }
  std::uniform_int_distribution<NodeId> pick(0, n - 1);
  std::vector<std::pair<NodeId, NodeId>> out;
  std::vector<std::pair<NodeId, NodeId>> seen;
  out.reserve(count);
  while (out.size() < count) {
    NodeId p = pick(rng), q = pick(rng);
    if (p == q) continue;
    if (p > q) std::swap(p, q);
    const std::pair<NodeId, NodeId> key{p, q};
    auto it = std::lower_bound(seen.begin(), seen.end(), key);
    if (it != seen.end() && *it == key) continue;
    seen.insert(it, key);
    out.push_back(key);
  }
  return out;
}

struct ResistanceCorrelation {
  double cc = 0.0;
  std::vector<std::pair<NodeId, NodeId>> pairs;
  std::vector<double> exact;
  std::vector<double> approx;
};

/// Pearson correlation between exact resistances and embedding distances over
/// `n_pairs` random distinct pairs.
inline ResistanceCorrelation resistance_correlation_detail(const SparseGraph& g,
                                                           const EmbeddingMatrix& emb,
                                                           std::size_t n_pairs,
                                                           std::uint64_t seed) {
  if (emb.rows() != g.num_nodes()) {
    throw DimensionMismatch("resistance_correlation: embedding rows do not match graph");
  }
  Rng rng = make_rng(seed, "pairs");
  ResistanceCorrelation out;
  out.pairs = sample_pairs(g.num_nodes(), n_pairs, rng);
  const auto L = laplacian(g);
  const LaplacianSolver solver(L);
  out.exact.resize(n_pairs);
  out.approx.resize(n_pairs);
  parallel_for(n_pairs, [&](std::size_t i) {
    const auto [p, q] = out.pairs[i];
    out.exact[i] = exact_resistance(solver, p, q);
    out.approx[i] = approx_resistance(emb, p, q);
  });
  out.cc = pearson(out.exact, out.approx);
  return out;
}

inline double resistance_correlation(const SparseGraph& g, const EmbeddingMatrix& emb,
                                     std::size_t n_pairs, std::uint64_t seed) {
  return resistance_correlation_detail(g, emb, n_pairs, seed).cc;
}

/// Consecutive eigenvalue ratios as a proxy for the eigengap.
struct EigengapReport {
  Eigen::VectorXd eigenvalues;  // lambda_1 .. lambda_{k+1}
  Eigen::VectorXd ratios;       // ratios[i] = lambda_{i+2} / lambda_{i+1}, i.e. for k = i + 1
  Eigen::Index suggested_k = 1;
  std::optional<Eigen::Index> heuristic_k;  // 10 * classes
};

inline Eigen::Index heuristic_dimension(Eigen::Index n_classes) { return 10 * n_classes; }

/// Builds the report from precomputed ascending nonzero eigenvalues. The
/// suggested k maximizes lambda_{k+1}/lambda_k; ties go to the smaller k.
inline EigengapReport eigengap_from_values(const Eigen::VectorXd& values,
                                           std::optional<Eigen::Index> n_classes = {}) {
  EigengapReport r;
  r.eigenvalues = values;
  const Eigen::Index m = values.size();
  r.ratios.resize(std::max<Eigen::Index>(m - 1, 0));
  for (Eigen::Index i = 0; i + 1 < m; ++i) r.ratios[i] = values[i + 1] / values[i];
  double best = -1.0;
  for (Eigen::Index i = 0; i < r.ratios.size(); ++i) {
    // Relative slack so that rounding noise in a flat spectrum does not pick a later index.
    if (r.ratios[i] > best * (1.0 + 1e-9)) {
      best = r.ratios[i];
      r.suggested_k = i + 1;
    }
  }
  if (n_classes) r.heuristic_k = heuristic_dimension(*n_classes);
  return r;
}

/// Computes lambda_1 .. lambda_{k_max+1} (clamped to the n - 1 nonzero values)
/// and reports the largest consecutive ratio.
inline EigengapReport eigengap_report(const SparseGraph& g, Eigen::Index k_max,
                                      std::optional<Eigen::Index> n_classes = {},
                                      const EigenOptions& opt = {}) {
  const Eigen::Index n = g.num_nodes();
  if (k_max < 1 || k_max >= n) throw ValidationError("eigengap_report: need 1 <= k_max < n");
  const Eigen::Index count = std::min(k_max + 1, n - 1);
  const auto ep = smallest_eigenpairs(laplacian(g), count, opt);
  return eigengap_from_values(ep.values, n_classes);
}

/// [U_k, X] with both blocks rescaled so that ||B||_F^2 / n = 1. X columns are
/// centered first so constant features carry no distance information.
inline Eigen::MatrixXd augment_features(const EmbeddingMatrix& emb, const Eigen::MatrixXd& X) {
  const Eigen::Index n = emb.rows();
  if (X.rows() != n && X.cols() > 0) {
    throw DimensionMismatch("augment_features: feature rows " + std::to_string(X.rows()) +
                            " != embedding rows " + std::to_string(n));
  }
  if (!X.allFinite()) throw ValidationError("augment_features: features contain NaN or Inf");
  auto unit_block = [n](Eigen::MatrixXd B) {
    const double f2 = B.squaredNorm();
    if (f2 > 0.0) B *= std::sqrt(static_cast<double>(n) / f2);
    return B;
  };
  Eigen::MatrixXd out(n, emb.dim() + X.cols());
  out.leftCols(emb.dim()) = unit_block(emb.U);
  if (X.cols() > 0) {
    Eigen::MatrixXd Xc = X.rowwise() - X.colwise().mean();
    out.rightCols(X.cols()) = unit_block(std::move(Xc));
  }
  return out;
}

}  // namespace manistab
