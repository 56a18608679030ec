#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "manistab/eigensolver.hpp"
#include "manistab/embedding.hpp"
#include "manistab/errors.hpp"
#include "manistab/graph.hpp"
#include "manistab/manifold.hpp"
#include "manistab/parallel.hpp"
#include "manistab/resistance.hpp"
#include "manistab/rng.hpp"

namespace manistab {

namespace detail {

inline void check_same_nodes(const SparseGraph& gx, const SparseGraph& gy, const char* what) {
  if (gx.num_nodes() != gy.num_nodes()) {
    throw NodeSetMismatch(std::string(what) + ": manifolds have " + std::to_string(gx.num_nodes()) +
                          " and " + std::to_string(gy.num_nodes()) + " nodes");
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Distance mapping distortion

/// Evaluates d_Y(p,q) / d_X(p,q) for many pairs with one factorization per
/// manifold.
class DmdEvaluator {
 public:
  DmdEvaluator(const SparseGraph& gx, const SparseGraph& gy)
      : lx_(laplacian(gx)), ly_(laplacian(gy)), sx_(lx_), sy_(ly_) {
    detail::check_same_nodes(gx, gy, "dmd");
  }

  double operator()(NodeId p, NodeId q) const {
    return exact_resistance(sy_, p, q) / exact_resistance(sx_, p, q);
  }

  NodeId size() const { return lx_.size(); }

 private:
  LaplacianMatrix lx_, ly_;
  LaplacianSolver sx_, sy_;
};

/// delta(p, q) = d^eff_Y(p, q) / d^eff_X(p, q) with exact solves.
inline double dmd_pair(const SparseGraph& gx, const SparseGraph& gy, NodeId p, NodeId q) {
  return DmdEvaluator(gx, gy)(p, q);
}

inline double dmd_pair(const Manifold& mx, const Manifold& my, NodeId p, NodeId q) {
  return dmd_pair(mx.graph, my.graph, p, q);
}

struct DmdMax {
  double value = 0.0;
  NodeId p = -1, q = -1;
  bool exhaustive = true;
  std::size_t pairs = 0;
};

/// Largest delta over all pairs when n < exhaustive_below, else over
/// `samples` random distinct pairs (stream "dmd-pairs").
inline DmdMax dmd_max(const SparseGraph& gx, const SparseGraph& gy, std::uint64_t seed = 0,
                      NodeId exhaustive_below = 2000, std::size_t samples = 100000) {
  detail::check_same_nodes(gx, gy, "dmd_max");
  const NodeId n = gx.num_nodes();
  if (n < 2) throw ValidationError("dmd_max: need at least two nodes");
  DmdMax out;
  auto consider = [&](double d, NodeId p, NodeId q) {
    if (d > out.value) {
      out.value = d;
      out.p = p;
      out.q = q;
    }
  };
  if (n < exhaustive_below) {
    // Columns of both pseudoinverses, then every pair.
    const auto lx = laplacian(gx);
    const auto ly = laplacian(gy);
    const LaplacianSolver sx(lx), sy(ly);
    Eigen::MatrixXd PX(n, n), PY(n, n);
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t j) {
      Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
      b[static_cast<Eigen::Index>(j)] = 1.0;
      PX.col(static_cast<Eigen::Index>(j)) = sx.solve(b);
      PY.col(static_cast<Eigen::Index>(j)) = sy.solve(b);
    });
    for (NodeId p = 0; p < n; ++p)
      for (NodeId q = p + 1; q < n; ++q)
        consider(dense_resistance(PY, p, q) / dense_resistance(PX, p, q), p, q);
    out.exhaustive = true;
    out.pairs = static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2;
    return out;
  }
  const DmdEvaluator dmd(gx, gy);
  Rng rng = make_rng(seed, "dmd-pairs");
  const std::size_t total = static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2;
  const auto pairs = sample_pairs(n, std::min(samples, total), rng);
  std::vector<double> vals(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) { vals[i] = dmd(pairs[i].first, pairs[i].second); });
  for (std::size_t i = 0; i < pairs.size(); ++i) consider(vals[i], pairs[i].first, pairs[i].second);
  out.exhaustive = false;
  out.pairs = pairs.size();
  return out;
}

// ---------------------------------------------------------------------------
// Weighted eigensubspace and stability scores

/// V_s = [v_1 sqrt(zeta_1), ..., v_s sqrt(zeta_s)].
inline Eigen::MatrixXd eigensubspace(const GeneralizedSpectrum& spectrum) {
  if (spectrum.vectors.cols() != spectrum.values.size()) {
    throw DimensionMismatch("eigensubspace: vector and value counts differ");
  }
  if ((spectrum.values.array() < 0.0).any()) throw ValidationError("eigensubspace: negative eigenvalue");
  return spectrum.vectors * spectrum.values.cwiseSqrt().asDiagonal();
}

/// ||V_s' e_pq||^2, the squared embedding distance of p and q.
inline double edge_stability(const Eigen::MatrixXd& Vs, NodeId p, NodeId q) {
  if (p < 0 || q < 0 || p >= Vs.rows() || q >= Vs.rows()) {
    throw IndexOutOfRange("edge_stability: node id out of range");
  }
  if (p == q) throw ValidationError("edge_stability: p and q must differ");
  return (Vs.row(p) - Vs.row(q)).squaredNorm();
}

/// Mean edge stability over the neighbours of p in G_X.
inline double node_score(const Eigen::MatrixXd& Vs, const SparseGraph& gx, NodeId p) {
  gx.check_node(p);
  if (Vs.rows() != gx.num_nodes()) throw DimensionMismatch("node_score: V_s rows do not match G_X");
  const auto nbs = gx.neighbors(p);
  if (nbs.empty()) throw IsolatedNode("node_score: node " + std::to_string(p) + " has no neighbours");
  double s = 0.0;
  for (const auto& nb : nbs) s += edge_stability(Vs, p, nb.node);
  return s / static_cast<double>(nbs.size());
}

inline double node_score(const Eigen::MatrixXd& Vs, const Manifold& mx, NodeId p) {
  return node_score(Vs, mx.graph, p);
}

struct StabilityScores {
  Eigen::VectorXd node;     // +inf for nodes isolated in G_X
  std::vector<double> edge;  // per edge of G_X, in edge order
  GeneralizedSpectrum spectrum;
  Eigen::MatrixXd Vs;
  Eigen::Index s = 0;
};

/// Top-s generalized eigenpairs of (L_X, L_Y), V_s, and edge and node scores.
inline StabilityScores stability_scores(const SparseGraph& gx, const SparseGraph& gy,
                                        Eigen::Index s, const EigenOptions& opt = {}) {
  detail::check_same_nodes(gx, gy, "stability_scores");
  const NodeId n = gx.num_nodes();
  StabilityScores out;
  out.s = std::min<Eigen::Index>(s, n - 1);
  out.spectrum = generalized_eigenpairs(laplacian(gx), laplacian(gy), out.s, opt);
  out.Vs = eigensubspace(out.spectrum);
  out.edge.resize(gx.num_edges());
  parallel_for(gx.num_edges(), [&](std::size_t i) {
    out.edge[i] = edge_stability(out.Vs, gx.edges()[i].u, gx.edges()[i].v);
  });
  out.node.resize(n);
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t i) {
    const auto p = static_cast<NodeId>(i);
    out.node[p] = gx.degree(p) == 0 ? std::numeric_limits<double>::infinity()
                                    : node_score(out.Vs, gx, p);
  });
  return out;
}

inline StabilityScores stability_scores(const Manifold& mx, const Manifold& my, Eigen::Index s,
                                        const EigenOptions& opt = {}) {
  return stability_scores(mx.graph, my.graph, s, opt);
}

// ---------------------------------------------------------------------------
// Ranking

struct StabilityReport {
  std::vector<NodeId> ranking;   // descending score, ties by node id; finite scores only
  std::vector<NodeId> excluded;  // nodes with a non-finite score
  std::vector<NodeId> unstable;  // top of the ranking, most unstable first
  std::vector<NodeId> stable;    // bottom of the ranking, most stable first
  std::vector<NodeId> rank;      // node -> position in ranking, -1 if excluded
  Eigen::VectorXd scores;
  double fraction = 0.01;
};

/// Number of nodes in a fraction of m ranked nodes; never more than half, so
/// the stable and unstable sets stay disjoint.
inline std::size_t fraction_count(double fraction, std::size_t m) {
  const auto c = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(m) - 1e-9));
  return std::min(c, m / 2);
}

inline StabilityReport rank_and_select(const Eigen::VectorXd& scores, double fraction = 0.01) {
  if (!(fraction > 0.0 && fraction <= 0.5)) {
    throw ValidationError("rank_and_select: fraction must lie in (0, 0.5]");
  }
  StabilityReport rep;
  rep.scores = scores;
  rep.fraction = fraction;
  const NodeId n = scores.size();
  for (NodeId p = 0; p < n; ++p) (std::isfinite(scores[p]) ? rep.ranking : rep.excluded).push_back(p);
  std::stable_sort(rep.ranking.begin(), rep.ranking.end(),
                   [&](NodeId a, NodeId b) { return scores[a] > scores[b]; });
  rep.rank.assign(static_cast<std::size_t>(n), -1);
  for (std::size_t i = 0; i < rep.ranking.size(); ++i) rep.rank[rep.ranking[i]] = static_cast<NodeId>(i);
  const std::size_t c = fraction_count(fraction, rep.ranking.size());
  rep.unstable.assign(rep.ranking.begin(), rep.ranking.begin() + static_cast<std::ptrdiff_t>(c));
  rep.stable.assign(rep.ranking.rbegin(), rep.ranking.rbegin() + static_cast<std::ptrdiff_t>(c));
  return rep;
}

/// Nodes strictly between the stable and unstable sets, in ranking order.
inline std::vector<NodeId> middle_segment(const StabilityReport& rep) {
  const std::size_t c = rep.unstable.size();
  return {rep.ranking.begin() + static_cast<std::ptrdiff_t>(c),
          rep.ranking.end() - static_cast<std::ptrdiff_t>(rep.stable.size())};
}

/// Splits the ranking into consecutive segments sized by `fractions` (summing
/// to 1), ordered from most stable to most unstable; e.g. {0.2, 0.6, 0.2}.
inline std::vector<std::vector<NodeId>> split_segments(const StabilityReport& rep,
                                                       const std::vector<double>& fractions) {
  if (fractions.empty()) throw ValidationError("split_segments: empty fraction list");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ValidationError("split_segments: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("split_segments: fractions must sum to 1");
  const std::size_t m = rep.ranking.size();
  std::vector<std::vector<NodeId>> out;
  double cum = 0.0;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    cum += fractions[i];
    const std::size_t hi = i + 1 == fractions.size()
                               ? m
                               : static_cast<std::size_t>(std::llround(cum * static_cast<double>(m)));
    std::vector<NodeId> seg;
    for (std::size_t j = lo; j < hi; ++j) seg.push_back(rep.ranking[m - 1 - j]);
    out.push_back(std::move(seg));
    lo = hi;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics

/// Total weight of edges with exactly one endpoint in S.
inline double cut_weight(const SparseGraph& g, const std::vector<char>& in_s) {
  double c = 0.0;
  for (const Edge& e : g.edges())
    if (in_s[e.u] != in_s[e.v]) c += e.w;
  return c;
}

/// zeta(S) = cut_Y(S, S') / cut_X(S, S') with weighted cuts.
inline double cmd(const SparseGraph& gx, const SparseGraph& gy, std::span<const NodeId> S) {
  detail::check_same_nodes(gx, gy, "cmd");
  const NodeId n = gx.num_nodes();
  std::vector<char> in_s(static_cast<std::size_t>(n), 0);
  std::size_t count = 0;
  for (NodeId p : S) {
    gx.check_node(p);
    if (!in_s[p]) ++count;
    in_s[p] = 1;
  }
  if (count == 0 || count == static_cast<std::size_t>(n)) {
    throw ValidationError("cmd: S must be a nonempty proper subset");
  }
  const double cx = cut_weight(gx, in_s);
  if (!(cx > 0.0)) throw ZeroCut("cmd: S has no crossing edges in G_X");
  return cut_weight(gy, in_s) / cx;
}

inline double cmd(const Manifold& mx, const Manifold& my, std::span<const NodeId> S) {
  return cmd(mx.graph, my.graph, S);
}

/// zeta_1 = lambda_max(L_Y^+ L_X), an upper bound on the best Lipschitz
/// constant and on every delta(p, q).
inline double lipschitz_bound(const GeneralizedSpectrum& spectrum) {
  if (spectrum.values.size() == 0) throw ValidationError("lipschitz_bound: empty spectrum");
  return spectrum.values.maxCoeff();
}

}  // namespace manistab
