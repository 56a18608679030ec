#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <set>
#include <vector>

#include <Eigen/Dense>

#include "manistab/dense.hpp"
#include "manistab/embedding.hpp"
#include "manistab/errors.hpp"
#include "manistab/graph.hpp"
#include "manistab/parallel.hpp"
#include "manistab/resistance.hpp"

namespace manistab {

struct ManifoldConfig {
  int knn_k = 10;
  /// Budget for the accumulated resistance inside one cluster. Unset selects it
  /// automatically so that the cluster count approaches `target_clusters`.
  std::optional<double> resistance_diameter;
  /// Cluster count aimed at by the automatic diameter; unset means n / 50.
  std::optional<Eigen::Index> target_clusters;
  int krylov_m = 10;
  double rho_keep_threshold = 0.9;
  /// Graphs with fewer nodes use exact resistances instead of the estimator.
  NodeId exact_below = 500;
  std::uint64_t seed = 0;

  void validate() const {
    if (knn_k < 1) throw ValidationError("knn_k must be >= 1");
    if (resistance_diameter && !(*resistance_diameter > 0.0)) {
      throw ValidationError("resistance_diameter must be > 0");
    }
    if (!(rho_keep_threshold > 0.0 && rho_keep_threshold <= 1.0)) {
      throw ValidationError("rho_keep_threshold must lie in (0, 1]");
    }
    if (krylov_m < 1) throw ValidationError("krylov_m must be >= 1");
  }
};

/// A sparsified graph together with its low-resistance-diameter clustering.
struct Manifold {
  SparseGraph graph;
  std::vector<int> clusters;            // node -> cluster id
  std::vector<std::size_t> intra_edges;  // indices into graph.edges()
  std::vector<std::size_t> inter_edges;
  std::vector<double> rho;  // per edge of graph
  // Provenance.
  ManifoldConfig config;
  double diameter = 0.0;  // the diameter actually used
  bool exact_resistances = false;
  std::size_t dense_edges = 0;
  std::size_t bridges_added = 0;  // kNN components joined by nearest pairs

  int num_clusters() const {
    return clusters.empty() ? 0 : *std::max_element(clusters.begin(), clusters.end()) + 1;
  }
};

// ---------------------------------------------------------------------------
// kNN graph

struct KnnResult {
  SparseGraph graph;
  std::size_t bridges_added = 0;
};

namespace detail {

inline Eigen::MatrixXd pairwise_sq_distances(const Eigen::MatrixXd& X) {
  const Eigen::VectorXd sq = X.rowwise().squaredNorm();
  Eigen::MatrixXd D = -2.0 * X * X.transpose();
  D.colwise() += sq;
  D.rowwise() += sq.transpose();
  return D.cwiseMax(0.0);
}

struct DisjointSets {
  std::vector<NodeId> parent;
  explicit DisjointSets(NodeId n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), NodeId{0});
  }
  NodeId find(NodeId x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  /// Union keeping the smaller root id.
  NodeId unite(NodeId a, NodeId b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (b < a) std::swap(a, b);
    parent[b] = a;
    return a;
  }
};

}  // namespace detail

inline constexpr double kDistanceFloor = 1e-12;

/// x rounded to `digits` significant decimal digits.
inline double round_significant(double x, int digits) {
  if (x == 0.0 || !std::isfinite(x)) return x;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return std::strtod(buf, nullptr);
}

/// Symmetric kNN graph (an edge whenever either endpoint lists the other) with
/// w = 1 / max(||x_p - x_q||^2, 1e-12). Neighbour ties go to the smaller id.
/// If the result is disconnected, components are joined by their nearest
/// cross-component pairs so that the node set is preserved.
inline KnnResult knn_graph_detail(const Eigen::MatrixXd& rows, int knn_k) {
  const Eigen::Index n = rows.rows();
  if (n < 2) throw ValidationError("knn_graph: need at least 2 rows");
  if (knn_k < 1) throw ValidationError("knn_graph: k must be >= 1");
  if (!rows.allFinite()) throw ValidationError("knn_graph: rows contain NaN or Inf");
  const int k = static_cast<int>(std::min<Eigen::Index>(knn_k, n - 1));
  const Eigen::MatrixXd D = detail::pairwise_sq_distances(rows);
  auto exact_sq = [&](Eigen::Index p, Eigen::Index q) {
    return (rows.row(p) - rows.row(q)).squaredNorm();
  };

  std::vector<std::vector<NodeId>> nbrs(static_cast<std::size_t>(n));
  parallel_for(static_cast<std::size_t>(n), [&](std::size_t pi) {
    const auto p = static_cast<Eigen::Index>(pi);
    // Over-select with the Gram-based distances, then rank on exact ones.
    const int pool = std::min<int>(static_cast<int>(n - 1), 2 * k + 8);
    std::vector<NodeId> cand;
    cand.reserve(static_cast<std::size_t>(n - 1));
    for (Eigen::Index q = 0; q < n; ++q)
      if (q != p) cand.push_back(q);
    auto by_gram = [&](NodeId a, NodeId b) {
      return D(p, a) != D(p, b) ? D(p, a) < D(p, b) : a < b;
    };
    std::partial_sort(cand.begin(), cand.begin() + pool, cand.end(), by_gram);
    cand.resize(static_cast<std::size_t>(pool));
    std::vector<std::pair<double, NodeId>> ranked;
    for (NodeId q : cand) ranked.emplace_back(exact_sq(p, q), q);
    std::sort(ranked.begin(), ranked.end());
    for (int i = 0; i < k; ++i) nbrs[pi].push_back(ranked[i].second);
  });

  std::vector<Edge> edges;
  for (Eigen::Index p = 0; p < n; ++p) {
    for (NodeId q : nbrs[p]) {
      // Emit each unordered pair once: from the smaller id, or from the larger
      // one only when the smaller one does not list it.
      const bool mutual = std::find(nbrs[q].begin(), nbrs[q].end(), p) != nbrs[q].end();
      if (mutual && q < p) continue;
      edges.push_back({std::min(p, q), std::max(p, q), 1.0 / std::max(exact_sq(p, q), kDistanceFloor)});
    }
  }

  KnnResult out;
  out.graph = SparseGraph(n, edges);
  // Join components Boruvka-style by their nearest outside nodes.
  for (auto comps = connected_components(out.graph); comps.size() > 1;
       comps = connected_components(out.graph)) {
    std::vector<int> comp_of(static_cast<std::size_t>(n));
    for (std::size_t c = 0; c < comps.size(); ++c)
      for (NodeId v : comps[c]) comp_of[v] = static_cast<int>(c);
    std::set<std::pair<NodeId, NodeId>> round;  // two components may pick the same pair
    for (const auto& comp : comps) {
      double best = std::numeric_limits<double>::infinity();
      NodeId bp = -1, bq = -1;
      for (NodeId p : comp) {
        for (Eigen::Index q = 0; q < n; ++q) {
          if (comp_of[q] == comp_of[p]) continue;
          const double d = D(p, q);
          if (d < best || (d == best && std::minmax(p, q) < std::minmax(bp, bq))) {
            best = d;
            bp = p;
            bq = q;
          }
        }
      }
      if (!round.insert(std::minmax(bp, bq)).second) continue;
      edges.push_back({std::min(bp, bq), std::max(bp, bq),
                       1.0 / std::max(exact_sq(bp, bq), kDistanceFloor)});
      ++out.bridges_added;
    }
    out.graph = SparseGraph(n, edges);
  }
  return out;
}

inline SparseGraph knn_graph(const Eigen::MatrixXd& rows, int knn_k) {
  return knn_graph_detail(rows, knn_k).graph;
}

// ---------------------------------------------------------------------------
// Sampling ratios and LRD decomposition

/// rho_e = w_e * d_eff_e. Exact resistances give rho in (0, 1]; with estimates
/// pass clamp = true to cap at 1.
inline std::vector<double> edge_sampling_ratios(const SparseGraph& g,
                                                const std::vector<double>& resistances,
                                                bool clamp = false) {
  if (resistances.size() != g.num_edges()) {
    throw DimensionMismatch("edge_sampling_ratios: " + std::to_string(resistances.size()) +
                            " resistances for " + std::to_string(g.num_edges()) + " edges");
  }
  std::vector<double> rho(resistances.size());
  for (std::size_t i = 0; i < rho.size(); ++i) {
    rho[i] = g.edges()[i].w * resistances[i];
    if (clamp) rho[i] = std::min(rho[i], 1.0);
  }
  return rho;
}

struct Clustering {
  std::vector<int> labels;  // node -> cluster id, ids ordered by smallest member
  std::vector<double> eta;  // accumulated resistance per cluster
  int count = 0;
};

/// Greedy contraction: edges in order of (resistance, smaller endpoint, larger
/// endpoint); an edge between two clusters is contracted when
/// eta_a + eta_b + r stays within `diameter` (up to a 1e-12 relative slack).
inline Clustering lrd_decompose(const SparseGraph& g, const std::vector<double>& resistances,
                                double diameter) {
  const auto& edges = g.edges();
  if (resistances.size() != edges.size()) {
    throw DimensionMismatch("lrd_decompose: resistance count does not match edges");
  }
  // Sort keys are rounded to 12 significant digits so that solver noise in
  // equal resistances does not override the endpoint tie-break.
  std::vector<double> key(resistances.size());
  for (std::size_t i = 0; i < key.size(); ++i) key[i] = round_significant(resistances[i], 12);
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (key[a] != key[b]) return key[a] < key[b];
    return std::tie(edges[a].u, edges[a].v) < std::tie(edges[b].u, edges[b].v);
  });
  const double budget = diameter * (1.0 + 1e-12);
  const NodeId n = g.num_nodes();
  detail::DisjointSets ds(n);
  std::vector<double> eta(static_cast<std::size_t>(n), 0.0);
  for (std::size_t i : order) {
    const NodeId a = ds.find(edges[i].u), b = ds.find(edges[i].v);
    if (a == b) continue;
    const double merged = eta[a] + eta[b] + resistances[i];
    if (merged <= budget) eta[ds.unite(a, b)] = merged;
  }
  Clustering c;
  c.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> root_label(static_cast<std::size_t>(n), -1);
  for (NodeId v = 0; v < n; ++v) {
    const NodeId r = ds.find(v);
    if (root_label[r] < 0) {
      root_label[r] = c.count++;
      c.eta.push_back(eta[r]);
    }
    c.labels[v] = root_label[r];
  }
  return c;
}

/// Diameter whose clustering is closest to `target` clusters, by bisection on
/// log(diameter). Ties prefer the smaller diameter.
inline double auto_diameter(const SparseGraph& g, const std::vector<double>& resistances,
                            Eigen::Index target) {
  target = std::clamp<Eigen::Index>(target, 1, g.num_nodes());
  double rmin = std::numeric_limits<double>::infinity(), rsum = 0.0;
  for (double r : resistances) {
    rmin = std::min(rmin, r);
    rsum += r;
  }
  if (resistances.empty()) return 1.0;
  double lo = std::log(std::max(rmin, 1e-300) * 0.5), hi = std::log(std::max(rsum, 1e-300) * 2.0);
  double best_d = std::exp(hi);
  Eigen::Index best_gap = std::numeric_limits<Eigen::Index>::max();
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double d = std::exp(mid);
    const Eigen::Index count = lrd_decompose(g, resistances, d).count;
    const Eigen::Index gap = std::abs(count - target);
    if (gap < best_gap || (gap == best_gap && d < best_d)) {
      best_gap = gap;
      best_d = d;
    }
    if (count == target) break;
    if (count > target) lo = mid; else hi = mid;
  }
  return best_d;
}

/// Intra-cluster edges kept: a minimum spanning forest of the intra-cluster
/// edges under length = resistance (one tree per cluster), plus every
/// intra-cluster edge with rho >= threshold. Returns a keep flag per edge.
inline std::vector<bool> cluster_backbone(const SparseGraph& g, const std::vector<int>& labels,
                                          const std::vector<double>& resistances,
                                          const std::vector<double>& rho, double threshold) {
  const auto& edges = g.edges();
  std::vector<std::size_t> intra;
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (labels[edges[i].u] == labels[edges[i].v]) intra.push_back(i);
  std::stable_sort(intra.begin(), intra.end(),
                   [&](std::size_t a, std::size_t b) { return resistances[a] < resistances[b]; });
  std::vector<bool> keep(edges.size(), false);
  detail::DisjointSets ds(g.num_nodes());
  for (std::size_t i : intra) {
    if (ds.find(edges[i].u) != ds.find(edges[i].v)) {
      ds.unite(edges[i].u, edges[i].v);
      keep[i] = true;
    }
    if (rho[i] >= threshold) keep[i] = true;
  }
  return keep;
}

/// Resistances of all edges: exact below cfg.exact_below nodes, else the
/// Krylov estimator with cfg.krylov_m vectors.
inline std::vector<double> manifold_edge_resistances(const SparseGraph& g,
                                                     const ManifoldConfig& cfg, bool* exact) {
  const bool use_exact = g.num_nodes() < cfg.exact_below;
  if (exact) *exact = use_exact;
  return use_exact ? exact_edge_resistances(g)
                   : estimate_edge_resistances(g, cfg.krylov_m, stream_seed(cfg.seed, "krylov"));
}

/// Resistance estimation, LRD decomposition, per-cluster backbones, and all
/// inter-cluster edges. Retained edges keep their weights.
inline Manifold sparsify(const SparseGraph& dense, const ManifoldConfig& cfg) {
  cfg.validate();
  if (!is_connected(dense)) throw DisconnectedGraph("sparsify requires a connected graph");
  Manifold m;
  m.config = cfg;
  m.dense_edges = dense.num_edges();
  const auto r = manifold_edge_resistances(dense, cfg, &m.exact_resistances);
  const auto rho = edge_sampling_ratios(dense, r, !m.exact_resistances);
  const NodeId n = dense.num_nodes();
  m.diameter = cfg.resistance_diameter
                   ? *cfg.resistance_diameter
                   : auto_diameter(dense, r, cfg.target_clusters.value_or(std::max<NodeId>(1, n / 50)));
  const Clustering cl = lrd_decompose(dense, r, m.diameter);
  m.clusters = cl.labels;
  const auto keep = cluster_backbone(dense, cl.labels, r, rho, cfg.rho_keep_threshold);

  std::vector<Edge> kept;
  for (std::size_t i = 0; i < dense.num_edges(); ++i) {
    const Edge& e = dense.edges()[i];
    const bool inter = cl.labels[e.u] != cl.labels[e.v];
    if (!inter && !keep[i]) continue;
    (inter ? m.inter_edges : m.intra_edges).push_back(kept.size());
    kept.push_back(e);
    m.rho.push_back(rho[i]);
  }
  m.graph = SparseGraph(n, std::move(kept));  // canonical order is preserved
  return m;
}

// ---------------------------------------------------------------------------
// Diagnostics

/// F = logdet(L + I/sigma^2) - (1/k) Tr(X' (L + I/sigma^2) X), k = X.cols().
inline double pgm_objective(const LaplacianMatrix& L, const Eigen::MatrixXd& X, double sigma = 1e3,
                            Eigen::Index cap = kDefaultOracleCap) {
  if (X.rows() != L.size()) throw DimensionMismatch("pgm_objective: X rows do not match L");
  if (!(sigma > 0.0)) throw ValidationError("pgm_objective: sigma must be > 0");
  Eigen::MatrixXd theta = dense_laplacian(L, cap);
  theta.diagonal().array() += 1.0 / (sigma * sigma);
  const double trace = X.cols() == 0 ? 0.0
                                     : (smoothness(L, X) + X.squaredNorm() / (sigma * sigma)) /
                                           static_cast<double>(X.cols());
  return logdet_spd(theta) - trace;
}

// ---------------------------------------------------------------------------
// Builders

struct InputManifoldConfig {
  Eigen::Index embed_k = 50;
  ManifoldConfig manifold;
  EigenOptions eigen;
};

struct InputManifold {
  Manifold manifold;
  EmbeddingMatrix embedding;
  Eigen::MatrixXd rows;  // augmented rows the kNN graph was built on
};

/// Spectral embedding, feature augmentation, kNN graph, sparsification.
inline InputManifold build_input_manifold(const SparseGraph& g, const Eigen::MatrixXd& X,
                                          const InputManifoldConfig& cfg) {
  if (!is_connected(g)) throw DisconnectedGraph("build_input_manifold requires a connected graph");
  if (X.cols() > 0 && X.rows() != g.num_nodes()) {
    throw DimensionMismatch("build_input_manifold: features have " + std::to_string(X.rows()) +
                            " rows for " + std::to_string(g.num_nodes()) + " nodes");
  }
  InputManifold out;
  const Eigen::Index k = std::min<Eigen::Index>(cfg.embed_k, g.num_nodes() - 1);
  EigenOptions eo = cfg.eigen;
  eo.seed = stream_seed(cfg.manifold.seed, "eigensolver");
  out.embedding = spectral_embed(g, k, eo);
  out.rows = augment_features(out.embedding, X);
  const auto knn = knn_graph_detail(out.rows, cfg.manifold.knn_k);
  out.manifold = sparsify(knn.graph, cfg.manifold);
  out.manifold.bridges_added = knn.bridges_added;
  return out;
}

inline Manifold build_output_manifold(const Eigen::MatrixXd& Y, const ManifoldConfig& cfg) {
  const auto knn = knn_graph_detail(Y, cfg.knn_k);
  Manifold m = sparsify(knn.graph, cfg);
  m.bridges_added = knn.bridges_added;
  return m;
}

}  // namespace manistab
