#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "manistab/errors.hpp"

namespace manistab {

using NodeId = Eigen::Index;

struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  double w = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Counters for input cleanup performed while building a graph.
struct IngestStats {
  std::size_t self_loops_dropped = 0;
  std::size_t parallel_edges_merged = 0;
};

/// Undirected weighted graph, immutable after construction.
///
/// Edges are canonical: u < v, sorted lexicographically, at most one per
/// unordered pair, weights finite and strictly positive. Adjacency is kept in
/// CSR form with both directions stored.
class SparseGraph {
 public:
  struct Neighbor {
    NodeId node;
    double weight;
    std::size_t edge;  // index into edges()
  };

  SparseGraph() = default;

  /// Self-loops are dropped and parallel edges merged by summing weights; both
  /// are counted in `stats` when given.
  SparseGraph(NodeId n_nodes, std::vector<Edge> edges, IngestStats* stats = nullptr)
      : n_(n_nodes) {
    if (n_nodes < 0) throw ValidationError("negative node count");
    IngestStats local;
    std::vector<Edge> clean;
    clean.reserve(edges.size());
    for (Edge e : edges) {
      if (e.u < 0 || e.v < 0 || e.u >= n_ || e.v >= n_) {
        throw IndexOutOfRange("edge endpoint out of range: (" + std::to_string(e.u) + ", " +
                              std::to_string(e.v) + ") with n = " + std::to_string(n_));
      }
      if (!std::isfinite(e.w) || e.w <= 0.0) {
        throw ValidationError("edge weight must be finite and positive");
      }
      if (e.u == e.v) {
        ++local.self_loops_dropped;
        continue;
      }
      if (e.u > e.v) std::swap(e.u, e.v);
      clean.push_back(e);
    }
    std::sort(clean.begin(), clean.end(), [](const Edge& a, const Edge& b) {
      return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    for (const Edge& e : clean) {
      if (!edges_.empty() && edges_.back().u == e.u && edges_.back().v == e.v) {
        edges_.back().w += e.w;
        ++local.parallel_edges_merged;
      } else {
        edges_.push_back(e);
      }
    }
    if (stats) *stats = local;
    build_adjacency();
  }

  NodeId num_nodes() const { return n_; }
  std::size_t num_edges() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }

  std::span<const Neighbor> neighbors(NodeId p) const {
    check_node(p);
    return {adj_.data() + offsets_[p], adj_.data() + offsets_[p + 1]};
  }

  std::size_t degree(NodeId p) const { return neighbors(p).size(); }

  double weighted_degree(NodeId p) const {
    double s = 0.0;
    for (const auto& nb : neighbors(p)) s += nb.weight;
    return s;
  }

  /// Index of edge {u, v} in edges(), if present.
  std::optional<std::size_t> find_edge(NodeId u, NodeId v) const {
    auto nbs = neighbors(u);
    check_node(v);
    auto it = std::lower_bound(nbs.begin(), nbs.end(), v,
                               [](const Neighbor& a, NodeId x) { return a.node < x; });
    if (it != nbs.end() && it->node == v) return it->edge;
    return std::nullopt;
  }

  Eigen::SparseMatrix<double> adjacency() const {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * edges_.size());
    for (const Edge& e : edges_) {
      trip.emplace_back(e.u, e.v, e.w);
      trip.emplace_back(e.v, e.u, e.w);
    }
    Eigen::SparseMatrix<double> a(n_, n_);
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
  }

  void check_node(NodeId p) const {
    if (p < 0 || p >= n_) {
      throw IndexOutOfRange("node id " + std::to_string(p) + " out of range [0, " +
                            std::to_string(n_) + ")");
    }
  }

 private:
  void build_adjacency() {
    offsets_.assign(static_cast<std::size_t>(n_) + 1, 0);
    for (const Edge& e : edges_) {
      ++offsets_[e.u + 1];
      ++offsets_[e.v + 1];
    }
    std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
    adj_.resize(2 * edges_.size());
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t i = 0; i < edges_.size(); ++i) {
      const Edge& e = edges_[i];
      adj_[fill[e.u]++] = {e.v, e.w, i};
      adj_[fill[e.v]++] = {e.u, e.w, i};
    }
    for (NodeId p = 0; p < n_; ++p) {
      std::sort(adj_.begin() + offsets_[p], adj_.begin() + offsets_[p + 1],
                [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
    }
  }

  NodeId n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Neighbor> adj_;
};

/// Partition of the node set; components ordered by their smallest node id,
/// node ids ascending inside each component.
inline std::vector<std::vector<NodeId>> connected_components(const SparseGraph& g) {
  const NodeId n = g.num_nodes();
  std::vector<NodeId> label(n, -1);
  std::vector<std::vector<NodeId>> comps;
  std::vector<NodeId> stack;
  for (NodeId s = 0; s < n; ++s) {
    if (label[s] >= 0) continue;
    const NodeId id = static_cast<NodeId>(comps.size());
    comps.emplace_back();
    label[s] = id;
    stack.push_back(s);
    while (!stack.empty()) {
      NodeId p = stack.back();
      stack.pop_back();
      comps.back().push_back(p);
      for (const auto& nb : g.neighbors(p)) {
        if (label[nb.node] < 0) {
          label[nb.node] = id;
          stack.push_back(nb.node);
        }
      }
    }
    std::sort(comps.back().begin(), comps.back().end());
  }
  return comps;
}

inline bool is_connected(const SparseGraph& g) {
  return g.num_nodes() > 0 && connected_components(g).size() == 1;
}

/// An induced subgraph plus the id maps between the parent and the subgraph.
struct Subgraph {
  SparseGraph graph;
  std::vector<NodeId> old_to_new;  // -1 for nodes outside the subgraph
  std::vector<NodeId> new_to_old;
};

/// `nodes` must be distinct; new ids follow the order of `nodes`.
inline Subgraph induced_subgraph(const SparseGraph& g, std::span<const NodeId> nodes) {
  Subgraph out;
  out.old_to_new.assign(g.num_nodes(), -1);
  out.new_to_old.assign(nodes.begin(), nodes.end());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    g.check_node(nodes[i]);
    if (out.old_to_new[nodes[i]] >= 0) throw ValidationError("duplicate node in subgraph");
    out.old_to_new[nodes[i]] = static_cast<NodeId>(i);
  }
  std::vector<Edge> edges;
  for (const Edge& e : g.edges()) {
    const NodeId a = out.old_to_new[e.u];
    const NodeId b = out.old_to_new[e.v];
    if (a >= 0 && b >= 0) edges.push_back({a, b, e.w});
  }
  out.graph = SparseGraph(static_cast<NodeId>(nodes.size()), std::move(edges));
  return out;
}

/// Largest connected component; ties go to the component with the smallest
/// minimum node id. Node order is preserved.
inline Subgraph largest_component(const SparseGraph& g) {
  if (g.num_nodes() == 0) throw ValidationError("largest_component of an empty graph");
  auto comps = connected_components(g);
  std::size_t best = 0;
  for (std::size_t i = 1; i < comps.size(); ++i) {
    if (comps[i].size() > comps[best].size()) best = i;
  }
  return induced_subgraph(g, comps[best]);
}

/// L = D - A of an undirected weighted graph.
class LaplacianMatrix {
 public:
  using Matrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

  LaplacianMatrix() = default;

  explicit LaplacianMatrix(const SparseGraph& g)
      : edges_(g.edges()), degrees_(Eigen::VectorXd::Zero(g.num_nodes())) {
    const NodeId n = g.num_nodes();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(2 * edges_.size() + n);
    for (const Edge& e : edges_) {
      trip.emplace_back(e.u, e.v, -e.w);
      trip.emplace_back(e.v, e.u, -e.w);
      degrees_[e.u] += e.w;
      degrees_[e.v] += e.w;
    }
    for (NodeId i = 0; i < n; ++i) trip.emplace_back(i, i, degrees_[i]);
    matrix_.resize(n, n);
    matrix_.setFromTriplets(trip.begin(), trip.end());
    matrix_.makeCompressed();
    connected_ = is_connected(g);
  }

  Eigen::Index size() const { return matrix_.rows(); }
  const Matrix& matrix() const { return matrix_; }
  const Eigen::VectorXd& degrees() const { return degrees_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool connected() const { return connected_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const {
    check_dim(x.size());
    return matrix_ * x;
  }

  void check_dim(Eigen::Index d) const {
    if (d != size()) {
      throw DimensionMismatch("vector of length " + std::to_string(d) +
                              " does not match Laplacian of size " + std::to_string(size()));
    }
  }

 private:
  Matrix matrix_;
  std::vector<Edge> edges_;
  Eigen::VectorXd degrees_;
  bool connected_ = false;
};

inline LaplacianMatrix laplacian(const SparseGraph& g) { return LaplacianMatrix(g); }

/// x'Lx as the weighted sum of squared edge differences, so it is never
/// negative even under rounding.
inline double quadratic_form(const LaplacianMatrix& L, const Eigen::VectorXd& x) {
  L.check_dim(x.size());
  double s = 0.0;
  for (const Edge& e : L.edges()) {
    const double d = x[e.u] - x[e.v];
    s += e.w * d * d;
  }
  return s;
}

/// Tr(X'LX), the total Laplacian smoothness of the columns of X.
inline double smoothness(const LaplacianMatrix& L, const Eigen::MatrixXd& X) {
  if (X.rows() != L.size()) {
    throw DimensionMismatch("signal matrix has " + std::to_string(X.rows()) + " rows, expected " +
                            std::to_string(L.size()));
  }
  double s = 0.0;
  for (const Edge& e : L.edges()) s += e.w * (X.row(e.u) - X.row(e.v)).squaredNorm();
  return s;
}

inline Eigen::VectorXd project_off_constant(Eigen::VectorXd x) {
  if (x.size() > 0) x.array() -= x.mean();
  return x;
}

// ---------------------------------------------------------------------------
// Edge-list text format: "u<TAB>v[<TAB>w]" per line, '#' comments, arbitrary
// non-negative ids remapped densely in ascending id order.

struct EdgeListFile {
  SparseGraph graph;
  std::vector<std::int64_t> original_ids;  // dense id -> id in the file
  IngestStats stats;
};

inline EdgeListFile read_edge_list(std::istream& in, const std::string& name = "<stream>") {
  struct Raw {
    std::int64_t u, v;
    double w;
  };
  std::vector<Raw> raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Raw r{0, 0, 1.0};
    if (!(ls >> r.u >> r.v)) {
      throw FormatError(name + ":" + std::to_string(lineno) + ": expected 'u v [w]'");
    }
    std::string wtok;
    if (ls >> wtok) {
      try {
        std::size_t used = 0;
        r.w = std::stod(wtok, &used);
        if (used != wtok.size()) throw std::invalid_argument(wtok);
      } catch (const std::exception&) {
        throw FormatError(name + ":" + std::to_string(lineno) + ": bad weight '" + wtok + "'");
      }
    }
    if (r.u < 0 || r.v < 0) {
      throw FormatError(name + ":" + std::to_string(lineno) + ": negative node id");
    }
    if (!std::isfinite(r.w) || r.w <= 0.0) {
      throw FormatError(name + ":" + std::to_string(lineno) + ": weight must be positive");
    }
    raw.push_back(r);
  }
  EdgeListFile out;
  for (const Raw& r : raw) {
    out.original_ids.push_back(r.u);
    out.original_ids.push_back(r.v);
  }
  std::sort(out.original_ids.begin(), out.original_ids.end());
  out.original_ids.erase(std::unique(out.original_ids.begin(), out.original_ids.end()),
                         out.original_ids.end());
  std::unordered_map<std::int64_t, NodeId> dense;
  dense.reserve(out.original_ids.size());
  for (std::size_t i = 0; i < out.original_ids.size(); ++i) {
    dense[out.original_ids[i]] = static_cast<NodeId>(i);
  }
  std::vector<Edge> edges;
  edges.reserve(raw.size());
  for (const Raw& r : raw) edges.push_back({dense[r.u], dense[r.v], r.w});
  out.graph = SparseGraph(static_cast<NodeId>(out.original_ids.size()), std::move(edges),
                          &out.stats);
  return out;
}

inline EdgeListFile read_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open edge list '" + path + "'");
  return read_edge_list(in, path);
}

/// Weights are printed with 17 significant digits so files round-trip exactly.
inline void write_edge_list(std::ostream& out, const SparseGraph& g,
                            std::span<const std::int64_t> ids = {}) {
  if (!ids.empty() && static_cast<NodeId>(ids.size()) != g.num_nodes()) {
    throw DimensionMismatch("id map size does not match node count");
  }
  auto id = [&](NodeId p) { return ids.empty() ? static_cast<std::int64_t>(p) : ids[p]; };
  out << std::setprecision(17);
  for (const Edge& e : g.edges()) out << id(e.u) << '\t' << id(e.v) << '\t' << e.w << '\n';
}

inline void write_edge_list(const std::string& path, const SparseGraph& g,
                            std::span<const std::int64_t> ids = {}) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  write_edge_list(out, g, ids);
}

}  // namespace manistab
