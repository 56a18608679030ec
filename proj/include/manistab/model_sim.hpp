#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "manistab/errors.hpp"
#include "manistab/graph.hpp"
#include "manistab/io.hpp"
#include "manistab/parallel.hpp"
#include "manistab/rng.hpp"

namespace manistab {

/// Entries are clamped to this floor (then rows renormalized) before KLD.
inline constexpr double kProbabilityFloor = 1e-9;

/// Post-softmax outputs: nonnegative rows summing to one, entries >= floor.
struct ModelOutputs {
  Eigen::MatrixXd Y;

  Eigen::Index rows() const { return Y.rows(); }
  Eigen::Index classes() const { return Y.cols(); }
};

/// Validates a probability matrix: rows must be nonnegative and sum to one
/// within 1%. Entries are clamped to the floor and rows renormalized.
inline ModelOutputs make_outputs(Eigen::MatrixXd Y, const std::string& name = "outputs") {
  if (Y.rows() == 0 || Y.cols() == 0) throw DimensionMismatch(name + ": empty output matrix");
  if (!Y.allFinite()) throw ValidationError(name + ": non-finite entry");
  for (Eigen::Index i = 0; i < Y.rows(); ++i) {
    if ((Y.row(i).array() < 0.0).any()) {
      throw NegativeEntry(name + ": negative entry in row " + std::to_string(i));
    }
    const double s = Y.row(i).sum();
    if (std::abs(s - 1.0) > 0.01) {
      throw NotADistribution(name + ": row " + std::to_string(i) + " sums to " + std::to_string(s));
    }
  }
  Y = Y.cwiseMax(kProbabilityFloor);
  Y.array().colwise() /= Y.rowwise().sum().array();
  return {std::move(Y)};
}

/// Reads a CSV or SGMX matrix of post-softmax rows.
inline ModelOutputs load_outputs(const std::string& path, Eigen::Index expected_rows = -1) {
  Eigen::MatrixXd Y = read_matrix(path);
  if (expected_rows >= 0 && Y.rows() != expected_rows) {
    throw DimensionMismatch(path + ": " + std::to_string(Y.rows()) + " rows, expected " +
                            std::to_string(expected_rows));
  }
  return make_outputs(std::move(Y), path);
}

// ---------------------------------------------------------------------------
// Surrogate model: softmax(A_hat relu(A_hat X W1) W2)

struct SurrogateParams {
  int hidden = 32;
  /// Multiplies both weight matrices; larger values give sharper outputs.
  double gain = 1.0;
};

struct SurrogateWeights {
  Eigen::MatrixXd W1;  // d x hidden
  Eigen::MatrixXd W2;  // hidden x classes
};

/// He-scaled Gaussian W1 and Glorot-scaled W2 from stream "surrogate".
inline SurrogateWeights random_surrogate_weights(Eigen::Index features, Eigen::Index classes,
                                                 const SurrogateParams& prm, std::uint64_t seed) {
  if (features < 1 || classes < 1 || prm.hidden < 1) {
    throw ValidationError("random_surrogate_weights: dimensions must be positive");
  }
  Rng rng = make_rng(seed, "surrogate");
  std::normal_distribution<double> normal(0.0, 1.0);
  SurrogateWeights w;
  w.W1.resize(features, prm.hidden);
  w.W2.resize(prm.hidden, classes);
  const double s1 = prm.gain * std::sqrt(2.0 / static_cast<double>(features));
  const double s2 = prm.gain * std::sqrt(2.0 / static_cast<double>(prm.hidden + classes));
  for (Eigen::Index i = 0; i < w.W1.size(); ++i) w.W1.data()[i] = s1 * normal(rng);
  for (Eigen::Index i = 0; i < w.W2.size(); ++i) w.W2.data()[i] = s2 * normal(rng);
  return w;
}

/// D^{-1/2} (A + I) D^{-1/2} with weighted A.
inline Eigen::SparseMatrix<double> normalized_adjacency(const SparseGraph& g) {
  const NodeId n = g.num_nodes();
  Eigen::SparseMatrix<double> A = g.adjacency();
  Eigen::SparseMatrix<double> I(n, n);
  I.setIdentity();
  A += I;
  Eigen::VectorXd dinv(n);
  for (NodeId p = 0; p < n; ++p) dinv[p] = 1.0 / std::sqrt(1.0 + g.weighted_degree(p));
  return dinv.asDiagonal() * A * dinv.asDiagonal();
}

inline Eigen::MatrixXd row_softmax(Eigen::MatrixXd Z) {
  for (Eigen::Index i = 0; i < Z.rows(); ++i) {
    Z.row(i).array() -= Z.row(i).maxCoeff();
    Z.row(i) = Z.row(i).array().exp().matrix();
    Z.row(i) /= Z.row(i).sum();
  }
  return Z;
}

inline ModelOutputs surrogate_forward(const SparseGraph& g, const Eigen::MatrixXd& X,
                                      const Eigen::MatrixXd& W1, const Eigen::MatrixXd& W2) {
  if (X.rows() != g.num_nodes()) throw DimensionMismatch("surrogate_forward: X rows do not match the graph");
  if (X.cols() != W1.rows() || W1.cols() != W2.rows()) {
    throw DimensionMismatch("surrogate_forward: weight dimensions do not chain");
  }
  const auto A = normalized_adjacency(g);
  const Eigen::MatrixXd H = (A * (X * W1)).cwiseMax(0.0);
  return make_outputs(row_softmax(A * (H * W2)), "surrogate");
}

inline ModelOutputs surrogate_forward(const SparseGraph& g, const Eigen::MatrixXd& X,
                                      const SurrogateWeights& w) {
  return surrogate_forward(g, X, w.W1, w.W2);
}

// ---------------------------------------------------------------------------
// Perturbations

/// X + level * eta, eta i.i.d. standard normal.
inline Eigen::MatrixXd perturb_gaussian(const Eigen::MatrixXd& X, double level, std::uint64_t seed) {
  if (!(level >= 0.0)) throw ValidationError("perturb_gaussian: level must be >= 0");
  if (level == 0.0) return X;
  Rng rng = make_rng(seed, "perturb-gaussian");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd out = X;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += level * normal(rng);
  return out;
}

/// Edge edits of one DICE run, in the order they were applied.
struct DicePlan {
  std::vector<std::pair<NodeId, NodeId>> added;    // cross-label unit edges
  std::vector<std::pair<NodeId, NodeId>> removed;  // same-label edges
  std::size_t skipped_disconnecting = 0;
};

struct DiceResult {
  SparseGraph graph;
  DicePlan plan;
};

/// Applies a plan: removed pairs lose their edge entirely, added pairs gain a
/// unit edge (summed onto an existing edge if present).
inline SparseGraph apply_dice(const SparseGraph& g, const DicePlan& plan) {
  std::set<std::pair<NodeId, NodeId>> gone;
  for (auto [u, v] : plan.removed) gone.insert(std::minmax(u, v));
  std::vector<Edge> edges;
  for (const Edge& e : g.edges())
    if (!gone.count(std::minmax(e.u, e.v))) edges.push_back(e);
  for (auto [u, v] : plan.added) {
    g.check_node(u);
    g.check_node(v);
    edges.push_back({u, v, 1.0});
  }
  return SparseGraph(g.num_nodes(), std::move(edges));
}

namespace detail {

/// True if u and v stay connected in adj once the (u, v) edge is dropped.
inline bool connected_without(const std::vector<std::vector<NodeId>>& adj, NodeId u, NodeId v) {
  std::vector<char> seen(adj.size(), 0);
  std::vector<NodeId> stack{u};
  seen[u] = 1;
  while (!stack.empty()) {
    const NodeId x = stack.back();
    stack.pop_back();
    for (NodeId y : adj[x]) {
      if ((x == u && y == v) || (x == v && y == u)) continue;
      if (y == v) return true;
      if (!seen[y]) {
        seen[y] = 1;
        stack.push_back(y);
      }
    }
  }
  return false;
}

}  // namespace detail

/// DICE: insert n_pairs cross-label unit edges that are not present, then
/// delete n_pairs same-label edges, skipping (and counting) deletions that
/// would disconnect the graph. With `targets`, every edited pair touches a
/// target node. Pairs are drawn uniformly from stream "perturb-dice".
inline DiceResult perturb_dice(const SparseGraph& g, const std::vector<int>& labels, std::size_t n_pairs,
                               std::uint64_t seed, std::span<const NodeId> targets = {}) {
  const NodeId n = g.num_nodes();
  if (static_cast<NodeId>(labels.size()) != n) {
    throw DimensionMismatch("perturb_dice: " + std::to_string(labels.size()) + " labels for " +
                            std::to_string(n) + " nodes");
  }
  std::vector<char> is_target(static_cast<std::size_t>(n), targets.empty() ? 1 : 0);
  for (NodeId t : targets) {
    g.check_node(t);
    is_target[t] = 1;
  }
  DiceResult out;
  if (n_pairs == 0) {
    out.graph = g;
    return out;
  }
  auto touches = [&](NodeId u, NodeId v) { return is_target[u] || is_target[v]; };

  // Feasibility: cross-label pairs touching the targets, minus existing ones.
  std::map<int, std::int64_t> all_count, off_count;
  for (NodeId p = 0; p < n; ++p) {
    ++all_count[labels[p]];
    if (!is_target[p]) ++off_count[labels[p]];
  }
  auto cross_pairs = [](const std::map<int, std::int64_t>& c) {
    std::int64_t tot = 0, sq = 0;
    for (auto [l, k] : c) {
      tot += k;
      sq += k * k;
    }
    return (tot * tot - sq) / 2;
  };
  std::int64_t existing_cross = 0;
  std::vector<std::size_t> same_label;
  for (std::size_t i = 0; i < g.num_edges(); ++i) {
    const Edge& e = g.edges()[i];
    if (!touches(e.u, e.v)) continue;
    if (labels[e.u] != labels[e.v]) ++existing_cross;
    else same_label.push_back(i);
  }
  const std::int64_t free_cross = cross_pairs(all_count) - cross_pairs(off_count) - existing_cross;
  if (free_cross < static_cast<std::int64_t>(n_pairs) || same_label.size() < n_pairs) {
    throw InfeasibleBudget("perturb_dice: budget " + std::to_string(n_pairs) + " exceeds " +
                           std::to_string(free_cross) + " insertable and " +
                           std::to_string(same_label.size()) + " removable pairs");
  }

  Rng rng = make_rng(seed, "perturb-dice");
  std::set<std::pair<NodeId, NodeId>> chosen;
  auto acceptable = [&](NodeId u, NodeId v) {
    return u != v && labels[u] != labels[v] && touches(u, v) && !g.find_edge(u, v) &&
           !chosen.count(std::minmax(u, v));
  };
  // Rejection sampling over ordered pairs is uniform over unordered ones; if
  // candidates are scarce, fall back to enumerating them.
  std::uniform_int_distribution<NodeId> node(0, n - 1);
  const std::size_t max_attempts = 1000 * n_pairs + 1000000;
  std::size_t attempts = 0;
  while (out.plan.added.size() < n_pairs && attempts++ < max_attempts) {
    const NodeId u = node(rng), v = node(rng);
    if (!acceptable(u, v)) continue;
    chosen.insert(std::minmax(u, v));
    out.plan.added.push_back(std::minmax(u, v));
  }
  if (out.plan.added.size() < n_pairs) {
    std::vector<std::pair<NodeId, NodeId>> cand;
    for (NodeId u = 0; u < n; ++u)
      for (NodeId v = u + 1; v < n; ++v)
        if (acceptable(u, v)) cand.emplace_back(u, v);
    std::shuffle(cand.begin(), cand.end(), rng);
    for (std::size_t i = 0; out.plan.added.size() < n_pairs; ++i) out.plan.added.push_back(cand[i]);
  }

  // Deletions on the graph with the insertions in place.
  std::vector<std::vector<NodeId>> adj(static_cast<std::size_t>(n));
  for (const Edge& e : g.edges()) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  for (auto [u, v] : out.plan.added) {
    adj[u].push_back(v);
    adj[v].push_back(u);
  }
  std::shuffle(same_label.begin(), same_label.end(), rng);
  for (std::size_t idx : same_label) {
    if (out.plan.removed.size() == n_pairs) break;
    const Edge& e = g.edges()[idx];
    if (!detail::connected_without(adj, e.u, e.v)) {
      ++out.plan.skipped_disconnecting;
      continue;
    }
    std::erase(adj[e.u], e.v);
    std::erase(adj[e.v], e.u);
    out.plan.removed.emplace_back(e.u, e.v);
  }
  out.graph = apply_dice(g, out.plan);
  if (!is_connected(out.graph) && is_connected(g)) {
    throw Error("perturb_dice: internal error, perturbation disconnected the graph");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct PairMetrics {
  double cos = 1.0;
  double kld = 0.0;
};

/// Cosine similarity and D(clean || perturbed) per node of `nodes`.
inline std::vector<PairMetrics> eval_pair(const ModelOutputs& clean, const ModelOutputs& pert,
                                          std::span<const NodeId> nodes) {
  if (clean.Y.rows() != pert.Y.rows() || clean.Y.cols() != pert.Y.cols()) {
    throw DimensionMismatch("eval_pair: output shapes differ");
  }
  std::vector<PairMetrics> out(nodes.size());
  parallel_for(nodes.size(), [&](std::size_t i) {
    const NodeId p = nodes[i];
    if (p < 0 || p >= clean.Y.rows()) throw IndexOutOfRange("eval_pair: node id out of range");
    const Eigen::RowVectorXd a = clean.Y.row(p).cwiseMax(kProbabilityFloor);
    const Eigen::RowVectorXd b = pert.Y.row(p).cwiseMax(kProbabilityFloor);
    out[i].cos = clean.Y.row(p).dot(pert.Y.row(p)) / (clean.Y.row(p).norm() * pert.Y.row(p).norm());
    double k = 0.0;
    for (Eigen::Index c = 0; c < a.size(); ++c) k += a[c] * std::log(a[c] / b[c]);
    out[i].kld = std::max(0.0, k);
  });
  return out;
}

inline std::vector<PairMetrics> eval_pair(const ModelOutputs& clean, const ModelOutputs& pert) {
  std::vector<NodeId> all(static_cast<std::size_t>(clean.Y.rows()));
  std::iota(all.begin(), all.end(), NodeId{0});
  return eval_pair(clean, pert, all);
}

inline PairMetrics mean_metrics(const std::vector<PairMetrics>& m) {
  PairMetrics out{0.0, 0.0};
  if (m.empty()) return {std::nan(""), std::nan("")};
  for (const auto& x : m) {
    out.cos += x.cos;
    out.kld += x.kld;
  }
  out.cos /= static_cast<double>(m.size());
  out.kld /= static_cast<double>(m.size());
  return out;
}

}  // namespace manistab
