#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "manistab/eigensolver.hpp"
#include "manistab/errors.hpp"
#include "manistab/graph.hpp"
#include "manistab/manifold.hpp"
#include "manistab/model_sim.hpp"
#include "manistab/pipeline.hpp"

namespace manistab {

/// The edges flagged inter-cluster in the manifold, with their weights.
inline std::vector<Edge> inter_cluster_edges(const Manifold& m) {
  std::vector<Edge> out;
  out.reserve(m.inter_edges.size());
  for (std::size_t i : m.inter_edges) out.push_back(m.graph.edges()[i]);
  return out;
}

/// g plus `extra` with weights multiplied by weight_scale; an edge already in
/// g gains the inserted weight.
inline SparseGraph enhance(const SparseGraph& g, const std::vector<Edge>& extra, double weight_scale = 1.0) {
  if (!(weight_scale > 0.0) || !std::isfinite(weight_scale)) {
    throw ValidationError("enhance: weight_scale must be positive");
  }
  std::vector<Edge> edges = g.edges();
  for (const Edge& e : extra) {
    g.check_node(e.u);
    g.check_node(e.v);
    if (e.u == e.v) throw ValidationError("enhance: self-loop in inserted edges");
    edges.push_back({e.u, e.v, e.w * weight_scale});
  }
  return SparseGraph(g.num_nodes(), std::move(edges));
}

/// Smallest nonzero Laplacian eigenvalue.
inline double algebraic_connectivity(const SparseGraph& g, const EigenOptions& opt = {}) {
  if (g.num_nodes() < 2) throw ValidationError("algebraic_connectivity: need at least two nodes");
  return smallest_eigenpairs(laplacian(g), 1, opt).values[0];
}

struct EnhancementConfig {
  std::size_t dice_level = 20;
  double weight_scale = 1.0;
  int repeats = 5;
};

struct EnhancementResult {
  std::size_t inserted = 0;
  double kld_original = 0.0, kld_enhanced = 0.0;
  double cos_original = 1.0, cos_enhanced = 1.0;
  double lambda2_original = 0.0, lambda2_enhanced = 0.0;
  std::size_t unstable_nodes = 0;
};

/// Inserts the input manifold's inter-cluster edges into the graph and
/// compares the unstable segment under identical DICE edits (targeted at the
/// unstable nodes, drawn on the original graph and replayed on both).
inline EnhancementResult enhancement_experiment(const Pipeline& p, const EnhancementConfig& cfg) {
  if (cfg.repeats < 1) throw ValidationError("enhancement_experiment: repeats must be >= 1");
  EnhancementResult out;
  const auto extra = inter_cluster_edges(p.analysis.input.manifold);
  out.inserted = extra.size();
  const SparseGraph ge = enhance(p.graph, extra, cfg.weight_scale);
  const auto& unstable = p.analysis.report.unstable;
  out.unstable_nodes = unstable.size();
  const ModelOutputs clean_e = surrogate_forward(ge, p.features, p.weights);
  for (int r = 0; r < cfg.repeats; ++r) {
    const auto seed = level_seed(p.config.seed, "enhance-dice", static_cast<double>(cfg.dice_level), r);
    const auto d = perturb_dice(p.graph, p.labels, cfg.dice_level, seed, unstable);
    const PairMetrics mo =
        mean_metrics(eval_pair(p.clean, surrogate_forward(d.graph, p.features, p.weights), unstable));
    const PairMetrics me =
        mean_metrics(eval_pair(clean_e, surrogate_forward(apply_dice(ge, d.plan), p.features, p.weights), unstable));
    out.kld_original += mo.kld / cfg.repeats;
    out.cos_original += (mo.cos - 1.0) / cfg.repeats;
    out.kld_enhanced += me.kld / cfg.repeats;
    out.cos_enhanced += (me.cos - 1.0) / cfg.repeats;
  }
  EigenOptions eo;
  eo.seed = stream_seed(p.config.seed, "eigensolver");
  out.lambda2_original = algebraic_connectivity(p.graph, eo);
  out.lambda2_enhanced = algebraic_connectivity(ge, eo);
  return out;
}

}  // namespace manistab
