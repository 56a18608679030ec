#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "manistab/errors.hpp"
#include "manistab/graph.hpp"
#include "manistab/rng.hpp"

namespace manistab {

struct SbmParams {
  NodeId n = 1000;
  int blocks = 5;
  double p_in = 0.05;
  double p_out = 0.002;
  /// Feature dimension; features are block means plus unit Gaussian noise.
  int feature_dim = 16;
  double feature_separation = 1.0;
};

struct SyntheticDataset {
  SparseGraph graph;
  Eigen::MatrixXd features;
  std::vector<int> labels;
};

/// Stochastic block model with near-equal contiguous blocks (node i belongs to
/// block i * blocks / n), unit edge weights, and class-dependent Gaussian
/// features. Deterministic for fixed (params, seed).
inline SyntheticDataset generate_sbm(const SbmParams& prm, std::uint64_t seed) {
  if (prm.n < 2 || prm.blocks < 1 || prm.blocks > prm.n) {
    throw ValidationError("generate_sbm: need n >= 2 and 1 <= blocks <= n");
  }
  if (!(prm.p_in >= 0 && prm.p_in <= 1 && prm.p_out >= 0 && prm.p_out <= 1)) {
    throw ValidationError("generate_sbm: probabilities must lie in [0, 1]");
  }
  if (prm.feature_dim < 0) throw ValidationError("generate_sbm: negative feature dimension");
  SyntheticDataset d;
  d.labels.resize(static_cast<std::size_t>(prm.n));
  for (NodeId i = 0; i < prm.n; ++i) d.labels[i] = static_cast<int>(i * prm.blocks / prm.n);

  Rng rng = make_rng(seed, "sbm-edges");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<Edge> edges;
  for (NodeId i = 0; i < prm.n; ++i) {
    for (NodeId j = i + 1; j < prm.n; ++j) {
      const double p = d.labels[i] == d.labels[j] ? prm.p_in : prm.p_out;
      if (unif(rng) < p) edges.push_back({i, j, 1.0});
    }
  }
  d.graph = SparseGraph(prm.n, std::move(edges));

  Rng frng = make_rng(seed, "sbm-features");
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd centers(prm.blocks, prm.feature_dim);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = normal(frng);
  centers *= prm.feature_separation;
  d.features.resize(prm.n, prm.feature_dim);
  for (NodeId i = 0; i < prm.n; ++i) {
    for (int c = 0; c < prm.feature_dim; ++c) {
      d.features(i, c) = centers(d.labels[i], c) + normal(frng);
    }
  }
  return d;
}

}  // namespace manistab
