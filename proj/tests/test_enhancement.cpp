#include <gtest/gtest.h>

#include "manistab/dense.hpp"
#include "manistab/enhancement.hpp"
#include "test_util.hpp"

using namespace manistab;
using manistab::testing::path_graph;
using manistab::testing::random_connected;

namespace {

ManifoldConfig exact_config(double diameter) {
  ManifoldConfig c;
  c.resistance_diameter = diameter;
  c.exact_below = 1000;
  return c;
}

double dense_lambda2(const SparseGraph& g) { return dense_spectrum(laplacian(g)).eigenvalues()[1]; }

PipelineConfig small_pipeline() {
  PipelineConfig c;
  c.sbm.n = 200;
  c.sbm.blocks = 4;
  c.sbm.p_in = 0.1;
  c.sbm.p_out = 0.01;
  c.analysis.embed_k = 20;
  c.analysis.s = 20;
  c.analysis.fraction = 0.05;
  c.analysis.manifold.exact_below = 1000;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(InterClusterEdges, SingleClusterManifoldIsEmpty) {
  const auto m = sparsify(random_connected(20, 0.3, 1), exact_config(1e9));
  ASSERT_EQ(m.num_clusters(), 1);
  EXPECT_TRUE(inter_cluster_edges(m).empty());
}

TEST(InterClusterEdges, AllSingletonsReturnEveryEdge) {
  const auto g = random_connected(20, 0.3, 2);
  const auto m = sparsify(g, exact_config(1e-12));
  ASSERT_EQ(m.num_clusters(), 20);
  const auto e = inter_cluster_edges(m);
  ASSERT_EQ(e.size(), g.num_edges());
  for (std::size_t i = 0; i < e.size(); ++i) {
    EXPECT_EQ(e[i].u, g.edges()[i].u);
    EXPECT_EQ(e[i].v, g.edges()[i].v);
    EXPECT_EQ(e[i].w, g.edges()[i].w);
  }
}

TEST(InterClusterEdges, EdgesCrossClusterBoundaries) {
  const auto m = sparsify(random_connected(60, 0.1, 3), exact_config(2.0));
  ASSERT_GT(m.num_clusters(), 1);
  const auto e = inter_cluster_edges(m);
  EXPECT_FALSE(e.empty());
  for (const Edge& x : e) EXPECT_NE(m.clusters[x.u], m.clusters[x.v]);
}

TEST(Enhance, EmptyExtraIsIdentity) {
  const auto g = random_connected(15, 0.2, 4);
  const auto h = enhance(g, {});
  ASSERT_EQ(h.num_edges(), g.num_edges());
  for (std::size_t i = 0; i < g.num_edges(); ++i) EXPECT_EQ(h.edges()[i].w, g.edges()[i].w);
}

TEST(Enhance, InsertingExistingEdgeDoublesWeight) {
  const auto g = path_graph(4, 1.5);
  const auto h = enhance(g, {{1, 2, 1.5}});
  ASSERT_EQ(h.num_edges(), 3u);
  EXPECT_DOUBLE_EQ(h.edges()[*h.find_edge(1, 2)].w, 3.0);
}

TEST(Enhance, WeightScaleMultipliesInsertedEdges) {
  const auto h = enhance(path_graph(4), {{0, 3, 2.0}}, 0.25);
  ASSERT_EQ(h.num_edges(), 4u);
  EXPECT_DOUBLE_EQ(h.edges()[*h.find_edge(0, 3)].w, 0.5);
  EXPECT_DOUBLE_EQ(h.edges()[*h.find_edge(0, 1)].w, 1.0);
}

TEST(Enhance, InvalidInputsRejected) {
  const auto g = path_graph(4);
  EXPECT_THROW(enhance(g, {{0, 7, 1.0}}), IndexOutOfRange);
  EXPECT_THROW(enhance(g, {{2, 2, 1.0}}), ValidationError);
  EXPECT_THROW(enhance(g, {}, 0.0), ValidationError);
}

TEST(Enhance, AlgebraicConnectivityNonDecreasingAgainstDenseOracle) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const auto g = random_connected(40 + 5 * static_cast<NodeId>(seed), 0.05, seed);
    const auto m = sparsify(g, exact_config(1.5));
    const auto h = enhance(g, inter_cluster_edges(m));
    const double l0 = dense_lambda2(g), l1 = dense_lambda2(h);
    EXPECT_GE(l1, l0 - 1e-9) << "seed " << seed;
    EXPECT_NEAR(algebraic_connectivity(g), l0, 1e-8 * std::max(1.0, l0));
    EXPECT_NEAR(algebraic_connectivity(h), l1, 1e-8 * std::max(1.0, l1));
  }
}

TEST(Enhance, NeverRemovesEdges) {
  const auto g = random_connected(30, 0.1, 9);
  const auto h = enhance(g, {{0, 29, 1.0}, {3, 17, 0.5}});
  EXPECT_EQ(h.num_nodes(), g.num_nodes());
  for (const Edge& e : g.edges()) {
    const auto i = h.find_edge(e.u, e.v);
    ASSERT_TRUE(i.has_value());
    EXPECT_GE(h.edges()[*i].w, e.w);
  }
}

TEST(EnhancementExperiment, ZeroLevelAttackGivesIdenticalMetrics) {
  const auto p = run_pipeline(small_pipeline());
  EnhancementConfig cfg;
  cfg.dice_level = 0;
  cfg.repeats = 2;
  const auto r = enhancement_experiment(p, cfg);
  EXPECT_EQ(r.kld_original, 0.0);
  EXPECT_EQ(r.kld_enhanced, 0.0);
  EXPECT_DOUBLE_EQ(r.cos_original, 1.0);
  EXPECT_DOUBLE_EQ(r.cos_enhanced, 1.0);
}

TEST(EnhancementExperiment, ReportsInsertedCountAndConnectivity) {
  const auto p = run_pipeline(small_pipeline());
  EnhancementConfig cfg;
  cfg.dice_level = 5;
  cfg.repeats = 2;
  const auto r = enhancement_experiment(p, cfg);
  EXPECT_EQ(r.inserted, p.analysis.input.manifold.inter_edges.size());
  EXPECT_EQ(r.unstable_nodes, p.analysis.report.unstable.size());
  EXPECT_GE(r.lambda2_enhanced, r.lambda2_original - 1e-9);
  EXPECT_GT(r.kld_original, 0.0);
  EXPECT_GT(r.kld_enhanced, 0.0);
}

TEST(EnhancementExperiment, RejectsZeroRepeats) {
  const auto p = run_pipeline(small_pipeline());
  EnhancementConfig cfg;
  cfg.repeats = 0;
  EXPECT_THROW(enhancement_experiment(p, cfg), ValidationError);
}
