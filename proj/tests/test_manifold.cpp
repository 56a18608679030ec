#include <gtest/gtest.h>

#include "manistab/dense.hpp"
#include "manistab/eigensolver.hpp"
#include "manistab/generators.hpp"
#include "manistab/manifold.hpp"
#include "test_util.hpp"

using namespace manistab;
using manistab::testing::complete_graph;
using manistab::testing::path_graph;
using manistab::testing::random_connected;

namespace {

/// Augmented embedding rows of a fixed-seed SBM instance.
Eigen::MatrixXd sbm_rows(NodeId n, std::uint64_t seed) {
  const auto data = generate_sbm({.n = n, .blocks = 5, .p_in = 0.1, .p_out = 0.005}, seed);
  const auto g = largest_component(data.graph);
  Eigen::MatrixXd X(g.graph.num_nodes(), data.features.cols());
  for (NodeId i = 0; i < g.graph.num_nodes(); ++i) X.row(i) = data.features.row(g.new_to_old[i]);
  return augment_features(spectral_embed(g.graph, 20), X);
}

SparseGraph tree_graph(NodeId n, std::uint64_t seed) { return random_connected(n, 0.0, seed); }

/// The SBM instances carry 5 labels, so the cluster target is 10 x 5.
ManifoldConfig labelled_sbm_config() {
  ManifoldConfig cfg;
  cfg.target_clusters = 50;
  return cfg;
}

}  // namespace

TEST(KnnGraph, TwoPoints) {
  Eigen::MatrixXd rows(2, 2);
  rows << 0, 0, 1, 1;
  const auto g = knn_graph(rows, 1);
  ASSERT_EQ(g.num_edges(), 1u);
  EXPECT_DOUBLE_EQ(g.edges()[0].w, 0.5);
}

TEST(KnnGraph, CollinearPoints) {
  Eigen::MatrixXd rows(3, 1);
  rows << 0, 1, 3;
  const auto g = knn_graph(rows, 1);
  ASSERT_EQ(g.num_edges(), 2u);
  EXPECT_EQ(g.edges()[0], (Edge{0, 1, 1.0}));
  EXPECT_EQ(g.edges()[1], (Edge{1, 2, 0.25}));
}

TEST(KnnGraph, SymmetricWithBoundedDegree) {
  const Eigen::MatrixXd rows = sbm_rows(200, 3);
  const int k = 10;
  const auto res = knn_graph_detail(rows, k);
  const auto& g = res.graph;
  const Eigen::MatrixXd A = Eigen::MatrixXd(g.adjacency());
  EXPECT_EQ((A - A.transpose()).cwiseAbs().maxCoeff(), 0.0);
  // Every node keeps its own k neighbours, and each node contributes at most k
  // edges, so |E| <= n k (mean degree <= 2k). A single hub may exceed 2k.
  for (NodeId p = 0; p < g.num_nodes(); ++p) EXPECT_GE(g.degree(p), static_cast<std::size_t>(k));
  EXPECT_LE(g.num_edges(), static_cast<std::size_t>(g.num_nodes() * k) + res.bridges_added);
  EXPECT_TRUE(is_connected(g));
}

TEST(KnnGraph, DuplicateRowsClampDistance) {
  Eigen::MatrixXd rows(3, 2);
  rows << 1, 1, 1, 1, 5, 5;
  const auto g = knn_graph(rows, 1);
  ASSERT_TRUE(g.find_edge(0, 1).has_value());
  EXPECT_DOUBLE_EQ(g.edges()[*g.find_edge(0, 1)].w, 1e12);
  EXPECT_TRUE(is_connected(g));
}

TEST(KnnGraph, DisconnectedClustersAreBridged) {
  Eigen::MatrixXd rows(6, 1);
  rows << 0, 0.1, 0.2, 10, 10.1, 10.2;
  const auto res = knn_graph_detail(rows, 1);
  EXPECT_TRUE(is_connected(res.graph));
  EXPECT_GE(res.bridges_added, 1u);
  EXPECT_TRUE(res.graph.find_edge(2, 3).has_value());  // the nearest cross pair
}

TEST(KnnGraph, Errors) {
  EXPECT_THROW(knn_graph(Eigen::MatrixXd::Zero(1, 2), 1), ValidationError);
  EXPECT_THROW(knn_graph(Eigen::MatrixXd::Zero(3, 2), 0), ValidationError);
}

TEST(SamplingRatio, TreeEdgesAreOne) {
  const auto g = tree_graph(15, 2);
  const auto rho = edge_sampling_ratios(g, exact_edge_resistances(g));
  for (double x : rho) EXPECT_NEAR(x, 1.0, 1e-9);
}

TEST(SamplingRatio, TriangleIsTwoThirds) {
  const auto g = complete_graph(3);
  for (double x : edge_sampling_ratios(g, exact_edge_resistances(g))) EXPECT_NEAR(x, 2.0 / 3.0, 1e-10);
}

TEST(SamplingRatio, RandomGraphWithinUnitInterval) {
  const auto g = random_connected(50, 0.1, 77);
  const Eigen::MatrixXd P = dense_pseudoinverse(laplacian(g));
  std::vector<double> r;
  for (const Edge& e : g.edges()) r.push_back(dense_resistance(P, e.u, e.v));
  for (double x : edge_sampling_ratios(g, r)) {
    EXPECT_GT(x, 0.0);
    EXPECT_LE(x, 1.0 + 1e-9);
  }
  EXPECT_THROW(edge_sampling_ratios(g, std::vector<double>(3, 1.0)), DimensionMismatch);
}

TEST(SamplingRatio, ClampCapsEstimates) {
  const SparseGraph g(2, {{0, 1, 2.0}});
  EXPECT_DOUBLE_EQ(edge_sampling_ratios(g, {1.0}, true)[0], 1.0);
  EXPECT_DOUBLE_EQ(edge_sampling_ratios(g, {1.0}, false)[0], 2.0);
}

TEST(Lrd, ExtremeDiameters) {
  const auto g = random_connected(30, 0.1, 5);
  const auto r = exact_edge_resistances(g);
  EXPECT_EQ(lrd_decompose(g, r, 1e300).count, 1);
  EXPECT_EQ(lrd_decompose(g, r, 1e-300).count, 30);
}

TEST(Lrd, PathSixDiameterTwo) {
  const auto g = path_graph(6);
  const auto c = lrd_decompose(g, exact_edge_resistances(g), 2.0);
  EXPECT_EQ(c.labels, (std::vector<int>{0, 0, 0, 1, 1, 1}));
  ASSERT_EQ(c.eta.size(), 2u);
  EXPECT_NEAR(c.eta[0], 2.0, 1e-9);
  EXPECT_NEAR(c.eta[1], 2.0, 1e-9);
}

TEST(Lrd, AccumulatedResistanceWithinDiameter) {
  const auto g = random_connected(60, 0.05, 9);
  const auto r = exact_edge_resistances(g);
  for (double d : {0.3, 1.0, 3.0}) {
    const auto c = lrd_decompose(g, r, d);
    for (double eta : c.eta) EXPECT_LE(eta, d);
  }
}

TEST(Lrd, ClusterCountNonIncreasingInDiameter) {
  const auto rows = sbm_rows(300, 11);
  const auto g = knn_graph(rows, 10);
  const auto r = exact_edge_resistances(g);
  int prev = std::numeric_limits<int>::max();
  for (double d = 1e-4; d < 1e3; d *= 1.5) {
    const int count = lrd_decompose(g, r, d).count;
    EXPECT_LE(count, prev) << "diameter " << d;
    prev = count;
  }
}

TEST(Lrd, AutoDiameterApproachesTarget) {
  const auto g = knn_graph(sbm_rows(300, 11), 10);
  const auto r = exact_edge_resistances(g);
  const double d = auto_diameter(g, r, 50);
  const int count = lrd_decompose(g, r, d).count;
  EXPECT_NEAR(count, 50, 5);
}

TEST(Backbone, TreeKeepsEverything) {
  const auto g = tree_graph(12, 3);
  const auto r = exact_edge_resistances(g);
  const auto keep = cluster_backbone(g, std::vector<int>(12, 0), r, edge_sampling_ratios(g, r), 0.9);
  for (bool k : keep) EXPECT_TRUE(k);
}

TEST(Backbone, TriangleDropsOneEdge) {
  const auto g = complete_graph(3);
  const auto r = exact_edge_resistances(g);
  const auto keep = cluster_backbone(g, {0, 0, 0}, r, edge_sampling_ratios(g, r), 0.9);
  EXPECT_EQ(std::count(keep.begin(), keep.end(), true), 2);
}

TEST(Backbone, SpansCluster) {
  const auto g = random_connected(20, 0.3, 13);
  const auto r = exact_edge_resistances(g);
  const auto keep = cluster_backbone(g, std::vector<int>(20, 0), r, edge_sampling_ratios(g, r), 0.9);
  std::vector<Edge> kept;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) kept.push_back(g.edges()[i]);
  EXPECT_TRUE(is_connected(SparseGraph(20, kept)));
  EXPECT_LT(kept.size(), g.num_edges());
}

TEST(Sparsify, TreeIsUnchanged) {
  const auto g = tree_graph(25, 4);
  const auto m = sparsify(g, {.resistance_diameter = 2.0});
  EXPECT_EQ(m.graph.edges(), g.edges());
}

TEST(Sparsify, TriangleAllSingletonsKeepsAllEdges) {
  const auto g = complete_graph(3);
  const auto m = sparsify(g, {.resistance_diameter = 0.1});
  EXPECT_EQ(m.num_clusters(), 3);
  EXPECT_EQ(m.graph.num_edges(), 3u);
  EXPECT_EQ(m.inter_edges.size(), 3u);
  EXPECT_TRUE(m.intra_edges.empty());
}

TEST(Sparsify, ManifoldInvariants) {
  const auto g = knn_graph(sbm_rows(300, 21), 10);
  const auto m = sparsify(g, labelled_sbm_config());
  EXPECT_TRUE(m.exact_resistances);
  EXPECT_TRUE(is_connected(m.graph));
  EXPECT_LE(m.graph.num_edges(), g.num_edges());
  EXPECT_EQ(m.intra_edges.size() + m.inter_edges.size(), m.graph.num_edges());
  for (std::size_t i : m.intra_edges)
    EXPECT_EQ(m.clusters[m.graph.edges()[i].u], m.clusters[m.graph.edges()[i].v]);
  for (std::size_t i : m.inter_edges)
    EXPECT_NE(m.clusters[m.graph.edges()[i].u], m.clusters[m.graph.edges()[i].v]);
  for (double r : m.rho) {
    EXPECT_GT(r, 0.0);
    EXPECT_LE(r, 1.0 + 1e-9);
  }
}

TEST(Sparsify, QuadraticFormsStayWithinFactorThree) {
  const auto g = knn_graph(sbm_rows(300, 31), 10);
  const auto m = sparsify(g, labelled_sbm_config());
  const auto LG = laplacian(g), LH = laplacian(m.graph);
  Rng rng = make_rng(31, "x");
  std::normal_distribution<double> nd;
  for (int t = 0; t < 20; ++t) {
    Eigen::VectorXd x(g.num_nodes());
    for (auto& v : x) v = nd(rng);
    x = project_off_constant(x);
    const double ratio = quadratic_form(LH, x) / quadratic_form(LG, x);
    EXPECT_GE(ratio, 1.0 / 3.0);
    EXPECT_LE(ratio, 3.0);
  }
}

TEST(Sparsify, EstimatedResistancePathAboveThreshold) {
  const auto g = knn_graph(sbm_rows(300, 41), 10);
  ManifoldConfig cfg = labelled_sbm_config();
  cfg.exact_below = 100;  // force the Krylov estimator
  const auto m = sparsify(g, cfg);
  EXPECT_FALSE(m.exact_resistances);
  EXPECT_TRUE(is_connected(m.graph));
  for (double r : m.rho) EXPECT_LE(r, 1.0);
}

TEST(Pgm, EmptyGraph) {
  const auto L = laplacian(SparseGraph(3, {}));
  const Eigen::MatrixXd X = Eigen::MatrixXd::Random(3, 2);
  EXPECT_NEAR(pgm_objective(L, X, 1.0), -X.squaredNorm() / 2.0, 1e-12);
}

TEST(Pgm, SingleEdge) {
  const auto L = laplacian(SparseGraph(2, {{0, 1, 1.0}}));
  EXPECT_NEAR(pgm_objective(L, Eigen::MatrixXd::Zero(2, 1), 1.0), std::log(3.0), 1e-12);
}

TEST(Pgm, SparsifiedObjectiveCloseToDense) {
  const Eigen::MatrixXd rows = sbm_rows(300, 51);
  const auto g = knn_graph(rows, 10);
  const auto m = sparsify(g, labelled_sbm_config());
  const double fd = pgm_objective(laplacian(g), rows);
  const double fm = pgm_objective(laplacian(m.graph), rows);
  EXPECT_GE(fm, fd - 0.1 * std::abs(fd));
}

TEST(Builders, InputManifoldKeepsNodeSetAndPreservesResistance) {
  const auto data = generate_sbm({.n = 300, .blocks = 5, .p_in = 0.1, .p_out = 0.005}, 61);
  const auto g = largest_component(data.graph);
  Eigen::MatrixXd X(g.graph.num_nodes(), data.features.cols());
  for (NodeId i = 0; i < g.graph.num_nodes(); ++i) X.row(i) = data.features.row(g.new_to_old[i]);
  InputManifoldConfig cfg;
  cfg.embed_k = 30;
  cfg.manifold = labelled_sbm_config();
  const auto im = build_input_manifold(g.graph, X, cfg);
  EXPECT_EQ(im.manifold.graph.num_nodes(), g.graph.num_nodes());
  EXPECT_TRUE(is_connected(im.manifold.graph));
  // Resistances on the manifold track those of the original graph.
  const auto LG = laplacian(g.graph), LM = laplacian(im.manifold.graph);
  Rng rng = make_rng(61, "pairs");
  const auto pairs = sample_pairs(g.graph.num_nodes(), 100, rng);
  std::vector<double> a, b;
  for (auto [p, q] : pairs) {
    a.push_back(exact_resistance(LG, p, q));
    b.push_back(exact_resistance(LM, p, q));
  }
  EXPECT_GE(pearson(a, b), 0.5);
}

TEST(Builders, OutputManifoldOneHotBlocks) {
  // Three one-hot classes with small jitter; kNN k=2 within blocks, so the
  // bridges between blocks carry weight about 1/2.
  Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(9, 3);
  for (int i = 0; i < 9; ++i) {
    Y(i, i / 3) = 1.0 - 0.01 * (i % 3);
    Y(i, (i / 3 + 1) % 3) = 0.01 * (i % 3);
  }
  const auto m = build_output_manifold(Y, {.knn_k = 2, .resistance_diameter = 1.0});
  EXPECT_TRUE(is_connected(m.graph));
  EXPECT_EQ(m.graph.num_nodes(), 9);
  bool saw_cross = false;
  for (const Edge& e : m.graph.edges()) {
    if (e.u / 3 != e.v / 3) {
      saw_cross = true;
      EXPECT_NEAR(e.w, 0.5, 0.05);
    }
  }
  EXPECT_TRUE(saw_cross);
}

TEST(Builders, OutputManifoldIdenticalRows) {
  const Eigen::MatrixXd Y = Eigen::MatrixXd::Constant(5, 2, 0.5);
  const auto m = build_output_manifold(Y, {.knn_k = 2, .resistance_diameter = 1.0});
  EXPECT_TRUE(is_connected(m.graph));
  for (const Edge& e : m.graph.edges()) EXPECT_DOUBLE_EQ(e.w, 1e12);
}
