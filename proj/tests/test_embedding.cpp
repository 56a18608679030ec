#include <gtest/gtest.h>

#include "manistab/dense.hpp"
#include "manistab/embedding.hpp"
#include "manistab/generators.hpp"
#include "test_util.hpp"

using namespace manistab;
using manistab::testing::complete_graph;
using manistab::testing::path_graph;
using manistab::testing::random_connected;

TEST(SpectralEmbed, SingleEdge) {
  const auto emb = spectral_embed(SparseGraph(2, {{0, 1, 1.0}}), 1);
  EXPECT_NEAR(emb.eigenvalues[0], 2.0, 1e-12);
  // u = (1, -1)/sqrt(2) with the first-entry-positive sign, divided by sqrt(2).
  EXPECT_NEAR(emb.U(0, 0), 0.5, 1e-12);
  EXPECT_NEAR(emb.U(1, 0), -0.5, 1e-12);
}

TEST(SpectralEmbed, CompleteK4ColumnNorms) {
  const auto emb = spectral_embed(complete_graph(4), 3);
  for (int i = 0; i < 3; ++i) EXPECT_NEAR(emb.U.col(i).squaredNorm(), 0.25, 1e-10);
}

TEST(SpectralEmbed, GramIsDiagonalInverseEigenvalues) {
  const auto g = random_connected(60, 0.08, 17);
  const auto emb = spectral_embed(g, 12);
  const Eigen::MatrixXd G = emb.U.transpose() * emb.U;
  const Eigen::MatrixXd expect = emb.eigenvalues.cwiseInverse().asDiagonal();
  EXPECT_LE((G - expect).cwiseAbs().maxCoeff(), 1e-8 * expect.maxCoeff());
  EXPECT_LE((emb.U.transpose() * Eigen::VectorXd::Ones(60)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(ApproxResistance, PathFullSpectrumIsSeriesResistance) {
  const auto emb = spectral_embed(path_graph(3), 2);
  EXPECT_NEAR(approx_resistance(emb, 0, 2), 2.0, 1e-10);
  EXPECT_NEAR(approx_resistance(emb, 2, 0), approx_resistance(emb, 0, 2), 0.0);
}

TEST(ApproxResistance, TriangleFullSpectrumIsParallelResistance) {
  const auto emb = spectral_embed(complete_graph(3), 2);
  for (NodeId p = 0; p < 3; ++p)
    for (NodeId q = p + 1; q < 3; ++q) EXPECT_NEAR(approx_resistance(emb, p, q), 2.0 / 3.0, 1e-10);
}

TEST(ApproxResistance, RejectsBadIndices) {
  const auto emb = spectral_embed(path_graph(3), 1);
  EXPECT_THROW(approx_resistance(emb, 1, 1), ValidationError);
  EXPECT_THROW(approx_resistance(emb, 0, 3), IndexOutOfRange);
}

TEST(ApproxResistance, FullSpectrumMatchesDenseOracle) {
  const auto g = random_connected(40, 0.1, 23);
  const auto emb = spectral_embed(g, 39);
  const Eigen::MatrixXd P = dense_pseudoinverse(laplacian(g));
  for (NodeId p = 0; p < 40; ++p)
    for (NodeId q = p + 1; q < 40; ++q)
      EXPECT_NEAR(approx_resistance(emb, p, q), dense_resistance(P, p, q), 1e-6);
}

TEST(ResistanceCorrelation, FullSpectrumIsPerfect) {
  const auto g = random_connected(50, 0.1, 29);
  const auto emb = spectral_embed(g, 49);
  EXPECT_NEAR(resistance_correlation(g, emb, 100, 1), 1.0, 1e-6);
}

TEST(ResistanceCorrelation, PairsAreDistinctAndUnordered) {
  Rng rng = make_rng(3, "pairs");
  const auto pairs = sample_pairs(6, 15, rng);  // every pair of K6
  std::set<std::pair<NodeId, NodeId>> seen(pairs.begin(), pairs.end());
  EXPECT_EQ(seen.size(), 15u);
  for (auto [p, q] : pairs) EXPECT_LT(p, q);
  EXPECT_THROW(sample_pairs(6, 16, rng), ValidationError);
}

TEST(ApproxResistance, ErrorShrinksAsDimensionGrows) {
  const auto g = random_connected(100, 0.04, 37);
  const auto L = laplacian(g);
  Rng rng = make_rng(37, "pairs");
  const auto pairs = sample_pairs(100, 200, rng);
  std::vector<double> exact;
  for (auto [p, q] : pairs) exact.push_back(exact_resistance(L, p, q));
  double prev = std::numeric_limits<double>::infinity();
  for (Eigen::Index k : {5, 10, 20, 40, 80}) {
    const auto emb = spectral_embed(g, k);
    double mae = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      mae += std::abs(approx_resistance(emb, pairs[i].first, pairs[i].second) - exact[i]);
    mae /= static_cast<double>(pairs.size());
    EXPECT_LE(mae, prev * 1.05) << "k = " << k;
    prev = mae;
  }
}

TEST(Eigengap, FiveBlockSbmSuggestsFour) {
  const auto data = generate_sbm({.n = 100, .blocks = 5, .p_in = 0.5, .p_out = 0.01}, 7);
  ASSERT_TRUE(is_connected(data.graph));
  const auto rep = eigengap_report(data.graph, 10);
  // Dense oracle on the same instance.
  const Eigen::VectorXd lam = dense_spectrum(laplacian(data.graph)).eigenvalues().segment(1, 11);
  Eigen::Index best = 0;
  for (Eigen::Index i = 0; i + 1 < lam.size(); ++i)
    if (lam[i + 1] / lam[i] > lam[best + 1] / lam[best]) best = i;
  EXPECT_EQ(best + 1, 4);
  EXPECT_EQ(rep.suggested_k, 4);
  EXPECT_LE((rep.eigenvalues - lam).cwiseAbs().maxCoeff(), 1e-8 * lam.maxCoeff());
  for (Eigen::Index i = 0; i < rep.ratios.size(); ++i) EXPECT_GT(rep.ratios[i], 0.0);
}

TEST(Eigengap, FlatSpectrumTiesBrokenLow) {
  const auto rep = eigengap_report(complete_graph(4), 2);
  ASSERT_EQ(rep.ratios.size(), 2);
  EXPECT_NEAR(rep.ratios[0], 1.0, 1e-10);
  EXPECT_NEAR(rep.ratios[1], 1.0, 1e-10);
  EXPECT_EQ(rep.suggested_k, 1);
}

TEST(Eigengap, HeuristicFromClassCount) {
  EXPECT_EQ(heuristic_dimension(7), 70);
  const auto rep = eigengap_report(path_graph(10), 3, 7);
  ASSERT_TRUE(rep.heuristic_k.has_value());
  EXPECT_EQ(*rep.heuristic_k, 70);
  EXPECT_LE(rep.suggested_k, 3);
}

TEST(AugmentFeatures, NoFeaturesGivesScaledEmbedding) {
  const auto emb = spectral_embed(random_connected(20, 0.2, 3), 4);
  const Eigen::MatrixXd out = augment_features(emb, Eigen::MatrixXd(20, 0));
  ASSERT_EQ(out.cols(), 4);
  EXPECT_NEAR(out.squaredNorm() / 20.0, 1.0, 1e-12);
  const double s = out(0, 0) / emb.U(0, 0);
  EXPECT_LE((out - s * emb.U).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(AugmentFeatures, ConstantColumnCarriesNoDistance) {
  const auto emb = spectral_embed(random_connected(10, 0.3, 5), 2);
  Eigen::MatrixXd X(10, 2);
  X.col(0).setConstant(3.0);
  X.col(1) = Eigen::VectorXd::LinSpaced(10, 0, 9);
  const Eigen::MatrixXd out = augment_features(emb, X);
  EXPECT_LE(out.col(2).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(AugmentFeatures, HandComputedToy) {
  EmbeddingMatrix emb;
  emb.U = Eigen::Vector4d(1, -1, 1, -1);
  emb.eigenvalues = Eigen::VectorXd::Ones(1);
  const Eigen::MatrixXd X = Eigen::Vector4d(0, 2, 4, 6);
  const Eigen::MatrixXd out = augment_features(emb, X);
  // U: ||U||_F^2 = 4 = n, unchanged. X centred to (-3,-1,1,3), ||.||^2 = 20,
  // scaled by sqrt(4/20).
  const double s = std::sqrt(0.2);
  Eigen::MatrixXd expect(4, 2);
  expect << 1, -3 * s, -1, -1 * s, 1, 1 * s, -1, 3 * s;
  EXPECT_LE((out - expect).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AugmentFeatures, RejectsMismatchAndNaN) {
  const auto emb = spectral_embed(path_graph(4), 1);
  EXPECT_THROW(augment_features(emb, Eigen::MatrixXd::Zero(3, 2)), DimensionMismatch);
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(4, 1);
  X(2, 0) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(augment_features(emb, X), ValidationError);
}
