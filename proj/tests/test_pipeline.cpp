#include <gtest/gtest.h>

#include "manistab/pipeline.hpp"

using namespace manistab;

namespace {

PipelineConfig small_pipeline(std::uint64_t seed = 3) {
  PipelineConfig c;
  c.sbm.n = 200;
  c.sbm.blocks = 4;
  c.sbm.p_in = 0.1;
  c.sbm.p_out = 0.01;
  c.analysis.embed_k = 20;
  c.analysis.s = 20;
  c.analysis.fraction = 0.05;
  c.analysis.manifold.exact_below = 1000;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Pipeline, ProducesConsistentShapes) {
  const auto p = run_pipeline(small_pipeline());
  const NodeId n = p.graph.num_nodes();
  EXPECT_TRUE(is_connected(p.graph));
  EXPECT_EQ(p.features.rows(), n);
  EXPECT_EQ(static_cast<NodeId>(p.labels.size()), n);
  EXPECT_EQ(p.clean.rows(), n);
  EXPECT_EQ(p.clean.classes(), 4);
  EXPECT_EQ(p.analysis.scores.node.size(), n);
  EXPECT_EQ(p.analysis.output.graph.num_nodes(), n);
  EXPECT_EQ(p.analysis.report.unstable.size(), fraction_count(0.05, p.analysis.report.ranking.size()));
  EXPECT_EQ(*p.config.analysis.manifold.target_clusters, 40);
}

TEST(Pipeline, DeterministicPerSeed) {
  const auto a = run_pipeline(small_pipeline(5));
  const auto b = run_pipeline(small_pipeline(5));
  EXPECT_EQ(a.analysis.scores.node, b.analysis.scores.node);
  EXPECT_EQ(a.analysis.report.unstable, b.analysis.report.unstable);
}

TEST(Separation, LevelZeroLeavesOutputsUnchanged) {
  const auto p = run_pipeline(small_pipeline());
  SeparationConfig cfg;
  cfg.gaussian_levels = {0.0};
  cfg.dice_levels = {0};
  cfg.repeats = 1;
  const auto rows = separation_experiment(p, cfg);
  ASSERT_EQ(rows.size(), 6u);
  for (const auto& r : rows) {
    EXPECT_DOUBLE_EQ(r.mean_cos, 1.0) << r.kind << " " << r.segment;
    EXPECT_EQ(r.mean_kld, 0.0) << r.kind << " " << r.segment;
  }
}

TEST(Separation, SegmentSizesAndCsvLayout) {
  const auto p = run_pipeline(small_pipeline());
  SeparationConfig cfg;
  cfg.gaussian_levels = {0.5};
  cfg.dice_levels = {5};
  cfg.repeats = 2;
  const auto rows = separation_experiment(p, cfg);
  ASSERT_EQ(rows.size(), 6u);
  const auto& rep = p.analysis.report;
  EXPECT_EQ(rows[0].segment, "stable");
  EXPECT_EQ(rows[0].n, rep.stable.size());
  EXPECT_EQ(rows[1].n, middle_segment(rep).size());
  EXPECT_EQ(rows[4].n, rep.unstable.size());  // DICE middle sample
  EXPECT_EQ(rows[5].segment, "unstable");
  for (const auto& r : rows) {
    EXPECT_GT(r.mean_kld, 0.0);
    EXPECT_LT(r.mean_cos, 1.0);
  }
  const std::string csv = separation_csv(rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "segment,level,mean_cos,mean_kld,n");
  EXPECT_NE(csv.find("\nstable,gaussian:0.5,"), std::string::npos);
  EXPECT_NE(csv.find("\nunstable,dice:5,"), std::string::npos);
  const Json j = separation_json(rows);
  EXPECT_EQ(j.size(), 6u);
  EXPECT_EQ(j[3]["kind"], "dice");
}

TEST(Separation, KldGrowsWithGaussianLevel) {
  const auto p = run_pipeline(small_pipeline());
  SeparationConfig cfg;
  cfg.gaussian_levels = {0.4, 0.8, 1.2};
  cfg.dice_levels = {};
  const auto rows = separation_experiment(p, cfg);
  // The full middle segment (most nodes) is the low-noise monotonicity check.
  EXPECT_LT(rows[1].mean_kld, rows[4].mean_kld);
  EXPECT_LT(rows[4].mean_kld, rows[7].mean_kld);
}

TEST(Separation, MiddleSampleIsDeterministicSubset) {
  const auto p = run_pipeline(small_pipeline());
  const auto& rep = p.analysis.report;
  const auto a = middle_sample(rep, 1), b = middle_sample(rep, 1);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), rep.unstable.size());
  const auto mid = middle_segment(rep);
  for (NodeId x : a) EXPECT_NE(std::find(mid.begin(), mid.end(), x), mid.end());
}
