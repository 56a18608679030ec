#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "manistab/dmd.hpp"
#include "manistab/errors.hpp"
#include "manistab/generators.hpp"
#include "manistab/graph.hpp"
#include "manistab/io.hpp"
#include "manistab/manifold.hpp"
#include "manistab/model_sim.hpp"
#include "manistab/rng.hpp"

namespace manistab {

/// End-to-end stability analysis on a graph, features and model outputs.
struct AnalysisConfig {
  Eigen::Index embed_k = 50;
  Eigen::Index s = 50;
  ManifoldConfig manifold;
  double fraction = 0.01;
  EigenOptions eigen;
};

struct Analysis {
  InputManifold input;
  Manifold output;
  StabilityScores scores;
  StabilityReport report;
};

/// Input manifold from (g, X), output manifold from Y, then DMD scores.
inline Analysis analyze(const SparseGraph& g, const Eigen::MatrixXd& X, const ModelOutputs& Y,
                        const AnalysisConfig& cfg) {
  if (Y.rows() != g.num_nodes()) throw DimensionMismatch("analyze: outputs do not match the graph");
  Analysis a;
  a.input = build_input_manifold(g, X, {cfg.embed_k, cfg.manifold, cfg.eigen});
  a.output = build_output_manifold(Y.Y, cfg.manifold);
  EigenOptions eo = cfg.eigen;
  eo.seed = stream_seed(cfg.manifold.seed, "generalized-eigensolver");
  a.scores = stability_scores(a.input.manifold, a.output, cfg.s, eo);
  a.report = rank_and_select(a.scores.node, cfg.fraction);
  return a;
}

/// Synthetic SBM data, a random-weight surrogate model, and its analysis.
struct PipelineConfig {
  SbmParams sbm;
  SurrogateParams surrogate;
  AnalysisConfig analysis;
  std::uint64_t seed = 0;
};

struct Pipeline {
  PipelineConfig config;
  SparseGraph graph;  // largest component of the SBM graph
  Eigen::MatrixXd features;
  std::vector<int> labels;
  SurrogateWeights weights;
  ModelOutputs clean;
  Analysis analysis;
};

inline Pipeline run_pipeline(PipelineConfig cfg) {
  Pipeline p;
  const auto data = generate_sbm(cfg.sbm, cfg.seed);
  const auto lc = largest_component(data.graph);
  p.graph = lc.graph;
  p.features.resize(p.graph.num_nodes(), data.features.cols());
  for (NodeId i = 0; i < p.graph.num_nodes(); ++i) {
    p.features.row(i) = data.features.row(lc.new_to_old[i]);
    p.labels.push_back(data.labels[lc.new_to_old[i]]);
  }
  cfg.analysis.manifold.seed = cfg.seed;
  if (!cfg.analysis.manifold.resistance_diameter && !cfg.analysis.manifold.target_clusters) {
    cfg.analysis.manifold.target_clusters = 10 * cfg.sbm.blocks;
  }
  p.weights = random_surrogate_weights(p.features.cols(), cfg.sbm.blocks, cfg.surrogate, cfg.seed);
  p.clean = surrogate_forward(p.graph, p.features, p.weights);
  p.analysis = analyze(p.graph, p.features, p.clean, cfg.analysis);
  p.config = cfg;
  return p;
}

// ---------------------------------------------------------------------------
// Separation experiment

struct SeparationConfig {
  std::vector<double> gaussian_levels{0.4, 0.8, 1.2};
  std::vector<std::size_t> dice_levels{10, 20, 40};
  /// Perturbation draws averaged per level.
  int repeats = 5;
};

struct SegmentRow {
  std::string kind;     // "gaussian" or "dice"
  std::string segment;  // "stable", "mid" or "unstable"
  double level = 0.0;
  double mean_cos = 1.0;
  double mean_kld = 0.0;
  std::size_t n = 0;  // nodes in the segment
};

inline std::uint64_t level_seed(std::uint64_t seed, const std::string& kind, double level, int repeat) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s/%.17g/%d", kind.c_str(), level, repeat);
  return stream_seed(seed, buf);
}

/// A node sample of the middle segment as large as the unstable set; DICE
/// edits target the evaluated nodes, so every segment sees the same number
/// of evaluated nodes and the same per-node attack intensity.
inline std::vector<NodeId> middle_sample(const StabilityReport& rep, std::uint64_t seed) {
  std::vector<NodeId> mid = middle_segment(rep);
  Rng rng = make_rng(seed, "mid-sample");
  std::shuffle(mid.begin(), mid.end(), rng);
  mid.resize(std::min(mid.size(), rep.unstable.size()));
  std::sort(mid.begin(), mid.end());
  return mid;
}

/// For each level: perturb, rerun the surrogate, and average cosine and KLD
/// over the stable, middle and unstable segments. Gaussian noise hits every
/// node and the middle segment is evaluated in full; DICE edits touch only
/// the evaluated nodes (stable, an equal-size middle sample, unstable).
inline std::vector<SegmentRow> separation_experiment(const Pipeline& p, const SeparationConfig& cfg) {
  const auto& rep = p.analysis.report;
  const std::vector<NodeId> mid_all = middle_segment(rep);
  const std::vector<NodeId> mid_dice = middle_sample(rep, p.config.seed);
  std::vector<NodeId> dice_targets = rep.stable;
  dice_targets.insert(dice_targets.end(), mid_dice.begin(), mid_dice.end());
  dice_targets.insert(dice_targets.end(), rep.unstable.begin(), rep.unstable.end());

  std::vector<SegmentRow> rows;
  auto run = [&](const std::string& kind, double level, const std::vector<NodeId>& mid, auto&& perturbed) {
    const std::vector<const std::vector<NodeId>*> segs{&rep.stable, &mid, &rep.unstable};
    const char* names[] = {"stable", "mid", "unstable"};
    std::vector<PairMetrics> acc(3, PairMetrics{0.0, 0.0});
    for (int r = 0; r < cfg.repeats; ++r) {
      const ModelOutputs Yp = perturbed(level_seed(p.config.seed, kind, level, r));
      for (std::size_t s = 0; s < 3; ++s) {
        const PairMetrics m = mean_metrics(eval_pair(p.clean, Yp, *segs[s]));
        acc[s].cos += m.cos / cfg.repeats;
        acc[s].kld += m.kld / cfg.repeats;
      }
    }
    for (std::size_t s = 0; s < 3; ++s)
      rows.push_back({kind, names[s], level, acc[s].cos, acc[s].kld, segs[s]->size()});
  };
  if (cfg.repeats < 1) throw ValidationError("separation_experiment: repeats must be >= 1");
  for (double level : cfg.gaussian_levels) {
    run("gaussian", level, mid_all, [&](std::uint64_t seed) {
      return surrogate_forward(p.graph, perturb_gaussian(p.features, level, seed), p.weights);
    });
  }
  for (std::size_t level : cfg.dice_levels) {
    run("dice", static_cast<double>(level), mid_dice, [&](std::uint64_t seed) {
      const auto d = perturb_dice(p.graph, p.labels, level, seed, dice_targets);
      return surrogate_forward(d.graph, p.features, p.weights);
    });
  }
  return rows;
}

/// CSV "segment,level,mean_cos,mean_kld,n"; the level column carries the
/// perturbation kind, e.g. "gaussian:0.4" or "dice:20".
inline std::string separation_csv(const std::vector<SegmentRow>& rows) {
  std::string out = "segment,level,mean_cos,mean_kld,n\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%s:%.12g,%.12g,%.12g,%zu\n", r.segment.c_str(), r.kind.c_str(),
                  r.level, r.mean_cos, r.mean_kld, r.n);
    out += buf;
  }
  return out;
}

inline Json separation_json(const std::vector<SegmentRow>& rows) {
  Json a = Json::array();
  for (const auto& r : rows) {
    Json j;
    j["kind"] = r.kind;
    j["segment"] = r.segment;
    j["level"] = json_number(r.level);
    j["mean_cos"] = json_number(r.mean_cos);
    j["mean_kld"] = json_number(r.mean_kld);
    j["n"] = r.n;
    a.push_back(std::move(j));
  }
  return a;
}

}  // namespace manistab
