// manistab command-line tool: manifold construction, stability scoring,
// perturbation experiments and graph enhancement on edge-list files.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "manistab/manistab.hpp"

namespace {

using namespace manistab;

// ---------------------------------------------------------------------------
// Shared plumbing

/// Fills options not given on the command line from a key=value file. Keys are
/// long option names without dashes; '_' and '-' are interchangeable.
void apply_config(CLI::App& sub, const std::string& path) {
  if (path.empty()) return;
  for (const auto& [key, value] : read_key_values(path)) {
    std::string name = key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = nullptr;
    try {
      opt = sub.get_option("--" + name);
    } catch (const CLI::OptionNotFound&) {
      throw ValidationError(path + ": unknown key '" + key + "' for command " + sub.get_name());
    }
    if (name == "config" || name == "help") throw ValidationError(path + ": key '" + key + "' not allowed");
    if (opt->count() > 0) continue;  // flags win
    opt->add_result(value);
    try {
      opt->run_callback();
    } catch (const CLI::Error& e) {
      throw ValidationError(path + ": bad value for '" + key + "': " + e.what());
    }
  }
}

/// Every effective option of the command, in declaration order.
Json config_snapshot(const CLI::App& sub) {
  Json j;
  j["command"] = sub.get_name();
  for (const CLI::Option* o : sub.get_options()) {
    if (o->get_lnames().empty()) continue;
    const std::string& name = o->get_lnames().front();
    if (name == "help" || name == "config" || name == "out") continue;
    std::string v;
    if (o->count() > 0) {
      for (const auto& r : o->results()) v += (v.empty() ? "" : ",") + r;
    } else {
      v = o->get_default_str();
    }
    j[name] = v;
  }
  return j;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw ValidationError("missing required option " + flag);
}

struct LoadedGraph {
  SparseGraph graph;                       // largest component, dense ids
  std::vector<std::int64_t> original_ids;  // dense id -> id in the file
  std::size_t dropped_nodes = 0;
};

/// Largest connected component of an edge-list file.
LoadedGraph load_component(const std::string& path) {
  const auto file = read_edge_list(path);
  if (file.graph.num_nodes() == 0) throw ValidationError(path + ": no edges");
  const auto lc = largest_component(file.graph);
  LoadedGraph out;
  out.graph = lc.graph;
  for (NodeId p : lc.new_to_old) out.original_ids.push_back(file.original_ids[p]);
  out.dropped_nodes = static_cast<std::size_t>(file.graph.num_nodes() - lc.graph.num_nodes());
  return out;
}

/// The whole file graph with node p = file id p, on `rows` nodes.
SparseGraph load_indexed(const std::string& path, Eigen::Index rows, const std::string& what) {
  const auto file = read_edge_list(path);
  std::vector<Edge> edges = file.graph.edges();
  for (auto& e : edges) {
    e.u = static_cast<NodeId>(file.original_ids[e.u]);
    e.v = static_cast<NodeId>(file.original_ids[e.v]);
    if (e.u >= rows || e.v >= rows) {
      throw DimensionMismatch(path + ": node id " + std::to_string(std::max(e.u, e.v)) + " has no row in " +
                              what + " (" + std::to_string(rows) + " rows)");
    }
  }
  return SparseGraph(static_cast<NodeId>(rows), std::move(edges));
}

Eigen::MatrixXd load_rows(const std::string& path, const std::vector<std::int64_t>& ids) {
  return align_rows(read_matrix(path), ids, path);
}

std::vector<int> load_label_rows(const std::string& path, const std::vector<std::int64_t>& ids) {
  return align_rows(read_labels(path), ids, path);
}

Eigen::Index distinct_count(const std::vector<int>& v) {
  return static_cast<Eigen::Index>(std::set<int>(v.begin(), v.end()).size());
}

Json ids_json(const std::vector<std::int64_t>& ids) { return Json(ids); }

std::vector<std::int64_t> ids_from_provenance(const Json& sidecar) {
  if (sidecar.contains("provenance") && sidecar["provenance"].contains("original_ids")) {
    return sidecar["provenance"]["original_ids"].get<std::vector<std::int64_t>>();
  }
  return {};
}

std::vector<std::int64_t> identity_ids(NodeId n) {
  std::vector<std::int64_t> ids(static_cast<std::size_t>(n));
  for (NodeId i = 0; i < n; ++i) ids[i] = i;
  return ids;
}

struct ManifoldFlags {
  int knn = 10;
  double diameter = 0.0;  // 0 = automatic
  double rho_threshold = 0.9;
  Eigen::Index target_clusters = 0;  // 0 = from labels, else n / 50
  int krylov_m = 10;
  NodeId exact_below = 500;

  void add(CLI::App* sub) {
    sub->add_option("--knn", knn, "Neighbours per node in the kNN graph");
    sub->add_option("--diameter", diameter, "Resistance diameter for clustering (0 = automatic)");
    sub->add_option("--rho-threshold", rho_threshold, "Edge sampling ratio kept inside clusters");
    sub->add_option("--target-clusters", target_clusters, "Cluster count for the automatic diameter");
    sub->add_option("--krylov-m", krylov_m, "Krylov dimension of the resistance estimator");
    sub->add_option("--exact-below", exact_below, "Use exact resistances below this node count");
  }

  ManifoldConfig config(std::uint64_t seed, std::optional<Eigen::Index> classes) const {
    ManifoldConfig c;
    c.knn_k = knn;
    if (diameter > 0.0) c.resistance_diameter = diameter;
    if (target_clusters > 0) c.target_clusters = target_clusters;
    else if (classes) c.target_clusters = heuristic_dimension(*classes);
    c.krylov_m = krylov_m;
    c.rho_keep_threshold = rho_threshold;
    c.exact_below = exact_below;
    c.seed = seed;
    return c;
  }
};

struct Command {
  CLI::App* app = nullptr;
  std::function<void()> run;
};

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

/// Adds --config, --seed and --threads to a subcommand.
void add_globals(CLI::App* sub, Globals& g) {
  sub->add_option("--config", g.config, "key=value file; flags override its entries");
  sub->add_option("--seed", g.seed, "Seed for every random stream");
  sub->add_option("--threads", g.threads, "Worker thread cap (0 = hardware)");
}

void start(CLI::App* sub, const Globals& g) {
  apply_config(*sub, g.config);
  if (g.threads > 0) thread_cap() = g.threads;
}

// ---------------------------------------------------------------------------
// gen

Command add_gen(CLI::App& app) {
  struct Opts {
    Globals g;
    SbmParams sbm;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("gen", "Generate a stochastic block model graph with features and labels");
  add_globals(sub, o->g);
  sub->add_option("--n", o->sbm.n, "Nodes");
  sub->add_option("--blocks", o->sbm.blocks, "Blocks (classes)");
  sub->add_option("--p-in", o->sbm.p_in, "Edge probability inside a block");
  sub->add_option("--p-out", o->sbm.p_out, "Edge probability across blocks");
  sub->add_option("--feature-dim", o->sbm.feature_dim, "Feature columns");
  sub->add_option("--separation", o->sbm.feature_separation, "Scale of the block feature means");
  sub->add_option("--out", o->out, "Output prefix");
  return {sub, [o, sub] {
            start(sub, o->g);
            require(o->out, "--out");
            const auto d = generate_sbm(o->sbm, o->g.seed);
            write_edge_list(o->out + ".edges", d.graph);
            write_matrix_csv(o->out + ".features.csv", d.features);
            write_labels(o->out + ".labels", d.labels);
            Json j;
            j["config"] = config_snapshot(*sub);
            j["num_nodes"] = d.graph.num_nodes();
            j["num_edges"] = d.graph.num_edges();
            j["connected"] = is_connected(d.graph);
            write_json(o->out + ".json", j);
          }};
}

// ---------------------------------------------------------------------------
// embed

Command add_embed(CLI::App& app) {
  struct Opts {
    Globals g;
    std::string graph, labels, out;
    Eigen::Index k = 50;
    std::size_t pairs = 100;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("embed", "Spectral embedding, eigengap report and resistance correlation");
  add_globals(sub, o->g);
  sub->add_option("--graph", o->graph, "Edge-list file");
  sub->add_option("--labels", o->labels, "Labels file (enables the 10x classes heuristic)");
  sub->add_option("--k", o->k, "Embedding dimension");
  sub->add_option("--pairs", o->pairs, "Random pairs for the resistance correlation (0 = skip)");
  sub->add_option("--out", o->out, "Output prefix");
  return {sub, [o, sub] {
            start(sub, o->g);
            require(o->graph, "--graph");
            require(o->out, "--out");
            const auto lg = load_component(o->graph);
            const NodeId n = lg.graph.num_nodes();
            if (n < 3) throw ValidationError("embed: need at least 3 connected nodes");
            const Eigen::Index k = std::min<Eigen::Index>(o->k, n - 2);
            if (k < 1) throw ValidationError("embed: --k must be >= 1");
            std::optional<Eigen::Index> classes;
            if (!o->labels.empty()) classes = distinct_count(load_label_rows(o->labels, lg.original_ids));
            EigenOptions eo;
            eo.seed = stream_seed(o->g.seed, "eigensolver");
            const auto emb = spectral_embed(lg.graph, k, eo);
            const auto gap = eigengap_report(lg.graph, k, classes, eo);
            write_sgmx(o->out + ".sgmx", emb.U);
            Json j;
            j["config"] = config_snapshot(*sub);
            j["num_nodes"] = n;
            j["dropped_nodes"] = lg.dropped_nodes;
            j["k"] = k;
            j["eigenvalues"] = json_array(emb.eigenvalues);
            Json gj;
            gj["eigenvalues"] = json_array(gap.eigenvalues);
            gj["ratios"] = json_array(gap.ratios);
            gj["suggested_k"] = gap.suggested_k;
            gj["heuristic_k"] = gap.heuristic_k ? Json(*gap.heuristic_k) : Json(nullptr);
            j["eigengap"] = std::move(gj);
            const std::size_t max_pairs = static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2;
            const std::size_t pairs = std::min(o->pairs, max_pairs);
            j["resistance_cc"] = pairs >= 3 ? json_number(resistance_correlation(lg.graph, emb, pairs, o->g.seed))
                                            : Json(nullptr);
            j["pairs"] = pairs;
            j["original_ids"] = ids_json(lg.original_ids);
            write_json(o->out + ".json", j);
          }};
}

// ---------------------------------------------------------------------------
// manifold

Command add_manifold(CLI::App& app) {
  struct Opts {
    Globals g;
    ManifoldFlags mf;
    std::string graph, features, labels, outputs, out;
    Eigen::Index k = 50;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("manifold", "Build the input manifold (and the output manifold with --outputs)");
  add_globals(sub, o->g);
  sub->add_option("--graph", o->graph, "Edge-list file");
  sub->add_option("--features", o->features, "Feature matrix (CSV or SGMX), one row per node id");
  sub->add_option("--labels", o->labels, "Labels file (cluster target 10x classes)");
  sub->add_option("--outputs", o->outputs, "Model outputs (CSV or SGMX), one row per node id");
  sub->add_option("--k", o->k, "Spectral embedding dimension");
  o->mf.add(sub);
  sub->add_option("--out", o->out, "Output prefix");
  return {sub, [o, sub] {
            start(sub, o->g);
            require(o->graph, "--graph");
            require(o->out, "--out");
            const auto lg = load_component(o->graph);
            const NodeId n = lg.graph.num_nodes();
            Eigen::MatrixXd X(n, 0);
            if (!o->features.empty()) X = load_rows(o->features, lg.original_ids);
            std::optional<Eigen::Index> classes;
            if (!o->labels.empty()) classes = distinct_count(load_label_rows(o->labels, lg.original_ids));
            const ManifoldConfig mc = o->mf.config(o->g.seed, classes);
            const auto in = build_input_manifold(lg.graph, X, {o->k, mc, {}});
            Json prov;
            prov["config"] = config_snapshot(*sub);
            prov["embedding_eigenvalues"] = json_array(in.embedding.eigenvalues);
            prov["original_ids"] = ids_json(lg.original_ids);
            write_manifold(o->out + ".input", in.manifold, prov);
            Json j;
            j["config"] = prov["config"];
            j["input"] = {{"num_edges", in.manifold.graph.num_edges()},
                          {"num_clusters", in.manifold.num_clusters()},
                          {"inter_edges", in.manifold.inter_edges.size()},
                          {"diameter", json_number(in.manifold.diameter)}};
            if (!o->outputs.empty()) {
              const ModelOutputs Y = make_outputs(load_rows(o->outputs, lg.original_ids), o->outputs);
              const auto om = build_output_manifold(Y.Y, mc);
              write_manifold(o->out + ".output", om, prov);
              j["output"] = {{"num_edges", om.graph.num_edges()},
                             {"num_clusters", om.num_clusters()},
                             {"inter_edges", om.inter_edges.size()},
                             {"diameter", json_number(om.diameter)}};
            }
            write_json(o->out + ".json", j);
          }};
}

// ---------------------------------------------------------------------------
// score

Command add_score(CLI::App& app) {
  struct Opts {
    Globals g;
    std::string input, output, outputs, out;
    Eigen::Index s = 50;
    double fraction = 0.01;
    NodeId oracle_cap = static_cast<NodeId>(kDefaultOracleCap);
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("score", "Stability scores from an input and an output manifold");
  add_globals(sub, o->g);
  sub->add_option("--input-manifold", o->input, "Input manifold prefix (from 'manifold')");
  sub->add_option("--output-manifold", o->output, "Output manifold prefix");
  sub->add_option("--outputs", o->outputs, "Model outputs; the output manifold is built with the input's settings");
  sub->add_option("--s", o->s, "Generalized eigenvectors in the stability subspace");
  sub->add_option("--fraction", o->fraction, "Fraction reported as stable and as unstable");
  sub->add_option("--oracle-cap", o->oracle_cap, "Largest n for the exhaustive maximum distance ratio");
  sub->add_option("--out", o->out, "Report JSON path");
  return {sub, [o, sub] {
            start(sub, o->g);
            require(o->input, "--input-manifold");
            require(o->out, "--out");
            if (o->output.empty() == o->outputs.empty()) {
              throw ValidationError("score: give exactly one of --output-manifold and --outputs");
            }
            const Manifold mx = read_manifold(o->input);
            std::vector<std::int64_t> ids = ids_from_provenance(read_json(o->input + ".json"));
            if (ids.empty()) ids = identity_ids(mx.graph.num_nodes());
            Manifold my;
            if (!o->output.empty()) {
              my = read_manifold(o->output);
            } else {
              const ModelOutputs Y = make_outputs(load_rows(o->outputs, ids), o->outputs);
              my = build_output_manifold(Y.Y, mx.config);
            }
            EigenOptions eo;
            eo.seed = stream_seed(o->g.seed, "generalized-eigensolver");
            const auto scores = stability_scores(mx, my, o->s, eo);
            const auto rep = rank_and_select(scores.node, o->fraction);
            ReportExtras x;
            x.clusters = &mx.clusters;
            x.original_ids = ids;
            x.lambda_max = lipschitz_bound(scores.spectrum);
            x.dmd_max = dmd_max(mx.graph, my.graph, stream_seed(o->g.seed, "dmd"), o->oracle_cap);
            x.eigenvalues = scores.spectrum.values;
            x.config = config_snapshot(*sub);
            x.config["s_effective"] = scores.s;
            write_json(o->out, report_json(rep, x));
          }};
}

// ---------------------------------------------------------------------------
// forward

Command add_forward(CLI::App& app) {
  struct Opts {
    Globals g;
    std::string graph, features, labels, out;
    Eigen::Index classes = 0;
    SurrogateParams prm;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("forward", "Run the random-weight surrogate model");
  add_globals(sub, o->g);
  sub->add_option("--graph", o->graph, "Edge-list file");
  sub->add_option("--features", o->features, "Feature matrix, one row per node id");
  sub->add_option("--labels", o->labels, "Labels file (sets the class count)");
  sub->add_option("--classes", o->classes, "Output classes (overrides the labels' count)");
  sub->add_option("--hidden", o->prm.hidden, "Hidden width");
  sub->add_option("--gain", o->prm.gain, "Weight scale");
  sub->add_option("--out", o->out, "Output CSV path");
  return {sub, [o, sub] {
            start(sub, o->g);
            require(o->graph, "--graph");
            require(o->features, "--features");
            require(o->out, "--out");
            const Eigen::MatrixXd X = read_matrix(o->features);
            Eigen::Index classes = o->classes;
            if (classes == 0 && !o->labels.empty()) {
              const auto labels = read_labels(o->labels);
              classes = *std::max_element(labels.begin(), labels.end()) + 1;
            }
            if (classes < 1) throw ValidationError("forward: give --classes or --labels");
            const SparseGraph g = load_indexed(o->graph, X.rows(), o->features);
            const auto w = random_surrogate_weights(X.cols(), classes, o->prm, o->g.seed);
            write_matrix_csv(o->out, surrogate_forward(g, X, w).Y);
          }};
}

// ---------------------------------------------------------------------------
// perturb

Command add_perturb(CLI::App& app) {
  struct Opts {
    Globals g;
    std::string graph, features, labels, kind = "gaussian", out;
    double level = 0.0;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("perturb", "Gaussian feature noise or a DICE edge attack");
  add_globals(sub, o->g);
  sub->add_option("--graph", o->graph, "Edge-list file (dice)");
  sub->add_option("--features", o->features, "Feature matrix (gaussian)");
  sub->add_option("--labels", o->labels, "Labels file (dice)");
  sub->add_option("--kind", o->kind, "gaussian or dice")->check(CLI::IsMember({"gaussian", "dice"}));
  sub->add_option("--level", o->level, "Noise level, or edge pairs for dice");
  sub->add_option("--out", o->out, "Output prefix");
  return {sub, [o, sub] {
            start(sub, o->g);
            require(o->out, "--out");
            Json j;
            j["config"] = config_snapshot(*sub);
            if (o->kind == "gaussian") {
              require(o->features, "--features");
              write_matrix_csv(o->out + ".features.csv", perturb_gaussian(read_matrix(o->features), o->level, o->g.seed));
            } else {
              require(o->graph, "--graph");
              require(o->labels, "--labels");
              if (!(o->level >= 0.0) || o->level != std::floor(o->level)) {
                throw ValidationError("perturb: dice level must be a non-negative integer");
              }
              const auto labels = read_labels(o->labels);
              const SparseGraph g = load_indexed(o->graph, static_cast<Eigen::Index>(labels.size()), o->labels);
              const auto d = perturb_dice(g, labels, static_cast<std::size_t>(o->level), o->g.seed);
              write_edge_list(o->out + ".edges", d.graph);
              auto pairs = [](const std::vector<std::pair<NodeId, NodeId>>& v) {
                Json a = Json::array();
                for (auto [u, w] : v) a.push_back({u, w});
                return a;
              };
              j["added"] = pairs(d.plan.added);
              j["removed"] = pairs(d.plan.removed);
              j["skipped_disconnecting"] = d.plan.skipped_disconnecting;
            }
            write_json(o->out + ".json", j);
          }};
}

// ---------------------------------------------------------------------------
// eval

Command add_eval(CLI::App& app) {
  struct Opts {
    Globals g;
    std::string report, clean, perturbed, level = "0", out;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("eval", "Mean cosine similarity and KLD per stability segment");
  add_globals(sub, o->g);
  sub->add_option("--report", o->report, "Report JSON from 'score'");
  sub->add_option("--clean", o->clean, "Clean model outputs");
  sub->add_option("--perturbed", o->perturbed, "Perturbed model outputs");
  sub->add_option("--level", o->level, "Label for the level column, e.g. gaussian:0.4");
  sub->add_option("--out", o->out, "Output prefix (.csv and .json)");
  return {sub, [o, sub] {
            start(sub, o->g);
            require(o->report, "--report");
            require(o->clean, "--clean");
            require(o->perturbed, "--perturbed");
            require(o->out, "--out");
            const Json rep = read_json(o->report);
            const ModelOutputs clean = load_outputs(o->clean);
            const ModelOutputs pert = load_outputs(o->perturbed, clean.rows());
            auto to_nodes = [&](const Json& a) {
              std::vector<NodeId> v;
              for (const auto& x : a) {
                const auto id = x.get<std::int64_t>();
                if (id < 0 || id >= clean.rows()) {
                  throw DimensionMismatch(o->clean + ": no row for node id " + std::to_string(id));
                }
                v.push_back(static_cast<NodeId>(id));
              }
              return v;
            };
            const auto stable = to_nodes(rep.at("stable"));
            const auto unstable = to_nodes(rep.at("unstable"));
            const std::set<std::int64_t> ends(stable.begin(), stable.end());
            const std::set<std::int64_t> ends_u(unstable.begin(), unstable.end());
            Json mid_ids = Json::array();
            for (const auto& node : rep.at("nodes")) {
              if (node.at("rank").is_null()) continue;
              const auto id = node.at("id").get<std::int64_t>();
              if (!ends.count(id) && !ends_u.count(id)) mid_ids.push_back(id);
            }
            const auto mid = to_nodes(mid_ids);
            std::vector<SegmentRow> rows;
            const std::vector<std::pair<std::string, const std::vector<NodeId>*>> segs{
                {"stable", &stable}, {"mid", &mid}, {"unstable", &unstable}};
            std::string csv = "segment,level,mean_cos,mean_kld,n\n";
            Json table = Json::array();
            char buf[256];
            for (const auto& [name, nodes] : segs) {
              const PairMetrics m = mean_metrics(eval_pair(clean, pert, *nodes));
              std::snprintf(buf, sizeof buf, "%s,%s,%.12g,%.12g,%zu\n", name.c_str(), o->level.c_str(), m.cos, m.kld,
                            nodes->size());
              csv += buf;
              table.push_back({{"segment", name},
                               {"level", o->level},
                               {"mean_cos", json_number(m.cos)},
                               {"mean_kld", json_number(m.kld)},
                               {"n", nodes->size()}});
            }
            std::ofstream(o->out + ".csv") << csv;
            Json j;
            j["config"] = config_snapshot(*sub);
            j["segments"] = std::move(table);
            write_json(o->out + ".json", j);
          }};
}

// ---------------------------------------------------------------------------
// enhance

Command add_enhance(CLI::App& app) {
  struct Opts {
    Globals g;
    std::string graph, manifold, out;
    double scale = 1.0;
  };
  auto o = std::make_shared<Opts>();
  auto* sub = app.add_subcommand("enhance", "Insert the input manifold's inter-cluster edges into the graph");
  add_globals(sub, o->g);
  sub->add_option("--graph", o->graph, "Edge-list file the manifold was built from");
  sub->add_option("--manifold", o->manifold, "Input manifold prefix");
  sub->add_option("--scale", o->scale, "Multiplier on inserted edge weights");
  sub->add_option("--out", o->out, "Output prefix");
  return {sub, [o, sub] {
            start(sub, o->g);
            require(o->graph, "--graph");
            require(o->manifold, "--manifold");
            require(o->out, "--out");
            const auto lg = load_component(o->graph);
            const Manifold m = read_manifold(o->manifold);
            const auto ids = ids_from_provenance(read_json(o->manifold + ".json"));
            if (m.graph.num_nodes() != lg.graph.num_nodes() || (!ids.empty() && ids != lg.original_ids)) {
              throw NodeSetMismatch("enhance: manifold nodes do not match the graph's largest component");
            }
            const auto extra = inter_cluster_edges(m);
            const SparseGraph ge = enhance(lg.graph, extra, o->scale);
            EigenOptions eo;
            eo.seed = stream_seed(o->g.seed, "eigensolver");
            write_edge_list(o->out + ".edges", ge, lg.original_ids);
            Json j;
            j["config"] = config_snapshot(*sub);
            j["inserted"] = extra.size();
            j["num_edges_original"] = lg.graph.num_edges();
            j["num_edges_enhanced"] = ge.num_edges();
            j["lambda2_original"] = json_number(algebraic_connectivity(lg.graph, eo));
            j["lambda2_enhanced"] = json_number(algebraic_connectivity(ge, eo));
            write_json(o->out + ".json", j);
          }};
}

// ---------------------------------------------------------------------------
// experiment

Command add_experiment(CLI::App& app) {
  struct Opts {
    Globals g;
    PipelineConfig p;
    SeparationConfig sep;
    EnhancementConfig enh;
    ManifoldFlags mf;
    std::string out;
  };
  auto o = std::make_shared<Opts>();
  o->mf.exact_below = 2000;
  auto* sub = app.add_subcommand("experiment", "SBM + surrogate separation and enhancement experiments");
  add_globals(sub, o->g);
  sub->add_option("--n", o->p.sbm.n, "SBM nodes");
  sub->add_option("--blocks", o->p.sbm.blocks, "SBM blocks");
  sub->add_option("--p-in", o->p.sbm.p_in, "Edge probability inside a block");
  sub->add_option("--p-out", o->p.sbm.p_out, "Edge probability across blocks");
  sub->add_option("--feature-dim", o->p.sbm.feature_dim, "Feature columns");
  sub->add_option("--hidden", o->p.surrogate.hidden, "Surrogate hidden width");
  sub->add_option("--gain", o->p.surrogate.gain, "Surrogate weight scale");
  sub->add_option("--k", o->p.analysis.embed_k, "Spectral embedding dimension");
  sub->add_option("--s", o->p.analysis.s, "Generalized eigenvectors in the stability subspace");
  sub->add_option("--fraction", o->p.analysis.fraction, "Stable/unstable fraction");
  o->mf.add(sub);
  sub->add_option("--gaussian-levels", o->sep.gaussian_levels, "Gaussian noise levels");
  sub->add_option("--dice-levels", o->sep.dice_levels, "DICE edge-pair levels");
  sub->add_option("--repeats", o->sep.repeats, "Perturbation draws averaged per level");
  sub->add_option("--enhance-level", o->enh.dice_level, "DICE level of the enhancement comparison");
  sub->add_option("--scale", o->enh.weight_scale, "Multiplier on inserted edge weights");
  sub->add_option("--out", o->out, "Output prefix");
  return {sub, [o, sub] {
            start(sub, o->g);
            require(o->out, "--out");
            PipelineConfig pc = o->p;
            pc.seed = o->g.seed;
            pc.analysis.manifold = o->mf.config(o->g.seed, std::nullopt);
            o->enh.repeats = o->sep.repeats;
            const Pipeline p = run_pipeline(pc);
            const auto rows = separation_experiment(p, o->sep);
            const auto enh = enhancement_experiment(p, o->enh);
            std::ofstream(o->out + ".separation.csv") << separation_csv(rows);
            Json j;
            j["config"] = config_snapshot(*sub);
            j["num_nodes"] = p.graph.num_nodes();
            j["stable"] = p.analysis.report.stable;
            j["unstable"] = p.analysis.report.unstable;
            j["separation"] = separation_json(rows);
            j["enhancement"] = {{"inserted", enh.inserted},
                                {"unstable_nodes", enh.unstable_nodes},
                                {"kld_original", json_number(enh.kld_original)},
                                {"kld_enhanced", json_number(enh.kld_enhanced)},
                                {"cos_original", json_number(enh.cos_original)},
                                {"cos_enhanced", json_number(enh.cos_enhanced)},
                                {"lambda2_original", json_number(enh.lambda2_original)},
                                {"lambda2_enhanced", json_number(enh.lambda2_enhanced)}};
            write_json(o->out + ".json", j);
          }};
}

// ---------------------------------------------------------------------------
// selftest

/// A connected random weighted graph from the SBM generator.
SparseGraph selftest_graph(NodeId n, std::uint64_t seed) {
  SbmParams prm;
  prm.n = n;
  prm.blocks = 2;
  prm.p_in = 0.3;
  prm.p_out = 0.1;
  prm.feature_dim = 0;
  const auto lc = largest_component(generate_sbm(prm, seed).graph);
  Rng rng = make_rng(seed, "selftest-weights");
  std::uniform_real_distribution<double> w(0.5, 2.0);
  std::vector<Edge> e = lc.graph.edges();
  for (auto& x : e) x.w = w(rng);
  return SparseGraph(lc.graph.num_nodes(), std::move(e));
}

/// The same edges with fresh random weights in [0.2, 5].
SparseGraph reweighted(const SparseGraph& g, std::uint64_t seed) {
  Rng rng = make_rng(seed, "selftest-reweight");
  std::uniform_real_distribution<double> w(0.2, 5.0);
  std::vector<Edge> e = g.edges();
  for (auto& x : e) x.w = w(rng);
  return SparseGraph(g.num_nodes(), std::move(e));
}

int run_selftest() {
  int failures = 0;
  auto check = [&](const std::string& name, const std::function<std::string()>& body) {
    std::string why;
    try {
      why = body();
    } catch (const std::exception& e) {
      why = std::string("exception: ") + e.what();
    }
    std::cout << (why.empty() ? "PASS " : "FAIL ") << name << (why.empty() ? "" : ": " + why) << '\n';
    if (!why.empty()) ++failures;
  };
  auto fmt = [](double a, double b) {
    std::ostringstream s;
    s.precision(12);
    s << a << " vs " << b;
    return s.str();
  };

  check("path resistance equals hop distance", [&] {
    const SparseGraph g(5, {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}, {3, 4, 1}});
    const double r = exact_resistance(g, 0, 4);
    return std::abs(r - 4.0) < 1e-9 ? "" : fmt(r, 4.0);
  });
  check("full-spectrum embedding distance equals exact resistance", [&] {
    const auto g = selftest_graph(24, 1);
    const auto emb = spectral_embed(g, g.num_nodes() - 1);
    double worst = 0.0;
    for (NodeId p = 0; p < g.num_nodes(); ++p)
      for (NodeId q = p + 1; q < g.num_nodes(); ++q)
        worst = std::max(worst, std::abs(approx_resistance(emb, p, q) - exact_resistance(g, p, q)));
    return worst < 1e-6 ? "" : "max error " + std::to_string(worst);
  });
  check("identical manifolds give distance ratio 1 everywhere", [&] {
    const auto g = selftest_graph(20, 2);
    const auto spectrum = generalized_eigenpairs(laplacian(g), laplacian(g), 3);
    const double d = dmd_pair(g, g, 0, g.num_nodes() - 1);
    return std::abs(d - 1.0) < 1e-9 && std::abs(spectrum.values[0] - 1.0) < 1e-8 ? "" : fmt(d, spectrum.values[0]);
  });
  check("distance ratios bounded by the top generalized eigenvalue (dense oracle)", [&] {
    const auto gx = selftest_graph(30, 3), gy = reweighted(gx, 4);
    const double bound = lipschitz_bound(generalized_eigenpairs(laplacian(gx), laplacian(gy), 2));
    const double dense = dense_generalized_eigenvalues(laplacian(gx), laplacian(gy))[0];
    const double top = dmd_max(gx, gy).value;
    if (std::abs(bound - dense) > 1e-6 * std::max(1.0, dense)) return fmt(bound, dense);
    return top <= bound + 1e-6 ? std::string() : fmt(top, bound);
  });
  check("cut mapping distortion bounded below by 1 / lambda_max", [&] {
    const auto gx = selftest_graph(8, 5), gy = reweighted(gx, 6);
    const NodeId n = gx.num_nodes();
    const double lo = 1.0 / dense_generalized_eigenvalues(laplacian(gx), laplacian(gy))[0];
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t mask = 1; mask + 1 < (1u << n); ++mask) {
      std::vector<NodeId> S;
      for (NodeId p = 0; p < n; ++p)
        if (mask >> p & 1u) S.push_back(p);
      best = std::min(best, cmd(gx, gy, S));
    }
    return best >= lo - 1e-9 ? "" : fmt(best, lo);
  });
  check("edge sampling ratios within (0, 1] and Foster's sum", [&] {
    const auto g = selftest_graph(30, 7);
    const auto r = exact_edge_resistances(g);
    const auto rho = edge_sampling_ratios(g, r, false);
    double foster = 0.0;
    for (std::size_t i = 0; i < g.num_edges(); ++i) {
      if (!(rho[i] > 0.0 && rho[i] <= 1.0 + 1e-9)) return "rho " + std::to_string(rho[i]);
      foster += g.edges()[i].w * r[i];
    }
    return std::abs(foster - (g.num_nodes() - 1)) < 1e-6 ? "" : fmt(foster, g.num_nodes() - 1.0);
  });
  check("KL divergence closed form", [&] {
    Eigen::MatrixXd a(1, 2), b(1, 2);
    a << 0.5, 0.5;
    b << 0.7, 0.3;
    const double k = eval_pair(make_outputs(a), make_outputs(b))[0].kld;
    const double expect = 0.5 * std::log(0.5 / 0.7) + 0.5 * std::log(0.5 / 0.3);
    return std::abs(k - expect) < 1e-12 ? "" : fmt(k, expect);
  });
  check("surrogate on zero features is uniform", [&] {
    const auto g = selftest_graph(10, 8);
    const auto Y = surrogate_forward(g, Eigen::MatrixXd::Zero(g.num_nodes(), 3),
                                     random_surrogate_weights(3, 4, {}, 1));
    return Y.Y.isApproxToConstant(0.25, 1e-12) ? "" : "rows not uniform";
  });
  check("DICE on K4 minus an edge", [&] {
    const SparseGraph g(4, {{0, 1, 1}, {0, 3, 1}, {1, 2, 1}, {1, 3, 1}, {2, 3, 1}});
    const auto d = perturb_dice(g, {0, 0, 1, 1}, 1, 0);
    const bool ok = d.plan.added.size() == 1 && d.plan.added[0] == std::pair<NodeId, NodeId>{0, 2} &&
                    d.plan.removed.size() == 1 && d.graph.num_edges() == 5 && is_connected(d.graph);
    return ok ? "" : "unexpected plan";
  });
  check("stability scores are deterministic", [&] {
    const auto gx = selftest_graph(40, 9), gy = reweighted(gx, 10);
    const auto a = stability_scores(gx, gy, 5), b = stability_scores(gx, gy, 5);
    return a.node == b.node ? std::string() : std::string("scores differ between runs");
  });
  std::cout << (failures == 0 ? "selftest: all checks passed\n" : "selftest: failures\n");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"manistab: graph-manifold stability analysis"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  std::vector<Command> commands{add_gen(app),      add_embed(app),   add_manifold(app), add_score(app),
                                add_forward(app),  add_perturb(app), add_eval(app),     add_enhance(app),
                                add_experiment(app)};
  auto* selftest = app.add_subcommand("selftest", "Run the built-in oracle checks");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  try {
    if (selftest->parsed()) return run_selftest();
    for (auto& c : commands) {
      if (c.app->parsed()) c.run();
    }
    return 0;
  } catch (const NotConverged& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
