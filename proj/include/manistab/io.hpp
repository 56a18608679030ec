#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <iterator>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "manistab/dmd.hpp"
#include "manistab/errors.hpp"
#include "manistab/graph.hpp"
#include "manistab/manifold.hpp"

namespace manistab {

using Json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Numbers in JSON

/// x rounded to 12 significant digits; the JSON writer then prints the
/// shortest form, so reports are stable across platforms and runs.
inline double round12(double x) {
  if (!std::isfinite(x) || x == 0.0) return x;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return std::strtod(buf, nullptr);
}

/// Non-finite values become null.
inline Json json_number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return round12(x);
}

inline Json json_array(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(json_number(v[i]));
  return a;
}

inline Json json_array(const std::vector<double>& v) {
  Json a = Json::array();
  for (double x : v) a.push_back(json_number(x));
  return a;
}

inline void write_json(const std::string& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline Json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dense matrices: CSV (header optional) or SGMX binary
// SGMX: "SGMX", u32 rows, u32 cols, u32 reserved (0), little-endian; then
// rows * cols row-major little-endian doubles.

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

inline std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline bool parse_double(const std::string& tok, double& out) {
  const auto a = tok.find_first_not_of(" \t\r");
  if (a == std::string::npos) return false;
  const auto b = tok.find_last_not_of(" \t\r");
  const std::string t = tok.substr(a, b - a + 1);
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size();
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  if (line.find(',') != std::string::npos) {
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) out.push_back(f);
    if (!line.empty() && line.back() == ',') out.emplace_back();
  } else {
    std::istringstream ss(line);
    std::string f;
    while (ss >> f) out.push_back(f);
  }
  return out;
}

}  // namespace detail

inline void write_sgmx(const std::string& path, const Eigen::MatrixXd& M) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out.write("SGMX", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(M.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(M.cols()));
  detail::put_u32(out, 0);
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      std::uint64_t bits;
      const double x = M(i, j);
      std::memcpy(&bits, &x, 8);
      for (int b = 0; b < 8; ++b) out.put(static_cast<char>((bits >> (8 * b)) & 0xff));
    }
}

inline Eigen::MatrixXd parse_sgmx(const std::string& bytes, const std::string& name) {
  if (bytes.size() < 16 || bytes.compare(0, 4, "SGMX") != 0) throw FormatError(name + ": not an SGMX file");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t rows = detail::get_u32(p + 4), cols = detail::get_u32(p + 8);
  if (bytes.size() != 16 + 8 * rows * cols) {
    throw FormatError(name + ": SGMX payload size does not match " + std::to_string(rows) + "x" +
                      std::to_string(cols));
  }
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const unsigned char* d = p + 16;
  for (Eigen::Index i = 0; i < M.rows(); ++i)
    for (Eigen::Index j = 0; j < M.cols(); ++j, d += 8) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(d[b]) << (8 * b);
      std::memcpy(&M(i, j), &bits, 8);
    }
  return M;
}

/// Comma- or whitespace-separated rows; a first line that does not parse as
/// numbers is a header. Empty, NaN and infinite entries are rejected.
inline Eigen::MatrixXd parse_csv(std::istream& in, const std::string& name) {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    const auto fields = detail::split_fields(line);
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t i = 0; i < fields.size() && numeric; ++i) numeric = detail::parse_double(fields[i], row[i]);
    if (!numeric) {
      if (first) {
        first = false;
        continue;
      }
      throw FormatError(name + ":" + std::to_string(lineno) + ": non-numeric or empty entry");
    }
    first = false;
    for (double x : row)
      if (!std::isfinite(x)) throw FormatError(name + ":" + std::to_string(lineno) + ": non-finite entry");
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw FormatError(name + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(rows.front().size()) + " columns");
    }
    rows.push_back(std::move(row));
  }
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = r == 0 ? 0 : static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd M(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) M(i, j) = rows[i][j];
  return M;
}

/// Reads CSV or SGMX, detected by the magic bytes.
inline Eigen::MatrixXd read_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open matrix file '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.compare(0, 4, "SGMX") == 0) {
    Eigen::MatrixXd M = parse_sgmx(bytes, path);
    if (!M.allFinite()) throw FormatError(path + ": non-finite entry");
    return M;
  }
  std::istringstream ss(bytes);
  return parse_csv(ss, path);
}

inline void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& M) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  out << std::setprecision(17);
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) out << (j ? "," : "") << M(i, j);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Labels: one integer per line

inline std::vector<int> read_labels(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open labels file '" + path + "'");
  std::vector<int> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto a = line.find_first_not_of(" \t\r");
    if (a == std::string::npos || line[a] == '#') continue;
    std::istringstream ls(line);
    long long v;
    std::string rest;
    if (!(ls >> v) || (ls >> rest) || v < 0 || v > 1'000'000'000) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": expected one non-negative integer");
    }
    out.push_back(static_cast<int>(v));
  }
  return out;
}

inline void write_labels(const std::string& path, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  for (int l : labels) out << l << '\n';
}

/// Per-node rows for a graph read from an edge list: node i takes row
/// original_ids[i] of a file with one row per file id.
inline Eigen::MatrixXd align_rows(const Eigen::MatrixXd& M, std::span<const std::int64_t> ids,
                                  const std::string& what) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(ids.size()), M.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= M.rows()) {
      throw DimensionMismatch(what + " has " + std::to_string(M.rows()) + " rows but the graph uses id " +
                              std::to_string(ids[i]));
    }
    out.row(static_cast<Eigen::Index>(i)) = M.row(ids[i]);
  }
  return out;
}

inline std::vector<int> align_rows(const std::vector<int>& v, std::span<const std::int64_t> ids,
                                   const std::string& what) {
  std::vector<int> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= static_cast<std::int64_t>(v.size())) {
      throw DimensionMismatch(what + " has " + std::to_string(v.size()) + " entries but the graph uses id " +
                              std::to_string(ids[i]));
    }
    out[i] = v[ids[i]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flat key=value config

/// Lines "key = value"; '#' starts a comment; later keys override earlier.
inline std::map<std::string, std::string> read_key_values(std::istream& in, const std::string& name) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return std::string();
    return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos || trim(line.substr(0, eq)).empty()) {
      throw FormatError(name + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

inline std::map<std::string, std::string> read_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  return read_key_values(in, path);
}

// ---------------------------------------------------------------------------
// Manifolds: edge list with dense ids plus a sidecar JSON

inline Json to_json(const ManifoldConfig& c) {
  Json j;
  j["knn_k"] = c.knn_k;
  j["resistance_diameter"] = c.resistance_diameter ? json_number(*c.resistance_diameter) : Json(nullptr);
  j["target_clusters"] = c.target_clusters ? Json(*c.target_clusters) : Json(nullptr);
  j["krylov_m"] = c.krylov_m;
  j["rho_keep_threshold"] = json_number(c.rho_keep_threshold);
  j["exact_below"] = c.exact_below;
  j["seed"] = c.seed;
  return j;
}

inline ManifoldConfig manifold_config_from_json(const Json& j) {
  ManifoldConfig c;
  c.knn_k = j.at("knn_k").get<int>();
  if (!j.at("resistance_diameter").is_null()) c.resistance_diameter = j["resistance_diameter"].get<double>();
  if (!j.at("target_clusters").is_null()) c.target_clusters = j["target_clusters"].get<Eigen::Index>();
  c.krylov_m = j.at("krylov_m").get<int>();
  c.rho_keep_threshold = j.at("rho_keep_threshold").get<double>();
  c.exact_below = j.at("exact_below").get<NodeId>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

inline Json manifold_sidecar(const Manifold& m) {
  Json j;
  j["num_nodes"] = m.graph.num_nodes();
  j["num_edges"] = m.graph.num_edges();
  j["num_clusters"] = m.num_clusters();
  j["clusters"] = m.clusters;
  j["intra_edges"] = m.intra_edges;
  j["inter_edges"] = m.inter_edges;
  // Full precision so a reloaded manifold is identical.
  j["rho"] = m.rho;
  j["diameter"] = m.diameter;
  j["exact_resistances"] = m.exact_resistances;
  j["dense_edges"] = m.dense_edges;
  j["bridges_added"] = m.bridges_added;
  j["config"] = to_json(m.config);
  return j;
}

/// Writes `<prefix>.edges` and `<prefix>.json`.
inline void write_manifold(const std::string& prefix, const Manifold& m, const Json& provenance = {}) {
  write_edge_list(prefix + ".edges", m.graph);
  Json j = manifold_sidecar(m);
  if (!provenance.is_null()) j["provenance"] = provenance;
  write_json(prefix + ".json", j);
}

inline Manifold read_manifold(const std::string& prefix) {
  const Json j = read_json(prefix + ".json");
  Manifold m;
  try {
    const NodeId n = j.at("num_nodes").get<NodeId>();
    const auto file = read_edge_list(prefix + ".edges");
    std::vector<Edge> edges = file.graph.edges();
    for (auto& e : edges) {
      e.u = static_cast<NodeId>(file.original_ids[e.u]);
      e.v = static_cast<NodeId>(file.original_ids[e.v]);
      if (e.u >= n || e.v >= n) throw FormatError(prefix + ".edges: node id beyond num_nodes");
    }
    m.graph = SparseGraph(n, std::move(edges));
    m.clusters = j.at("clusters").get<std::vector<int>>();
    m.intra_edges = j.at("intra_edges").get<std::vector<std::size_t>>();
    m.inter_edges = j.at("inter_edges").get<std::vector<std::size_t>>();
    m.rho = j.at("rho").get<std::vector<double>>();
    m.diameter = j.at("diameter").get<double>();
    m.exact_resistances = j.at("exact_resistances").get<bool>();
    m.dense_edges = j.at("dense_edges").get<std::size_t>();
    m.bridges_added = j.at("bridges_added").get<std::size_t>();
    m.config = manifold_config_from_json(j.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(prefix + ".json: " + e.what());
  }
  if (m.clusters.size() != static_cast<std::size_t>(m.graph.num_nodes()) ||
      m.rho.size() != m.graph.num_edges() ||
      m.intra_edges.size() + m.inter_edges.size() != m.graph.num_edges()) {
    throw FormatError(prefix + ": sidecar does not match the edge list");
  }
  return m;
}

// ---------------------------------------------------------------------------
// Stability report

struct ReportExtras {
  const std::vector<int>* clusters = nullptr;       // input-manifold clusters
  std::span<const std::int64_t> original_ids = {};  // node -> id printed
  std::optional<double> lambda_max;
  std::optional<DmdMax> dmd_max;
  Eigen::VectorXd eigenvalues;
  Json config;
};

inline Json report_json(const StabilityReport& rep, const ReportExtras& x = {}) {
  auto id = [&](NodeId p) -> std::int64_t { return x.original_ids.empty() ? p : x.original_ids[p]; };
  Json j;
  Json nodes = Json::array();
  auto node_entry = [&](NodeId p) {
    Json e;
    e["id"] = id(p);
    e["score"] = json_number(rep.scores[p]);
    e["rank"] = rep.rank[p] < 0 ? Json(nullptr) : Json(rep.rank[p]);
    e["cluster"] = x.clusters ? Json((*x.clusters)[p]) : Json(nullptr);
    nodes.push_back(std::move(e));
  };
  for (NodeId p : rep.ranking) node_entry(p);
  for (NodeId p : rep.excluded) node_entry(p);
  j["nodes"] = std::move(nodes);
  auto ids = [&](const std::vector<NodeId>& v) {
    Json a = Json::array();
    for (NodeId p : v) a.push_back(id(p));
    return a;
  };
  j["stable"] = ids(rep.stable);
  j["unstable"] = ids(rep.unstable);
  j["excluded"] = ids(rep.excluded);
  j["fraction"] = json_number(rep.fraction);
  j["lambda_max"] = x.lambda_max ? json_number(*x.lambda_max) : Json(nullptr);
  if (x.dmd_max) {
    Json d;
    d["value"] = json_number(x.dmd_max->value);
    d["p"] = x.dmd_max->p < 0 ? Json(nullptr) : Json(id(x.dmd_max->p));
    d["q"] = x.dmd_max->q < 0 ? Json(nullptr) : Json(id(x.dmd_max->q));
    d["mode"] = x.dmd_max->exhaustive ? "exhaustive" : "sampled";
    d["pairs"] = x.dmd_max->pairs;
    j["dmd_max"] = std::move(d);
  } else {
    j["dmd_max"] = nullptr;
  }
  j["eigenvalues"] = json_array(x.eigenvalues);
  j["config"] = x.config;
  return j;
}

}  // namespace manistab
