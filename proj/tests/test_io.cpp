#include <cstdio>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "manistab/io.hpp"
#include "test_util.hpp"

using namespace manistab;
using manistab::testing::random_connected;

namespace {

std::string temp_path(const std::string& name) { return ::testing::TempDir() + "manistab_io_" + name; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST(Round12, KeepsTwelveSignificantDigits) {
  EXPECT_EQ(round12(0.1234567890123456), 0.123456789012);
  EXPECT_EQ(round12(-98765.43210987654), -98765.4321099);
  EXPECT_EQ(round12(0.0), 0.0);
  EXPECT_EQ(json_number(1.0 / 3.0).dump(), "0.333333333333");
  EXPECT_TRUE(json_number(std::numeric_limits<double>::infinity()).is_null());
  EXPECT_TRUE(json_number(std::nan("")).is_null());
}

TEST(Sgmx, RoundTripIsExact) {
  Eigen::MatrixXd M(3, 2);
  M << 1.0 / 3.0, -2.5e-300, 7.0, 0.0, 1e300, -0.1;
  const std::string path = temp_path("m.sgmx");
  write_sgmx(path, M);
  EXPECT_EQ(read_matrix(path), M);
  std::remove(path.c_str());
}

TEST(Sgmx, HeaderLayout) {
  const std::string path = temp_path("h.sgmx");
  write_sgmx(path, Eigen::MatrixXd::Constant(2, 5, 1.0));
  const std::string b = slurp(path);
  ASSERT_EQ(b.size(), 16u + 8u * 10u);
  EXPECT_EQ(b.substr(0, 4), "SGMX");
  EXPECT_EQ(static_cast<unsigned char>(b[4]), 2);
  EXPECT_EQ(static_cast<unsigned char>(b[8]), 5);
  EXPECT_EQ(b.substr(12, 4), std::string(4, '\0'));
  // 1.0 = 0x3FF0000000000000, little-endian.
  EXPECT_EQ(static_cast<unsigned char>(b[16 + 7]), 0x3F);
  EXPECT_EQ(static_cast<unsigned char>(b[16 + 6]), 0xF0);
  std::remove(path.c_str());
}

TEST(Sgmx, TruncatedPayloadRejected) {
  std::string b = "SGMX";
  b += std::string("\x02\0\0\0\x02\0\0\0\0\0\0\0", 12);
  b += std::string(8, '\0');
  EXPECT_THROW(parse_sgmx(b, "t"), FormatError);
  EXPECT_THROW(parse_sgmx("XXXX", "t"), FormatError);
}

TEST(Csv, RoundTripWithFullPrecision) {
  Eigen::MatrixXd M(2, 3);
  M << 0.1, 1.0 / 7.0, -3e-12, 5.0, 6.5, 1e20;
  const std::string path = temp_path("m.csv");
  write_matrix_csv(path, M);
  EXPECT_EQ(read_matrix(path), M);
  std::remove(path.c_str());
}

TEST(Csv, HeaderAndWhitespaceSeparated) {
  std::istringstream a("x,y\n1,2\n3,4\n");
  const auto A = parse_csv(a, "a");
  ASSERT_EQ(A.rows(), 2);
  EXPECT_EQ(A(1, 0), 3.0);
  std::istringstream b("1 2 3\n4 5 6\n");
  const auto B = parse_csv(b, "b");
  EXPECT_EQ(B.cols(), 3);
  EXPECT_EQ(B(1, 2), 6.0);
}

TEST(Csv, BadEntriesRejected) {
  std::istringstream ragged("1,2\n3\n");
  EXPECT_THROW(parse_csv(ragged, "r"), FormatError);
  std::istringstream nan("1,2\n3,nan\n");
  EXPECT_THROW(parse_csv(nan, "n"), FormatError);
  std::istringstream empty("1,2\n3,\n");
  EXPECT_THROW(parse_csv(empty, "e"), FormatError);
  std::istringstream text("1,2\nfoo,bar\n");
  EXPECT_THROW(parse_csv(text, "t"), FormatError);
}

TEST(Labels, RoundTripAndValidation) {
  const std::string path = temp_path("labels.txt");
  write_labels(path, {0, 3, 1});
  EXPECT_EQ(read_labels(path), (std::vector<int>{0, 3, 1}));
  {
    std::ofstream f(path);
    f << "0\n1 2\n";
  }
  EXPECT_THROW(read_labels(path), FormatError);
  {
    std::ofstream f(path);
    f << "-1\n";
  }
  EXPECT_THROW(read_labels(path), FormatError);
  std::remove(path.c_str());
}

TEST(AlignRows, FollowsOriginalIds) {
  Eigen::MatrixXd M(4, 1);
  M << 10, 11, 12, 13;
  const std::vector<std::int64_t> ids{1, 3};
  EXPECT_EQ(align_rows(M, ids, "m"), (Eigen::MatrixXd(2, 1) << 11, 13).finished());
  EXPECT_EQ(align_rows(std::vector<int>{5, 6, 7, 8}, ids, "l"), (std::vector<int>{6, 8}));
  const std::vector<std::int64_t> bad{4};
  EXPECT_THROW(align_rows(M, bad, "m"), DimensionMismatch);
}

TEST(KeyValues, ParsesCommentsAndOverrides) {
  std::istringstream in("# config\nk = 50\n  seed=3  # trailing\n\nk=20\n");
  const auto kv = read_key_values(in, "cfg");
  EXPECT_EQ(kv.size(), 2u);
  EXPECT_EQ(kv.at("k"), "20");
  EXPECT_EQ(kv.at("seed"), "3");
  std::istringstream bad("novalue\n");
  EXPECT_THROW(read_key_values(bad, "cfg"), FormatError);
}

TEST(ManifoldFiles, RoundTripPreservesEverything) {
  ManifoldConfig cfg;
  cfg.resistance_diameter = 1.5;
  cfg.exact_below = 1000;
  cfg.seed = 42;
  const Manifold m = sparsify(random_connected(40, 0.15, 5), cfg);
  const std::string prefix = temp_path("manifold");
  write_manifold(prefix, m, Json{{"tool", "test"}});
  const Manifold r = read_manifold(prefix);
  ASSERT_EQ(r.graph.num_nodes(), m.graph.num_nodes());
  ASSERT_EQ(r.graph.num_edges(), m.graph.num_edges());
  for (std::size_t i = 0; i < m.graph.num_edges(); ++i) {
    EXPECT_EQ(r.graph.edges()[i].u, m.graph.edges()[i].u);
    EXPECT_EQ(r.graph.edges()[i].v, m.graph.edges()[i].v);
    EXPECT_EQ(r.graph.edges()[i].w, m.graph.edges()[i].w);
  }
  EXPECT_EQ(r.clusters, m.clusters);
  EXPECT_EQ(r.inter_edges, m.inter_edges);
  EXPECT_EQ(r.intra_edges, m.intra_edges);
  EXPECT_EQ(r.rho, m.rho);
  EXPECT_EQ(r.diameter, m.diameter);
  EXPECT_EQ(r.config.seed, 42u);
  EXPECT_EQ(*r.config.resistance_diameter, 1.5);
  EXPECT_FALSE(r.config.target_clusters.has_value());
  EXPECT_EQ(read_json(prefix + ".json")["provenance"]["tool"], "test");
  std::remove((prefix + ".edges").c_str());
  std::remove((prefix + ".json").c_str());
}

TEST(ManifoldFiles, MismatchedSidecarRejected) {
  ManifoldConfig cfg;
  cfg.resistance_diameter = 1.5;
  const Manifold m = sparsify(random_connected(20, 0.2, 6), cfg);
  const std::string prefix = temp_path("bad_manifold");
  write_manifold(prefix, m);
  Json j = read_json(prefix + ".json");
  j["rho"].erase(0);
  write_json(prefix + ".json", j);
  EXPECT_THROW(read_manifold(prefix), FormatError);
  std::remove((prefix + ".edges").c_str());
  std::remove((prefix + ".json").c_str());
}

TEST(Report, KeyOrderAndNulls) {
  StabilityReport rep = rank_and_select(Eigen::VectorXd((Eigen::VectorXd(4) << 0.5, 2.0,
                                                          std::numeric_limits<double>::infinity(), 1.0)
                                                             .finished()),
                                        0.25);
  const std::vector<std::int64_t> ids{10, 20, 30, 40};
  ReportExtras x;
  x.original_ids = ids;
  x.lambda_max = 2.0;
  x.config = Json{{"s", 3}};
  const Json j = report_json(rep, x);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"nodes", "stable", "unstable", "excluded", "fraction", "lambda_max",
                                            "dmd_max", "eigenvalues", "config"}));
  EXPECT_EQ(j["unstable"][0], 20);
  EXPECT_EQ(j["stable"][0], 10);
  EXPECT_EQ(j["excluded"][0], 30);
  EXPECT_TRUE(j["nodes"][3]["score"].is_null());
  EXPECT_TRUE(j["nodes"][3]["rank"].is_null());
  EXPECT_TRUE(j["dmd_max"].is_null());
  EXPECT_EQ(j["config"]["s"], 3);
}
