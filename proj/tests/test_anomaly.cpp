#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace ranrec;

namespace {

// Cluster of `n` points in a disc of radius 1 plus one point at distance 10.
std::vector<std::vector<double>> cluster_with_outlier(std::size_t n, Rng& rng) {
  std::vector<std::vector<double>> pts;
  while (pts.size() < n) {
    const double x = rng.uniform(-1, 1), y = rng.uniform(-1, 1);
    if (x * x + y * y <= 1.0) pts.push_back({x, y});
  }
  pts.push_back({10.0, 0.0});
  return pts;
}

// Recursive traversal written against the node fields.
double traverse(const IsolationTree& t, std::uint32_t k, const std::vector<double>& z, double depth) {
  const auto& n = t.nodes[k];
  if (n.leaf) {
    double c = 0.0;
    if (n.size == 2) c = 1.0;
    if (n.size > 2)
      c = 2.0 * (std::log(double(n.size) - 1.0) + 0.5772156649) - 2.0 * (n.size - 1.0) / n.size;
    return depth + c;
  }
  return traverse(t, z[n.dim] < n.split ? n.left : n.right, z, depth + 1);
}

}  // namespace

TEST(PathLength, Normalizer) {
  EXPECT_EQ(average_path_length(1), 0.0);
  EXPECT_EQ(average_path_length(2), 1.0);
  const double h2 = std::log(2.0) + 0.5772156649;
  EXPECT_NEAR(average_path_length(3), 2.0 * h2 - 4.0 / 3.0, 1e-15);
  EXPECT_EQ(isolation_depth_limit(2), 1u);
  EXPECT_EQ(isolation_depth_limit(256), 8u);
  EXPECT_EQ(isolation_depth_limit(100), 7u);
}

TEST(Score, Examples) {
  const double c = average_path_length(64);
  EXPECT_DOUBLE_EQ(score_from_path_length(c, 64), 0.5);
  EXPECT_DOUBLE_EQ(score_from_path_length(2 * c, 64), 0.25);
  EXPECT_GT(score_from_path_length(1e-9, 64), 0.999);
  double last = 1.0;
  for (double e = 0.5; e < 20; e += 0.5) {
    const double s = score_from_path_length(e, 64);
    EXPECT_LT(s, last);
    EXPECT_GT(s, 0.0);
    last = s;
  }
}

TEST(Forest, TwoPointsGiveDepthOneTree) {
  const IsolationForest f = fit_forest({{0.0}, {1.0}}, 1, 2, 3);
  ASSERT_EQ(f.trees.size(), 1u);
  EXPECT_EQ(f.trees[0].depth(), 1u);
  EXPECT_DOUBLE_EQ(expected_path_length(f, std::vector<double>{0.0}), 1.0);
  EXPECT_DOUBLE_EQ(expected_path_length(f, std::vector<double>{1.0}), 1.0);
}

TEST(Forest, IdenticalPointsRejected) {
  EXPECT_THROW(fit_forest({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}, 10, 3, 0), NumericError);
  EXPECT_THROW(fit_forest({{1.0}}, 10, 1, 0), ValidationError);
  EXPECT_THROW(fit_forest({{1.0}, {2.0}}, 10, 3, 0), ValidationError);
  EXPECT_THROW(fit_forest({{1.0}, {2.0}}, 0, 2, 0), ValidationError);
}

TEST(Forest, HandBuiltTreeTraversal) {
  // root: x < 0.5 ? (leaf of 1) : (y < 0.5 ? leaf of 2 : leaf of 1)
  IsolationTree t;
  t.nodes.resize(5);
  t.nodes[0] = {false, 0, 0.5, 1, 2, 4};
  t.nodes[1] = {true, 0, 0.0, 0, 0, 1};
  t.nodes[2] = {false, 1, 0.5, 3, 4, 3};
  t.nodes[3] = {true, 0, 0.0, 0, 0, 2};
  t.nodes[4] = {true, 0, 0.0, 0, 0, 1};
  EXPECT_DOUBLE_EQ(t.path_length(std::vector<double>{0.1, 0.9}), 1.0);
  EXPECT_DOUBLE_EQ(t.path_length(std::vector<double>{0.9, 0.1}), 3.0);
  EXPECT_DOUBLE_EQ(t.path_length(std::vector<double>{0.9, 0.9}), 2.0);
  EXPECT_EQ(t.depth(), 2u);
}

TEST(Forest, FittedTreesMatchTraversalOracle) {
  const std::vector<std::vector<double>> pts{{0, 0}, {1, 0}, {0, 1}, {3, 3}};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const IsolationForest f = fit_forest(pts, 1, 4, seed);
    for (const auto& p : pts) EXPECT_DOUBLE_EQ(f.trees[0].path_length(p), traverse(f.trees[0], 0, p, 0));
  }
}

TEST(Forest, DeterministicPerSeed) {
  Rng rng(1);
  const auto pts = cluster_with_outlier(60, rng);
  const auto a = fit_forest(pts, 50, 32, 9), b = fit_forest(pts, 50, 32, 9), c = fit_forest(pts, 50, 32, 10);
  bool differs = false;
  for (const auto& p : pts) {
    EXPECT_EQ(anomaly_score(a, p), anomaly_score(b, p));
    differs = differs || anomaly_score(a, p) != anomaly_score(c, p);
  }
  EXPECT_TRUE(differs);
}

TEST(Forest, DepthNeverExceedsLimit) {
  Rng rng(2);
  for (std::size_t psi : {2u, 3u, 7u, 16u, 50u}) {
    const auto pts = cluster_with_outlier(80, rng);
    const auto f = fit_forest(pts, 20, psi, psi);
    for (const auto& t : f.trees) EXPECT_LE(t.depth(), isolation_depth_limit(psi));
    for (const auto& p : pts) {
      const double s = anomaly_score(f, p);
      EXPECT_GT(s, 0.0);
      EXPECT_LT(s, 1.0);
    }
  }
}

TEST(Forest, OutlierRanksFirst) {
  int first = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed + 1000);
    const auto pts = cluster_with_outlier(99, rng);
    const auto f = fit_forest(pts, 100, std::min<std::size_t>(64, pts.size()), seed);
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (anomaly_score(f, pts[i]) > anomaly_score(f, pts[best])) best = i;
    first += best == pts.size() - 1;
  }
  EXPECT_GE(first, 95);
}

TEST(ScoreNetwork, ThresholdExtremes) {
  Rng rng(3);
  const auto pts = cluster_with_outlier(40, rng);
  EmbeddingStore store(2);
  for (std::size_t i = 0; i < pts.size(); ++i) store.add("c" + std::to_string(i), pts[i], {0.5});
  ForestConfig cfg;
  const auto f = fit_forest(store, cfg);
  EXPECT_EQ(f.subsample, 41u);
  EXPECT_TRUE(score_network(store, f, 1.0).flagged.empty());
  EXPECT_EQ(score_network(store, f, 0.0).flagged.size(), 41u);
  const auto report = score_network(store, f, 0.6);
  EXPECT_EQ(report.cells.size(), 41u);
  EXPECT_EQ(report.cells.back().cell_id, "c40");
  EXPECT_TRUE(report.cells.back().flagged);
  EXPECT_THROW(expected_path_length(f, std::vector<double>{1.0}), ValidationError);
}
