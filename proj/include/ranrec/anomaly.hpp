#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ranrec/error.hpp"
#include "ranrec/inference.hpp"
#include "ranrec/rng.hpp"

namespace ranrec {

inline constexpr double kEulerGamma = 0.5772156649;

/// Average path length of an unsuccessful BST search over m points; the
/// iForest normalizer. c(1) = 0 and c(2) = 1 by convention.
inline double average_path_length(std::size_t m) {
  if (m <= 1) return 0.0;
  if (m == 2) return 1.0;
  const double n = static_cast<double>(m);
  const double harmonic = std::log(n - 1.0) + kEulerGamma;
  return 2.0 * harmonic - 2.0 * (n - 1.0) / n;
}

inline std::size_t isolation_depth_limit(std::size_t psi) {
  return static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(psi))));
}

/// Flat binary tree; node 0 is the root.
struct IsolationTree {
  struct Node {
    bool leaf = true;
    std::size_t dim = 0;
    double split = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::size_t size = 0;  ///< residual sample size at a leaf
  };
  std::vector<Node> nodes;

  std::size_t depth() const { return depth_from(0); }

  /// Edges traversed to reach a leaf plus c(leaf size).
  double path_length(std::span<const double> z) const {
    std::uint32_t k = 0;
    double edges = 0.0;
    while (!nodes[k].leaf) {
      k = z[nodes[k].dim] < nodes[k].split ? nodes[k].left : nodes[k].right;
      edges += 1.0;
    }
    return edges + average_path_length(nodes[k].size);
  }

 private:
  std::size_t depth_from(std::uint32_t k) const {
    if (nodes[k].leaf) return 0;
    return 1 + std::max(depth_from(nodes[k].left), depth_from(nodes[k].right));
  }
};

struct IsolationForest {
  std::vector<IsolationTree> trees;
  std::size_t subsample = 0;  ///< psi
  std::size_t count = 0;      ///< n
  std::size_t dim = 0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::uint32_t grow_isolation_tree(IsolationTree& tree,
                                         const std::vector<std::vector<double>>& points,
                                         std::vector<std::uint32_t> sample, std::size_t depth,
                                         std::size_t limit, Rng& rng) {
  const auto id = static_cast<std::uint32_t>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes[id].size = sample.size();
  if (depth >= limit || sample.size() <= 1) return id;
  const std::size_t d = points[sample.front()].size();
  std::vector<std::size_t> spread_dims;
  std::vector<std::pair<double, double>> bounds(d);
  for (std::size_t k = 0; k < d; ++k) {
    double lo = points[sample.front()][k], hi = lo;
    for (std::uint32_t s : sample) {
      lo = std::min(lo, points[s][k]);
      hi = std::max(hi, points[s][k]);
    }
    bounds[k] = {lo, hi};
    if (hi > lo) spread_dims.push_back(k);
  }
  if (spread_dims.empty()) return id;  // identical points
  const std::size_t dim = spread_dims[rng.below(spread_dims.size())];
  const auto [lo, hi] = bounds[dim];
  // Split in (lo, hi] so both sides are non-empty even when lo and hi are
  // adjacent doubles.
  double split = rng.uniform(lo, hi);
  if (!(split > lo)) split = hi;
  std::vector<std::uint32_t> left, right;
  for (std::uint32_t s : sample) (points[s][dim] < split ? left : right).push_back(s);
  sample.clear();
  sample.shrink_to_fit();
  const std::uint32_t l = grow_isolation_tree(tree, points, std::move(left), depth + 1, limit, rng);
  const std::uint32_t r = grow_isolation_tree(tree, points, std::move(right), depth + 1, limit, rng);
  auto& node = tree.nodes[id];
  node.leaf = false;
  node.dim = dim;
  node.split = split;
  node.left = l;
  node.right = r;
  return id;
}

}  // namespace detail

/// Fits `trees` isolation trees, each on its own uniform subsample of size
/// `psi` drawn from the substream (seed, tree index).
inline IsolationForest fit_forest(const std::vector<std::vector<double>>& embeddings,
                                  std::size_t trees, std::size_t psi, std::uint64_t seed) {
  const std::size_t n = embeddings.size();
  if (n < 2) throw ValidationError("fit_forest: need at least 2 embeddings");
  if (trees < 1) throw ValidationError("fit_forest: need at least 1 tree");
  if (psi < 2 || psi > n)
    throw ValidationError("fit_forest: subsample size " + std::to_string(psi) +
                          " must lie in [2, " + std::to_string(n) + "]");
  const std::size_t d = embeddings.front().size();
  for (const auto& e : embeddings)
    if (e.size() != d) throw ValidationError("fit_forest: embeddings differ in dimension");
  bool any_spread = false;
  for (std::size_t i = 1; i < n && !any_spread; ++i)
    any_spread = embeddings[i] != embeddings[0];
  if (!any_spread)
    throw NumericError(
        "fit_forest: all embeddings are identical; no split exists (report without a threshold)");

  IsolationForest forest;
  forest.subsample = psi;
  forest.count = n;
  forest.dim = d;
  forest.seed = seed;
  const std::size_t limit = isolation_depth_limit(psi);
  for (std::size_t t = 0; t < trees; ++t) {
    Rng rng(substream_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<std::uint32_t> pool(n);
    for (std::uint32_t i = 0; i < n; ++i) pool[i] = i;
    for (std::size_t i = 0; i < psi; ++i) std::swap(pool[i], pool[i + rng.below(n - i)]);
    pool.resize(psi);
    IsolationTree tree;
    detail::grow_isolation_tree(tree, embeddings, std::move(pool), 0, limit, rng);
    forest.trees.push_back(std::move(tree));
  }
  return forest;
}

inline double expected_path_length(const IsolationForest& forest, std::span<const double> z) {
  if (z.size() != forest.dim)
    throw ValidationError("expected_path_length: query has dimension " + std::to_string(z.size()) +
                          ", forest expects " + std::to_string(forest.dim));
  double total = 0.0;
  for (const auto& t : forest.trees) total += t.path_length(z);
  return total / static_cast<double>(forest.trees.size());
}

/// s = 2^(-E(h) / c(psi)).
inline double score_from_path_length(double expected, std::size_t psi) {
  return std::exp2(-expected / average_path_length(psi));
}

inline double anomaly_score(const IsolationForest& forest, std::span<const double> z) {
  return score_from_path_length(expected_path_length(forest, z), forest.subsample);
}

struct CellScore {
  std::string cell_id;
  double score = 0.0;
  bool flagged = false;
};

struct AnomalyReport {
  std::vector<CellScore> cells;  ///< store order
  double threshold = 0.6;
  std::vector<std::string> flagged;
};

struct ForestConfig {
  std::size_t trees = 100;
  std::size_t max_subsample = 256;  ///< psi = min(max_subsample, n)
  double threshold = 0.6;
  std::uint64_t seed = 0;
};

inline IsolationForest fit_forest(const EmbeddingStore& store, const ForestConfig& cfg) {
  std::vector<std::vector<double>> z;
  for (const auto& r : store.records()) z.push_back(r.z);
  return fit_forest(z, cfg.trees, std::min(cfg.max_subsample, z.size()), cfg.seed);
}

/// Scores every stored record; flagged = score > threshold.
inline AnomalyReport score_network(const EmbeddingStore& store, const IsolationForest& forest,
                                   double threshold) {
  AnomalyReport report;
  report.threshold = threshold;
  for (const auto& r : store.records()) {
    const double s = anomaly_score(forest, r.z);
    report.cells.push_back({r.cell_id, s, s > threshold});
    if (s > threshold) report.flagged.push_back(r.cell_id);
  }
  return report;
}

}  // namespace ranrec
