#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ranrec/graph.hpp"
#include "ranrec/matrix.hpp"
#include "ranrec/rng.hpp"

namespace ranrec {

struct SamplerConfig {
  std::size_t fanout = 8;
  std::uint64_t seed = 0;
  /// Draw fresh neighbor samples every training epoch instead of once.
  bool resample_per_epoch = false;

  void validate() const {
    if (fanout < 1) throw ValidationError("sampler fanout must be >= 1");
  }
};

/// A center cell with its sampled one-hop neighbors.
///
/// Local vertex 0 is the center; vertex k >= 1 is neighbors[k-1]. `edges`
/// holds every graph edge among the local vertices (local indices, a < b).
/// Self-loops are implicit and added by the encoder.
struct Subgraph {
  std::uint32_t center = 0;
  std::vector<std::uint32_t> neighbors;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  Matrix features;  ///< one predictor row per local vertex, center first

  std::size_t vertex_count() const { return neighbors.size() + 1; }
  std::uint32_t vertex(std::size_t local) const {
    return local == 0 ? center : neighbors.at(local - 1);
  }

  /// Row-major attention mask: vertex i may attend to j when they share an
  /// edge or i == j.
  std::vector<bool> attention_mask() const {
    const std::size_t n = vertex_count();
    std::vector<bool> mask(n * n, false);
    for (std::size_t i = 0; i < n; ++i) mask[i * n + i] = true;
    for (const auto& [a, b] : edges) {
      mask[a * n + b] = true;
      mask[b * n + a] = true;
    }
    return mask;
  }
};

inline std::vector<std::string> neighbors(const RanGraph& graph, const std::string& cell) {
  std::vector<std::string> out;
  for (std::uint32_t j : graph.adjacency(graph.index_of(cell))) out.push_back(graph.cell(j).cell_id);
  return out;
}

/// RNG stream owned by one cell, independent of visiting order.
inline Rng cell_stream(std::uint64_t seed, const std::string& cell_id, std::uint64_t epoch = 0) {
  return Rng(substream_seed(substream_seed(seed, cell_id), epoch));
}

/// Uniform sample without replacement of min(fanout, degree) neighbors plus
/// the induced edge set. Features are left empty; see attach_features().
inline Subgraph sample_subgraph(const RanGraph& graph, std::uint32_t center,
                                const SamplerConfig& cfg, Rng& stream) {
  cfg.validate();
  if (center >= graph.size()) throw ValidationError("sample_subgraph: unknown cell index");
  Subgraph sg;
  sg.center = center;
  std::vector<std::uint32_t> pool = graph.adjacency(center);
  const std::size_t take = std::min(cfg.fanout, pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + stream.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  sg.neighbors.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  const std::size_t n = sg.vertex_count();
  for (std::uint32_t a = 0; a < n; ++a)
    for (std::uint32_t b = a + 1; b < n; ++b)
      if (graph.connected(sg.vertex(a), sg.vertex(b))) sg.edges.emplace_back(a, b);
  return sg;
}

inline Subgraph sample_subgraph(const RanGraph& graph, const std::string& center,
                                const SamplerConfig& cfg) {
  Rng stream = cell_stream(cfg.seed, center);
  return sample_subgraph(graph, graph.index_of(center), cfg, stream);
}

/// Fills `features` from per-cell predictor vectors indexed by cell.
inline void attach_features(Subgraph& sg, const std::vector<FeatureVectors>& cells) {
  const std::size_t p = cells.at(sg.center).x.size();
  sg.features = Matrix(sg.vertex_count(), p);
  for (std::size_t k = 0; k < sg.vertex_count(); ++k) {
    const auto& x = cells.at(sg.vertex(k)).x;
    std::copy(x.begin(), x.end(), sg.features.row(k).begin());
  }
}

struct DatasetEntry {
  Subgraph subgraph;
  std::vector<double> target;  ///< normalized config vector of the center
};

/// One entry per cell, in graph order.
struct Dataset {
  std::vector<DatasetEntry> entries;
  std::vector<FeatureVectors> vectors;  ///< normalized (x, y) per cell

  std::size_t size() const { return entries.size(); }
};

inline std::vector<FeatureVectors> vectorize_all(const RanGraph& graph,
                                                 const NormalizationStats& stats) {
  std::vector<FeatureVectors> out;
  out.reserve(graph.size());
  for (const auto& c : graph.cells()) out.push_back(vectorize(c, stats, graph.schema()));
  return out;
}

/// Re-samples every subgraph for the given epoch (epoch 0 reproduces
/// build_dataset()).
inline void resample(Dataset& ds, const RanGraph& graph, const SamplerConfig& cfg,
                     std::uint64_t epoch) {
  for (std::uint32_t i = 0; i < ds.entries.size(); ++i) {
    Rng stream = cell_stream(cfg.seed, graph.cell(i).cell_id, epoch);
    ds.entries[i].subgraph = sample_subgraph(graph, i, cfg, stream);
    attach_features(ds.entries[i].subgraph, ds.vectors);
  }
}

inline Dataset build_dataset(const RanGraph& graph, const NormalizationStats& stats,
                             const SamplerConfig& cfg) {
  cfg.validate();
  Dataset ds;
  ds.vectors = vectorize_all(graph, stats);
  ds.entries.resize(graph.size());
  for (std::uint32_t i = 0; i < graph.size(); ++i) ds.entries[i].target = ds.vectors[i].y;
  resample(ds, graph, cfg, 0);
  return ds;
}

struct Split {
  std::vector<std::uint32_t> train;  ///< ascending
  std::vector<std::uint32_t> test;   ///< ascending
};

/// Deterministic partition of [0, n): round(n * test_fraction) indices go to test.
inline Split split(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ValidationError("test_fraction must lie strictly between 0 and 1, got " +
                          std::to_string(test_fraction));
  std::vector<std::uint32_t> order(n);
  for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(substream_seed(seed, "split"));
  rng.shuffle(order);
  const auto test_count = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  Split s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(test_count));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(test_count), order.end());
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

}  // namespace ranrec
