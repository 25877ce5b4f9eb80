#pragma once

#include <string>
#include <vector>

#include "ranrec.hpp"

namespace ranrec::testing {

/// One LTE predictor "p", one LTE config "c" (median), one NR predictor "p",
/// one NR config "c" (median).
inline AttributeSchema tiny_schema(Kind config_kind = Kind::Continuous) {
  return AttributeSchema({
      {"p", Technology::LTE, Role::Predictor, Kind::Continuous, Aggregation::Median},
      {"c", Technology::LTE, Role::Config, config_kind, Aggregation::Median},
      {"p", Technology::NR, Role::Predictor, Kind::Continuous, Aggregation::Median},
      {"c", Technology::NR, Role::Config, config_kind, Aggregation::Median},
  });
}

inline CellRecord lte_cell(const std::string& id, const std::string& node, double p, double c) {
  return {id, node, Technology::LTE, {{"p", p}}, {{"c", c}}};
}

inline CellRecord nr_cell(const std::string& id, const std::string& node, double p, double c) {
  return {id, node, Technology::NR, {{"p", p}}, {{"c", c}}};
}

/// A ring of `n` single-cell nodes with predictor i and config i.
inline RanGraph ring_graph(std::size_t n) {
  std::vector<CellRecord> cells;
  std::vector<EdgeSpec> edges;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = "c" + std::to_string(100 + i);
    cells.push_back(lte_cell(id, "n" + std::to_string(i), double(i), double(i % 3)));
  }
  // NR slots need at least one observation so normalization can be fitted.
  cells.push_back(nr_cell("nr0", "n0", 1.0, 1.0));
  for (std::size_t i = 0; i < n && n > 2; ++i)
    edges.push_back({cells[i].cell_id, cells[(i + 1) % n].cell_id, EdgeKind::InterNode});
  return RanGraph::build(tiny_schema(), std::move(cells), edges);
}

/// A narrow architecture that keeps gradient checks and short runs fast.
inline ArchConfig small_arch(std::size_t input_dim = 0) {
  ArchConfig a;
  a.input_dim = input_dim;
  a.heads = 2;
  a.head_dim = 4;
  a.ffn_hidden = 8;
  a.layer_dim = 6;
  a.embedding_dim = 4;
  return a;
}

inline SynthSpec small_spec(std::uint64_t seed = 0) {
  SynthSpec s;
  s.sites = 10;
  s.cells_per_site = 3;
  s.seed = seed;
  return s;
}

inline PipelineConfig small_pipeline(std::size_t epochs = 5) {
  PipelineConfig cfg;
  cfg.arch = small_arch();
  cfg.training.epochs = epochs;
  cfg.training.learning_rate = 0.01;
  cfg.fanout = 4;
  return cfg;
}

}  // namespace ranrec::testing
