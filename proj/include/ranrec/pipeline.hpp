#pragma once

#include <chrono>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ranrec/anomaly.hpp"
#include "ranrec/config.hpp"
#include "ranrec/evaluation.hpp"
#include "ranrec/graph.hpp"
#include "ranrec/inference.hpp"
#include "ranrec/model.hpp"
#include "ranrec/sampler.hpp"
#include "ranrec/synth.hpp"
#include "ranrec/training.hpp"

namespace ranrec {

// ---------------------------------------------------------------------------
// Fitting

struct FitResult {
  Model model;
  TrainReport report;
};

inline std::vector<std::string> ids_at(const RanGraph& graph, const std::vector<std::uint32_t>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (std::uint32_t i : idx) out.push_back(graph.cell(i).cell_id);
  return out;
}

/// Splits the network, fits normalization on the training cells and trains
/// the requested model. The untrained kind is the S-GNN encoder at its
/// initialization, so it shares the S-GNN's random weights.
inline FitResult fit_model(const RanGraph& graph, const PipelineConfig& cfg, ModelKind kind,
                           const EpochHook& on_epoch = {}) {
  if (graph.size() < 3) throw ValidationError("network needs at least 3 cells to train");
  const Split parts = split(graph.size(), cfg.test_fraction, substream_seed(cfg.seed, "split"));
  FitResult out;
  Model& m = out.model;
  m.kind = kind;
  m.seed = substream_seed(cfg.seed, "init");
  m.arch = cfg.arch;
  m.arch.input_dim = graph.schema().predictor_dim();
  m.schema_hash = graph.schema().hash();
  m.train_cells = ids_at(graph, parts.train);
  m.test_cells = ids_at(graph, parts.test);
  m.stats = fit_normalization(graph, m.train_cells);
  m.sampler.fanout = cfg.fanout;
  m.sampler.seed = substream_seed(cfg.seed, "sampler");
  m.sampler.resample_per_epoch = cfg.resample_per_epoch;
  m.encoder = init_encoder(m.arch, m.seed);

  Dataset ds = build_dataset(graph, m.stats, m.sampler);
  const TrainingSet set = TrainingSet::from(ds, parts.train);
  std::function<void(std::size_t)> before_epoch;
  if (cfg.resample_per_epoch)
    before_epoch = [&](std::size_t epoch) { resample(ds, graph, m.sampler, epoch); };

  ContrastiveConfig training = cfg.training;
  switch (kind) {
    case ModelKind::Untrained:
      break;
    case ModelKind::SGnn:
      training.seed = substream_seed(cfg.seed, "train-sgnn");
      out.report = train_sgnn(m.encoder, set, training, on_epoch, before_epoch);
      break;
    case ModelKind::Gae:
      training.seed = substream_seed(cfg.seed, "train-gae");
      if (cfg.gae_epochs) training.epochs = cfg.gae_epochs;
      m.decoder = init_decoder(m.arch, m.seed);
      out.report = train_gae(m.encoder, *m.decoder, set.subgraphs, training, on_epoch, before_epoch);
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embedding

/// Normalized subgraph of `cell_id` as the model sees it at inference time.
inline Subgraph inference_subgraph(const Model& model, const RanGraph& graph,
                                   const std::string& cell_id) {
  if (graph.schema().hash() != model.schema_hash)
    throw ValidationError("network schema does not match the model (" + graph.schema().hash() +
                          " vs " + model.schema_hash + ")");
  Subgraph sg = sample_subgraph(graph, cell_id, model.sampler);
  const std::size_t p = graph.schema().predictor_dim();
  sg.features = Matrix(sg.vertex_count(), p);
  for (std::size_t k = 0; k < sg.vertex_count(); ++k) {
    const auto x = vectorize(graph.cell(sg.vertex(k)), model.stats, graph.schema()).x;
    std::copy(x.begin(), x.end(), sg.features.row(k).begin());
  }
  return sg;
}

inline std::vector<double> embed_cell(const Model& model, const RanGraph& graph,
                                      const std::string& cell_id) {
  return embed_center(model.encoder, inference_subgraph(model, graph, cell_id));
}

inline std::vector<double> normalized_config(const Model& model, const RanGraph& graph,
                                             const std::string& cell_id) {
  return vectorize(graph.cell(graph.index_of(cell_id)), model.stats, graph.schema()).y;
}

/// Store holding the given cells (all cells when `cell_ids` is empty).
inline EmbeddingStore build_store(const Model& model, const RanGraph& graph,
                                  const std::vector<std::string>& cell_ids = {}) {
  EmbeddingStore store(model.arch.embedding_dim, std::make_shared<const EncoderStack>(model.encoder));
  auto add = [&](const std::string& id) {
    store.add(id, embed_cell(model, graph, id), normalized_config(model, graph, id));
  };
  if (cell_ids.empty())
    for (const auto& c : graph.cells()) add(c.cell_id);
  else
    for (const auto& id : cell_ids) add(id);
  return store;
}

inline json store_to_json(const EmbeddingStore& store) {
  json records = json::array();
  for (const auto& r : store.records())
    records.push_back({{"cell_id", r.cell_id}, {"z", r.z}, {"y", r.y}});
  return {{"format", "ranrec-store-v1"}, {"d", store.dim()}, {"records", records}};
}

/// Store file: the records plus the checkpoint and network they came from,
/// so that later commands can embed new cells against the same model.
inline json store_file_json(const EmbeddingStore& store, const json& checkpoint, const json& network) {
  json doc = store_to_json(store);
  doc["checkpoint"] = checkpoint;
  doc["network"] = network;
  return doc;
}

struct LoadedStore {
  Model model;
  RanGraph graph;
  EmbeddingStore store;
};

inline LoadedStore load_store(const json& doc) {
  try {
    if (doc.value("format", "") != "ranrec-store-v1") throw ValidationError("not a ranrec store");
    LoadedStore out;
    out.graph = network_from_json(doc.at("network"));
    out.model = checkpoint_from_json(doc.at("checkpoint"), out.graph.schema());
    const auto d = doc.at("d").get<std::size_t>();
    if (d != out.model.arch.embedding_dim)
      throw ValidationError("store dimension " + std::to_string(d) + " does not match the checkpoint");
    out.store = EmbeddingStore(d, std::make_shared<const EncoderStack>(out.model.encoder));
    for (const auto& r : doc.at("records"))
      out.store.add(r.at("cell_id").get<std::string>(), r.at("z").get<std::vector<double>>(),
                    r.at("y").get<std::vector<double>>());
    return out;
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("store: ") + ex.what());
  }
}

// ---------------------------------------------------------------------------
// Accuracy

/// Recommendation accuracy on one split. Test cells query a store of the
/// training cells; training cells query the same store with themselves left
/// out.
inline AccuracyReport split_accuracy(const Model& model, const RanGraph& graph, bool test_split,
                                     RecommendMode mode = RecommendMode::Closest, std::size_t k = 1) {
  const EmbeddingStore store = build_store(model, graph, model.train_cells);
  const auto& queries = test_split ? model.test_cells : model.train_cells;
  std::vector<std::vector<double>> truth, predicted;
  for (const auto& id : queries) {
    truth.push_back(normalized_config(model, graph, id));
    std::vector<double> z = embed_cell(model, graph, id);
    if (test_split) {
      predicted.push_back(recommend(store, z, mode, k, graph.schema()).y_hat);
      continue;
    }
    EmbeddingStore others(store.dim());
    for (const auto& r : store.records())
      if (r.cell_id != id) others.add(r.cell_id, r.z, r.y);
    predicted.push_back(recommend(others, z, mode, std::min(k, others.size()), graph.schema()).y_hat);
  }
  AccuracyReport r = accuracy(truth, predicted);
  r.model = to_string(model.kind);
  r.split = test_split ? "test" : "train";
  return r;
}

struct ModelComparison {
  std::vector<AccuracyReport> rows;  ///< untrained, gae, sgnn; train then test
  std::map<std::string, Projection2D> projections;
  std::vector<std::string> cell_ids;  ///< row order of every projection
  std::map<std::string, TrainReport> reports;
  std::map<std::string, Model> models;
};

/// Trains the three models on the same split and reports their accuracy
/// plus a 2-D projection of every cell's embedding.
inline ModelComparison compare_models(const RanGraph& graph, const PipelineConfig& cfg,
                                      const std::function<void(const std::string&)>& log = {}) {
  ModelComparison out;
  for (const auto& c : graph.cells()) out.cell_ids.push_back(c.cell_id);
  for (ModelKind kind : {ModelKind::Untrained, ModelKind::Gae, ModelKind::SGnn}) {
    const std::string tag = to_string(kind);
    if (log) log("training " + tag);
    FitResult fit = fit_model(graph, cfg, kind);
    for (bool test : {false, true}) out.rows.push_back(split_accuracy(fit.model, graph, test));
    Matrix z(graph.size(), fit.model.arch.embedding_dim);
    for (std::size_t i = 0; i < graph.size(); ++i) {
      const auto e = embed_cell(fit.model, graph, out.cell_ids[i]);
      std::copy(e.begin(), e.end(), z.row(i).begin());
    }
    out.projections[tag] = pca_project(z);
    out.reports[tag] = fit.report;
    out.models.emplace(tag, std::move(fit.model));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deployment scenarios

enum class ScenarioKind { Expansion, Greenfield, Modification };

inline const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Expansion: return "expansion";
    case ScenarioKind::Greenfield: return "greenfield";
    case ScenarioKind::Modification: return "modification";
  }
  return "?";
}

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::Expansion;
  /// New cells (expansion), new nodes (greenfield) or corrupted cells (modification).
  std::size_t count = 0;
  double magnitude = 5.0;  ///< modification only
  std::uint64_t seed = 0;

  void validate() const {
    if (kind == ScenarioKind::Modification && !(magnitude > 0.0))
      throw ValidationError("modification scenario needs a positive corruption magnitude");
  }
};

/// A base network to train on, the cells the scenario introduces or alters,
/// and the generator truth for all of them.
struct ScenarioSetup {
  ScenarioSpec spec;
  RanGraph base;
  std::vector<CellRecord> new_cells;
  std::vector<EdgeSpec> new_edges;
  GroundTruth truth;
  std::vector<std::string> target_cells;  ///< new or corrupted cells
};

namespace detail {

inline std::vector<EdgeSpec> edges_touching(const RanGraph& g, const std::set<std::string>& cells,
                                            bool inside) {
  std::vector<EdgeSpec> out;
  for (const auto& e : g.explicit_edges()) {
    const bool a = cells.count(e.a) != 0, b = cells.count(e.b) != 0;
    if (inside ? (a || b) : (!a && !b)) out.push_back(e);
  }
  return out;
}

inline std::vector<CellRecord> cells_where(const RanGraph& g, const std::set<std::string>& ids, bool in) {
  std::vector<CellRecord> out;
  for (const auto& c : g.cells())
    if ((ids.count(c.cell_id) != 0) == in) out.push_back(c);
  return out;
}

}  // namespace detail

/// Holds cells of a generated network out so they can be introduced later.
/// Expansion removes single cells from nodes that keep at least one cell;
/// greenfield removes whole nodes, whose remaining links are inter-node only.
/// Modification keeps the network and corrupts two config attributes of
/// `count` cells not already corrupted by the generator.
inline ScenarioSetup prepare_scenario(const SynthNetwork& net, const ScenarioSpec& spec) {
  spec.validate();
  ScenarioSetup s;
  s.spec = spec;
  s.truth = net.truth;
  const RanGraph& g = net.graph;
  Rng rng(substream_seed(spec.seed, std::string("scenario-") + to_string(spec.kind)));
  std::map<std::string, std::vector<std::string>> by_node;
  for (const auto& c : g.cells()) by_node[c.node_id].push_back(c.cell_id);
  std::vector<std::string> nodes;
  for (const auto& [node, _] : by_node) nodes.push_back(node);
  std::set<std::string> held;

  if (spec.kind == ScenarioKind::Expansion) {
    std::vector<std::string> eligible;
    for (const auto& n : nodes)
      if (by_node[n].size() >= 2) eligible.push_back(n);
    if (spec.count > eligible.size())
      throw ValidationError("expansion: " + std::to_string(spec.count) + " new cells requested but only " +
                            std::to_string(eligible.size()) + " nodes host two or more cells");
    rng.shuffle(eligible);
    for (std::size_t i = 0; i < spec.count; ++i) {
      const auto& members = by_node[eligible[i]];
      held.insert(members[rng.below(members.size())]);
    }
  } else if (spec.kind == ScenarioKind::Greenfield) {
    if (spec.count >= nodes.size())
      throw ValidationError("greenfield: " + std::to_string(spec.count) + " new nodes requested from " +
                            std::to_string(nodes.size()) + " nodes; at least one must remain");
    rng.shuffle(nodes);
    for (std::size_t i = 0; i < spec.count; ++i)
      for (const auto& id : by_node[nodes[i]]) held.insert(id);
  } else {
    std::vector<std::string> clean;
    for (std::size_t i = 0; i < net.truth.cells.size(); ++i)
      if (!net.truth.cells[i].corrupted) clean.push_back(net.truth.cell_ids[i]);
    if (spec.count > clean.size())
      throw ValidationError("modification: not enough uncorrupted cells");
    rng.shuffle(clean);
    clean.resize(spec.count);
    std::sort(clean.begin(), clean.end());
    const auto specs = synth::attribute_specs();
    const auto& schema = g.schema();
    const auto& slots = schema.config_slots();
    std::vector<CellRecord> cells = g.cells();
    for (const auto& id : clean) {
      CellRecord& rec = cells[g.index_of(id)];
      CellTruth& t = s.truth.cells[g.index_of(id)];
      std::vector<std::size_t> positions;
      for (std::size_t p = 0; p < slots.size(); ++p)
        if (schema.at(slots[p]).technology == rec.technology) positions.push_back(p);
      rng.shuffle(positions);
      positions.resize(std::min<std::size_t>(2, positions.size()));
      std::sort(positions.begin(), positions.end());
      t.corrupted = true;
      for (std::size_t p : positions) {
        const double shift = spec.magnitude * kMisconfigUnit * rng.uniform(0.5, 1.0);
        double& u = t.observed_config[p];
        u = std::clamp(u < 0.5 ? u + shift : u - shift, 0.0, 1.0);
        rec.raw_configs[schema.at(slots[p]).name] = synth::to_raw(u, specs[slots[p]]);
        t.corrupted_attributes.push_back(schema.at(slots[p]).name);
      }
    }
    s.base = RanGraph::build(schema, std::move(cells), g.explicit_edges());
    s.target_cells = clean;
    return s;
  }
  s.base = RanGraph::build(g.schema(), detail::cells_where(g, held, false),
                           detail::edges_touching(g, held, false));
  s.new_cells = detail::cells_where(g, held, true);
  s.new_edges = detail::edges_touching(g, held, true);
  for (const auto& c : s.new_cells) s.target_cells.push_back(c.cell_id);
  return s;
}

/// Generator's clean config of a cell, normalized by the model's statistics.
inline std::vector<double> clean_config(const Model& model, const AttributeSchema& schema,
                                        const CellTruth& truth, Technology technology) {
  const auto specs = synth::attribute_specs();
  const auto& slots = schema.config_slots();
  std::vector<double> y(slots.size(), 0.0);
  for (std::size_t p = 0; p < slots.size(); ++p)
    if (schema.at(slots[p]).technology == technology)
      y[p] = normalize_value(synth::to_raw(truth.clean_config[p], specs[slots[p]]),
                             model.stats.ranges[slots[p]]);
  return y;
}

struct Correction {
  std::string cell_id;
  double score = 0.0;
  Recommendation recommendation;
};

struct ScenarioReport {
  ScenarioKind kind = ScenarioKind::Expansion;
  std::vector<std::string> cells;  ///< new or corrupted cells
  std::optional<AccuracyReport> accuracy;  ///< expansion and greenfield
  std::optional<double> roc_auc;           ///< modification
  std::vector<std::string> flagged;
  std::size_t flagged_corrupted = 0;
  std::vector<Correction> corrections;
};

/// Runs a prepared scenario against a model trained on `setup.base` and a
/// store of base cells. New cells are scored against their clean configs;
/// modifications are scored by how well anomaly scores rank the corrupted
/// cells, and every flagged cell gets a recommended correction from its
/// nearest other record.
inline ScenarioReport run_scenario(const ScenarioSetup& setup, const Model& model,
                                   const EmbeddingStore& store, const ForestConfig& forest_cfg = {}) {
  if (setup.base.schema().hash() != model.schema_hash)
    throw ValidationError("scenario network does not match the model schema");
  ScenarioReport report;
  report.kind = setup.spec.kind;
  report.cells = setup.target_cells;
  const auto& schema = setup.base.schema();
  if (setup.spec.kind != ScenarioKind::Modification) {
    if (setup.new_cells.empty()) return report;
    const RanGraph g = setup.base.extended(setup.new_cells, setup.new_edges);
    std::vector<std::vector<double>> truth, predicted;
    for (const auto& c : setup.new_cells) {
      const auto rec = recommend_closest(store, embed_cell(model, g, c.cell_id));
      truth.push_back(clean_config(model, schema, setup.truth.at(c.cell_id), c.technology));
      predicted.push_back(rec.y_hat);
    }
    AccuracyReport r = accuracy(truth, predicted);
    r.model = to_string(model.kind);
    r.split = to_string(setup.spec.kind);
    report.accuracy = std::move(r);
    return report;
  }

  const IsolationForest forest = fit_forest(store, forest_cfg);
  const AnomalyReport scores = score_network(store, forest, forest_cfg.threshold);
  std::vector<double> s;
  std::vector<bool> positive;
  for (const auto& c : scores.cells) {
    s.push_back(c.score);
    positive.push_back(setup.truth.at(c.cell_id).corrupted);
  }
  const auto pos = std::count(positive.begin(), positive.end(), true);
  if (pos > 0 && pos < static_cast<std::ptrdiff_t>(positive.size())) report.roc_auc = roc_auc(s, positive);
  report.flagged = scores.flagged;
  for (const auto& id : scores.flagged) {
    if (setup.truth.at(id).corrupted) ++report.flagged_corrupted;
    EmbeddingStore others(store.dim());
    std::vector<double> z;
    for (const auto& r : store.records()) {
      if (r.cell_id == id) z = r.z;
      else others.add(r.cell_id, r.z, r.y);
    }
    if (others.empty()) continue;
    double score = 0.0;
    for (const auto& c : scores.cells)
      if (c.cell_id == id) score = c.score;
    report.corrections.push_back({id, score, recommend_closest(others, z)});
  }
  return report;
}

/// Anomaly audit of a whole network: a model is fitted on it, every cell is
/// embedded, and an isolation forest scores the embeddings.
inline double detection_auc(const SynthNetwork& net, const PipelineConfig& cfg) {
  const FitResult fit = fit_model(net.graph, cfg, ModelKind::SGnn);
  const EmbeddingStore store = build_store(fit.model, net.graph);
  ForestConfig forest = cfg.forest;
  forest.seed = substream_seed(cfg.seed, "forest");
  const AnomalyReport scores = score_network(store, fit_forest(store, forest), forest.threshold);
  std::vector<double> s;
  std::vector<bool> positive;
  for (const auto& c : scores.cells) {
    s.push_back(c.score);
    positive.push_back(net.truth.at(c.cell_id).corrupted);
  }
  return roc_auc(s, positive);
}

}  // namespace ranrec
