// Command-line front end: synth, train, embed, recommend, detect, evaluate, project.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "ranrec.hpp"

namespace fs = std::filesystem;
using namespace ranrec;

namespace {

enum class LogLevel { Error = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("RANREC_LOG");
  if (!env) return LogLevel::Error;
  const std::string v = env;
  if (v == "debug") return LogLevel::Debug;
  if (v == "info") return LogLevel::Info;
  return LogLevel::Error;
}

void log(LogLevel level, const std::string& msg) {
  if (level <= log_level()) std::cerr << "[ranrec] " << msg << "\n";
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config;
  std::string out;
};

/// Writes every output atomically, then a manifest beside each one.
class Run {
 public:
  explicit Run(std::string command) : start_(std::chrono::steady_clock::now()) {
    manifest_.command = std::move(command);
    manifest_.started_at = utc_timestamp();
  }

  RunManifest& manifest() { return manifest_; }

  void input(const fs::path& p) { manifest_.add_input(p); }

  void output(const fs::path& p, std::string content) {
    pending_.emplace_back(p, std::move(content));
  }

  void commit() {
    for (const auto& [p, content] : pending_) manifest_.add_output(p, content);
    manifest_.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    for (const auto& [p, content] : pending_) {
      atomic_write(p, content);
      log(LogLevel::Info, "wrote " + p.string());
    }
    const std::string doc = dump_json(manifest_to_json(manifest_));
    for (const auto& [p, content] : pending_) atomic_write(manifest_path(p), doc);
  }

 private:
  RunManifest manifest_;
  std::chrono::steady_clock::time_point start_;
  std::vector<std::pair<fs::path, std::string>> pending_;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string("missing ") + what + " path");
  if (!fs::is_regular_file(path)) throw ValidationError(path + ": " + what + " does not exist");
}

json pipeline_config_json(const PipelineConfig& c) {
  const auto& t = c.training;
  return {{"margin", t.margin},
          {"pairs_per_epoch", t.pairs_per_epoch},
          {"mining_enabled", t.mining_enabled},
          {"hard_fraction", t.hard_fraction},
          {"sim_high", t.sim_high},
          {"sim_low", t.sim_low},
          {"epochs", t.epochs},
          {"learning_rate", t.learning_rate},
          {"loss_form", t.loss_form == LossForm::Standard ? "standard" : "literal"},
          {"batch_pairs", t.batch_pairs},
          {"batch_entries", t.batch_entries},
          {"gae_epochs", c.gae_epochs},
          {"arch", arch_to_json(c.arch)},
          {"fanout", c.fanout},
          {"resample_per_epoch", c.resample_per_epoch},
          {"test_fraction", c.test_fraction},
          {"k", c.k},
          {"trees", c.forest.trees},
          {"max_subsample", c.forest.max_subsample},
          {"threshold", c.forest.threshold},
          {"seed", c.seed}};
}

PipelineConfig resolve_pipeline(const Common& common) {
  PipelineConfig cfg;
  if (!common.config.empty()) {
    require_file(common.config, "config file");
    cfg = load_pipeline_config(common.config);
  }
  if (common.seed) cfg.seed = *common.seed;
  return cfg;
}

std::string csv_number(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------

void cmd_synth(const Common& c) {
  Run run("synth");
  SynthSpec spec;
  if (!c.config.empty()) {
    require_file(c.config, "spec file");
    spec = load_synth_spec(c.config);
    run.input(c.config);
  }
  if (c.seed) spec.seed = *c.seed;
  if (c.out.empty()) throw ValidationError("synth: --out <dir> is required");
  if (!fs::is_directory(c.out)) throw ValidationError(c.out + ": output directory does not exist");
  const SynthNetwork net = generate(spec);
  const auto diag = learnability_check(net.graph, net.truth);
  log(LogLevel::Info, "generated " + std::to_string(net.graph.size()) + " cells, oracle accuracy " +
                          std::to_string(diag.oracle_accuracy));
  if (!diag.learnable)
    log(LogLevel::Error, "warning: spec flagged unlearnable (oracle accuracy " +
                             std::to_string(diag.oracle_accuracy) + ")");
  run.manifest().seed = spec.seed;
  run.manifest().config = {{"sites", spec.sites},
                           {"cells_per_site", spec.cells_per_site},
                           {"lte_nr_ratio", csv_number(spec.lte_share) + ":" + csv_number(spec.nr_share)},
                           {"context_clusters", spec.context_clusters},
                           {"config_noise", spec.config_noise},
                           {"misconfig_rate", spec.misconfig_rate},
                           {"misconfig_magnitude", spec.misconfig_magnitude},
                           {"inter_site_degree", spec.inter_site_degree},
                           {"seed", spec.seed},
                           {"oracle_accuracy", diag.oracle_accuracy},
                           {"learnable", diag.learnable}};
  run.output(fs::path(c.out) / "network.json", dump_json(network_to_json(net.graph)));
  run.output(fs::path(c.out) / "ground_truth.json",
             dump_json(ground_truth_to_json(net.truth, net.graph.schema())));
  run.commit();
}

void cmd_train(const Common& c, const std::string& network, const std::string& model) {
  Run run("train");
  require_file(network, "network");
  const PipelineConfig cfg = resolve_pipeline(c);
  const ModelKind kind = parse_model_kind(model);
  if (kind == ModelKind::Untrained) throw ValidationError("train: --model must be sgnn or gae");
  if (c.out.empty()) throw ValidationError("train: --out <checkpoint> is required");
  const RanGraph graph = load_network(network);
  run.input(network);
  if (!c.config.empty()) run.input(c.config);
  FitResult fit = fit_model(graph, cfg, kind, [](std::size_t epoch, double loss) {
    log(LogLevel::Debug, "epoch " + std::to_string(epoch) + " loss " + std::to_string(loss));
  });
  log(LogLevel::Info, "trained " + model + " in " + std::to_string(fit.report.wall_seconds) + " s");
  run.manifest().seed = cfg.seed;
  run.manifest().config = pipeline_config_json(cfg);
  run.manifest().config["model"] = model;
  // The report sits beside the checkpoint, so the bare name locates it.
  fit.report.checkpoint_path = fs::path(c.out).filename().string();
  run.output(c.out, dump_json(checkpoint_to_json(fit.model, graph.schema())));
  // Wall time lives in the manifest so the report itself is reproducible.
  run.output(c.out + ".report.json",
             dump_json({{"model", model},
                        {"epoch_loss", fit.report.epoch_loss},
                        {"checkpoint_path", fit.report.checkpoint_path}}));
  run.commit();
}

void cmd_embed(const Common& c, const std::string& network, const std::string& checkpoint) {
  Run run("embed");
  require_file(network, "network");
  require_file(checkpoint, "checkpoint");
  if (c.out.empty()) throw ValidationError("embed: --out <store> is required");
  const RanGraph graph = load_network(network);
  const json ckpt = load_json_file(checkpoint);
  Model model;
  try {
    model = checkpoint_from_json(ckpt, graph.schema());
  } catch (const ValidationError& ex) {
    throw ValidationError(checkpoint + ": " + ex.what());
  }
  run.input(network);
  run.input(checkpoint);
  const EmbeddingStore store = build_store(model, graph);
  run.manifest().seed = model.seed;
  run.output(c.out, dump_json(store_file_json(store, ckpt, network_to_json(graph))));
  run.commit();
}

LoadedStore open_store(const std::string& path) {
  require_file(path, "store");
  try {
    return load_store(load_json_file(path));
  } catch (const ValidationError& ex) {
    const std::string what = ex.what();
    if (what.rfind(path, 0) == 0) throw;
    throw ValidationError(path + ": " + what);
  }
}

ForestConfig forest_config(const Common& c, std::optional<double> threshold) {
  ForestConfig f;
  if (!c.config.empty()) f = resolve_pipeline(c).forest;
  f.seed = substream_seed(c.seed.value_or(0), "forest");
  if (threshold) f.threshold = *threshold;
  return f;
}

void cmd_recommend(const Common& c, const std::string& store_path, const std::string& cells_path,
                   const std::string& mode_name, std::size_t k) {
  Run run("recommend");
  const RecommendMode mode = parse_recommend_mode(mode_name);
  LoadedStore loaded = open_store(store_path);
  require_file(cells_path, "new-cells file");
  if (c.out.empty()) throw ValidationError("recommend: --out <json> is required");
  if (mode == RecommendMode::Majority && (k < 1 || k > loaded.store.size()))
    throw ValidationError("K = " + std::to_string(k) + " is out of range for a store of " +
                          std::to_string(loaded.store.size()) + " records");
  NetworkParts parts;
  try {
    parts = network_parts_from_json(load_json_file(cells_path));
  } catch (const ValidationError& ex) {
    throw ValidationError(cells_path + ": " + ex.what());
  }
  RanGraph graph;
  try {
    graph = loaded.graph.extended(parts.cells, parts.edges);
  } catch (const ValidationError& ex) {
    throw ValidationError(cells_path + ": " + ex.what());
  }
  run.input(store_path);
  run.input(cells_path);
  const ForestConfig fcfg = forest_config(c, std::nullopt);
  const IsolationForest forest = fit_forest(loaded.store, fcfg);
  json out = json::array();
  for (const auto& cell : parts.cells) {
    const auto z = embed_cell(loaded.model, graph, cell.cell_id);
    const Recommendation r = recommend(loaded.store, z, mode, k, graph.schema());
    json y = json::object();
    for (const auto& [name, v] : denormalize(r.y_hat, loaded.model.stats, graph.schema(), cell.technology))
      y[name] = v;
    json sources = json::array();
    for (const auto& s : r.sources) sources.push_back({{"cell_id", s.cell_id}, {"distance", s.distance}});
    out.push_back({{"cell_id", cell.cell_id},
                   {"mode", to_string(mode)},
                   {"y_hat", y},
                   {"sources", sources},
                   {"anomaly_score", anomaly_score(forest, z)}});
    // Later cells in the same file may cite this one.
    add_to_store(loaded.store, cell.cell_id, z, r.y_hat);
  }
  run.manifest().seed = c.seed.value_or(0);
  run.manifest().config = {{"mode", to_string(mode)}, {"k", k}, {"trees", fcfg.trees}};
  run.output(c.out, dump_json(out));
  run.commit();
}

void cmd_detect(const Common& c, const std::string& store_path, std::optional<double> threshold) {
  Run run("detect");
  LoadedStore loaded = open_store(store_path);
  if (c.out.empty()) throw ValidationError("detect: --out <json> is required");
  run.input(store_path);
  const ForestConfig fcfg = forest_config(c, threshold);
  AnomalyReport report = score_network(loaded.store, fit_forest(loaded.store, fcfg), fcfg.threshold);
  std::stable_sort(report.cells.begin(), report.cells.end(), [](const CellScore& a, const CellScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.cell_id < b.cell_id;
  });
  json cells = json::array();
  for (const auto& s : report.cells)
    cells.push_back({{"cell_id", s.cell_id}, {"score", s.score}, {"flagged", s.flagged}});
  run.manifest().seed = c.seed.value_or(0);
  run.manifest().config = {{"threshold", fcfg.threshold},
                           {"trees", fcfg.trees},
                           {"max_subsample", fcfg.max_subsample}};
  run.output(c.out, dump_json({{"threshold", report.threshold}, {"cells", cells}}));
  run.commit();
}

std::string projection_csv(const std::vector<std::string>& ids, const Projection2D& p) {
  std::string csv = "cell_id,pc1,pc2\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    csv += ids[i] + "," + csv_number(p.points(i, 0)) + "," + csv_number(p.points(i, 1)) + "\n";
  return csv;
}

void cmd_evaluate(const Common& c, const std::string& network) {
  Run run("evaluate");
  require_file(network, "network");
  const PipelineConfig cfg = resolve_pipeline(c);
  if (c.out.empty()) throw ValidationError("evaluate: --out <csv> is required");
  const RanGraph graph = load_network(network);
  run.input(network);
  if (!c.config.empty()) run.input(c.config);
  const auto cmp = compare_models(graph, cfg, [](const std::string& m) { log(LogLevel::Info, m); });
  const std::string type = fs::path(network).stem().string();
  std::string csv = "model,type,split,accuracy\n";
  for (const auto& r : cmp.rows) csv += r.model + "," + type + "," + r.split + "," + csv_number(r.accuracy) + "\n";
  run.output(c.out, csv);
  const fs::path out(c.out);
  for (const auto& [model, proj] : cmp.projections) {
    fs::path p = out.parent_path() / (out.stem().string() + "." + model + ".projection.csv");
    run.output(p, projection_csv(cmp.cell_ids, proj));
  }
  run.manifest().seed = cfg.seed;
  run.manifest().config = pipeline_config_json(cfg);
  run.commit();
}

void cmd_project(const Common& c, const std::string& store_path) {
  Run run("project");
  LoadedStore loaded = open_store(store_path);
  if (c.out.empty()) throw ValidationError("project: --out <csv> is required");
  run.input(store_path);
  const auto records = loaded.store.records();
  Matrix z(records.size(), loaded.store.dim());
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < records.size(); ++i) {
    ids.push_back(records[i].cell_id);
    std::copy(records[i].z.begin(), records[i].z.end(), z.row(i).begin());
  }
  run.output(c.out, projection_csv(ids, pca_project(z)));
  run.commit();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cell embedding, configuration recommendation and misconfiguration detection for RAN graphs"};
  app.require_subcommand(1);
  Common common;
  std::string network, checkpoint, store, cells, model = "sgnn", mode = "closest";
  std::size_t k = 5;
  std::optional<double> threshold;

  auto add_common = [&](CLI::App* sub, bool with_config) {
    sub->add_option("--seed", common.seed, "Root seed for every random stream");
    if (with_config) sub->add_option("--config", common.config, "Key = value config file");
    sub->add_option("--out", common.out, "Output path")->required();
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic network and its ground truth");
  add_common(synth, true);

  auto* train = app.add_subcommand("train", "Train an S-GNN or GAE encoder");
  train->add_option("network", network, "Network JSON")->required();
  train->add_option("--model", model, "sgnn | gae");
  add_common(train, true);

  auto* embed = app.add_subcommand("embed", "Embed every cell of a network into a store");
  embed->add_option("network", network, "Network JSON")->required();
  embed->add_option("checkpoint", checkpoint, "Checkpoint JSON")->required();
  add_common(embed, false);

  auto* rec = app.add_subcommand("recommend", "Recommend configs for new cells");
  rec->add_option("store", store, "Store JSON")->required();
  rec->add_option("cells", cells, "New cells JSON {cells, edges}")->required();
  rec->add_option("--mode", mode, "closest | majority");
  rec->add_option("--k", k, "Neighbors for majority mode");
  add_common(rec, true);

  auto* detect = app.add_subcommand("detect", "Score every stored cell with an isolation forest");
  detect->add_option("store", store, "Store JSON")->required();
  detect->add_option("--threshold", threshold, "Flag scores above this value");
  add_common(detect, true);

  auto* evaluate = app.add_subcommand("evaluate", "Compare untrained, GAE and S-GNN embeddings");
  evaluate->add_option("network", network, "Network JSON")->required();
  add_common(evaluate, true);

  auto* project = app.add_subcommand("project", "2-D PCA projection of a store");
  project->add_option("store", store, "Store JSON")->required();
  add_common(project, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) cmd_synth(common);
    else if (*train) cmd_train(common, network, model);
    else if (*embed) cmd_embed(common, network, checkpoint);
    else if (*rec) cmd_recommend(common, store, cells, mode, k);
    else if (*detect) cmd_detect(common, store, threshold);
    else if (*evaluate) cmd_evaluate(common, network);
    else if (*project) cmd_project(common, store);
    return 0;
  } catch (const ValidationError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "runtime error: " << ex.what() << "\n";
    return 2;
  }
}
