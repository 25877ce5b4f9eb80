#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <type_traits>

#include "ranrec/anomaly.hpp"
#include "ranrec/error.hpp"
#include "ranrec/gnn.hpp"
#include "ranrec/graph.hpp"
#include "ranrec/sampler.hpp"
#include "ranrec/synth.hpp"
#include "ranrec/training.hpp"

namespace ranrec {

/// Flat "key = value" text; '#' starts a comment. Keys are recorded with the
/// line they came from so errors can point at them.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& source) {
    KeyValueFile kv;
    kv.source_ = source;
    std::size_t line_no = 0, pos = 0;
    while (pos <= text.size()) {
      const std::size_t end = std::min(text.find('\n', pos), text.size());
      std::string line = text.substr(pos, end - pos);
      pos = end + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ValidationError(source + ":" + std::to_string(line_no) + ": expected 'key = value'");
      std::string key = trim(line.substr(0, eq));
      std::string value = trim(line.substr(eq + 1));
      if (key.empty())
        throw ValidationError(source + ":" + std::to_string(line_no) + ": empty key");
      if (kv.values_.count(key))
        throw ValidationError(source + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
      kv.values_[key] = {std::move(value), line_no};
    }
    return kv;
  }

  static KeyValueFile load(const std::filesystem::path& path) {
    return parse(read_text_file(path), path.string());
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& source() const { return source_; }

  std::map<std::string, std::string> entries() const {
    std::map<std::string, std::string> out;
    for (const auto& [k, v] : values_) out[k] = v.first;
    return out;
  }

  void read(const std::string& key, std::string& out) {
    if (auto v = take(key)) out = *v;
  }
  void read(const std::string& key, double& out) {
    if (auto v = take(key)) {
      try {
        std::size_t used = 0;
        const double d = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing characters");
        out = d;
      } catch (const std::exception&) {
        fail(key, "expected a number, got '" + *v + "'");
      }
    }
  }
  void read(const std::string& key, std::uint64_t& out) {
    if (auto v = take(key)) {
      const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
      if (ec != std::errc() || ptr != v->data() + v->size())
        fail(key, "expected a non-negative integer, got '" + *v + "'");
    }
  }
  void read(const std::string& key, bool& out) {
    if (auto v = take(key)) {
      if (*v == "true" || *v == "1") out = true;
      else if (*v == "false" || *v == "0") out = false;
      else fail(key, "expected true or false, got '" + *v + "'");
    }
  }
  template <class T>
    requires(std::is_same_v<T, std::size_t> && !std::is_same_v<std::size_t, std::uint64_t>)
  void read(const std::string& key, T& out) {
    std::uint64_t v = out;
    read(key, v);
    out = static_cast<T>(v);
  }

  /// Throws if any key was never consumed.
  void require_all_used() const {
    for (const auto& [k, v] : values_)
      if (!used_.count(k))
        throw ValidationError(source_ + ":" + std::to_string(v.second) + ": unknown key '" + k + "'");
  }

  [[noreturn]] void fail(const std::string& key, const std::string& why) const {
    const auto it = values_.find(key);
    const std::string where = it == values_.end() ? source_ : source_ + ":" + std::to_string(it->second.second);
    throw ValidationError(where + ": " + key + ": " + why);
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  std::optional<std::string> take(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    used_.insert(key);
    return it->second.first;
  }

  std::string source_;
  std::map<std::string, std::pair<std::string, std::size_t>> values_;
  std::set<std::string> used_;
};

/// Everything a training or evaluation run needs besides the network.
struct PipelineConfig {
  ContrastiveConfig training;
  std::size_t gae_epochs = 0;  ///< 0 means training.epochs
  ArchConfig arch;
  std::size_t fanout = 8;
  bool resample_per_epoch = false;
  double test_fraction = 0.2;
  std::size_t k = 5;
  ForestConfig forest;
  std::uint64_t seed = 0;
};

inline void apply(KeyValueFile& kv, PipelineConfig& cfg) {
  auto& t = cfg.training;
  kv.read("margin", t.margin);
  kv.read("pairs_per_epoch", t.pairs_per_epoch);
  kv.read("mining_enabled", t.mining_enabled);
  kv.read("hard_fraction", t.hard_fraction);
  kv.read("sim_high", t.sim_high);
  kv.read("sim_low", t.sim_low);
  kv.read("epochs", t.epochs);
  kv.read("learning_rate", t.learning_rate);
  kv.read("batch_pairs", t.batch_pairs);
  kv.read("batch_entries", t.batch_entries);
  kv.read("mining_pool_limit", t.mining_pool_limit);
  std::string form = t.loss_form == LossForm::Standard ? "standard" : "literal";
  kv.read("loss_form", form);
  if (form == "standard") t.loss_form = LossForm::Standard;
  else if (form == "literal") t.loss_form = LossForm::Literal;
  else kv.fail("loss_form", "expected standard or literal, got '" + form + "'");
  kv.read("gae_epochs", cfg.gae_epochs);
  kv.read("layers", cfg.arch.layers);
  kv.read("heads", cfg.arch.heads);
  kv.read("head_dim", cfg.arch.head_dim);
  kv.read("ffn_hidden", cfg.arch.ffn_hidden);
  kv.read("layer_dim", cfg.arch.layer_dim);
  kv.read("d", cfg.arch.embedding_dim);
  kv.read("slope", cfg.arch.slope);
  kv.read("fanout", cfg.fanout);
  kv.read("resample_per_epoch", cfg.resample_per_epoch);
  kv.read("test_fraction", cfg.test_fraction);
  kv.read("k", cfg.k);
  kv.read("trees", cfg.forest.trees);
  kv.read("max_subsample", cfg.forest.max_subsample);
  kv.read("threshold", cfg.forest.threshold);
  kv.read("seed", cfg.seed);
  kv.require_all_used();
  t.validate();
  if (cfg.fanout == 0) throw ValidationError(kv.source() + ": fanout must be >= 1");
  if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0))
    throw ValidationError(kv.source() + ": test_fraction must lie strictly between 0 and 1");
  if (cfg.k == 0) throw ValidationError(kv.source() + ": k must be >= 1");
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  PipelineConfig cfg;
  auto kv = KeyValueFile::load(path);
  apply(kv, cfg);
  return cfg;
}

inline void apply(KeyValueFile& kv, SynthSpec& spec) {
  kv.read("sites", spec.sites);
  kv.read("cells_per_site", spec.cells_per_site);
  if (kv.has("lte_nr_ratio")) {
    std::string ratio;
    kv.read("lte_nr_ratio", ratio);
    const auto colon = ratio.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument("no colon");
      spec.lte_share = std::stod(ratio.substr(0, colon));
      spec.nr_share = std::stod(ratio.substr(colon + 1));
    } catch (const std::exception&) {
      kv.fail("lte_nr_ratio", "expected 'a:b', got '" + ratio + "'");
    }
  }
  kv.read("context_clusters", spec.context_clusters);
  kv.read("config_noise", spec.config_noise);
  kv.read("misconfig_rate", spec.misconfig_rate);
  kv.read("misconfig_magnitude", spec.misconfig_magnitude);
  kv.read("inter_site_degree", spec.inter_site_degree);
  kv.read("seed", spec.seed);
  kv.require_all_used();
  spec.validate();
}

inline SynthSpec load_synth_spec(const std::filesystem::path& path) {
  SynthSpec spec;
  auto kv = KeyValueFile::load(path);
  apply(kv, spec);
  return spec;
}

}  // namespace ranrec
