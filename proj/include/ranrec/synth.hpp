#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "ranrec/error.hpp"
#include "ranrec/evaluation.hpp"
#include "ranrec/graph.hpp"
#include "ranrec/rng.hpp"

namespace ranrec {

/// Parameters of the synthetic network generator.
struct SynthSpec {
  std::size_t sites = 50;
  std::size_t cells_per_site = 6;
  double lte_share = 2.0;  ///< LTE:NR mix ratio, LTE part
  double nr_share = 1.0;   ///< LTE:NR mix ratio, NR part
  std::size_t context_clusters = 3;
  double config_noise = 0.02;  ///< std-dev in nominal normalized units
  double misconfig_rate = 0.05;
  double misconfig_magnitude = 5.0;
  double inter_site_degree = 3.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (sites == 0 || cells_per_site == 0 || context_clusters == 0)
      throw ValidationError("synth: counts must be positive");
    if (lte_share < 0.0 || nr_share < 0.0 || lte_share + nr_share <= 0.0)
      throw ValidationError("synth: technology shares must be non-negative and not both zero");
    if (!(config_noise >= 0.0)) throw ValidationError("synth: config_noise must be >= 0");
    if (!(misconfig_rate >= 0.0 && misconfig_rate <= 1.0))
      throw ValidationError("synth: misconfig_rate must lie in [0,1]");
    if (!(misconfig_magnitude >= 0.0)) throw ValidationError("synth: misconfig_magnitude must be >= 0");
    if (!(inter_site_degree >= 0.0)) throw ValidationError("synth: inter_site_degree must be >= 0");
  }
};

/// Nominal unit of a misconfiguration offset, as a fraction of an attribute's
/// range: a corrupted attribute moves by magnitude * [0.5, 1] of this.
inline constexpr double kMisconfigUnit = 0.1;

struct CellTruth {
  std::size_t cluster = 0;
  std::vector<double> clean_config;     ///< nominal-normalized, config-slot order
  std::vector<double> observed_config;  ///< nominal-normalized, before rounding
  bool corrupted = false;
  std::vector<std::string> corrupted_attributes;
};

/// Ground truth per cell id, in graph order.
struct GroundTruth {
  std::vector<std::string> cell_ids;
  std::vector<CellTruth> cells;

  std::size_t corrupted_count() const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [](const CellTruth& c) { return c.corrupted; }));
  }
  const CellTruth& at(const std::string& id) const {
    for (std::size_t i = 0; i < cell_ids.size(); ++i)
      if (cell_ids[i] == id) return cells[i];
    throw ValidationError("ground truth has no cell '" + id + "'");
  }
};

struct SynthNetwork {
  RanGraph graph;
  GroundTruth truth;
};

namespace synth {

/// Nominal range and quantization step of a generated attribute.
struct AttributeSpec {
  Attribute attribute;
  double lo = 0.0;
  double hi = 1.0;
  double step = 0.0;  ///< 0 for continuous
};

inline std::vector<AttributeSpec> attribute_specs() {
  using T = Technology;
  using R = Role;
  using K = Kind;
  using A = Aggregation;
  return {
      {{"channelBandwidth", T::LTE, R::Predictor, K::Discrete, A::Mode}, 5, 20, 5},
      {{"earfcnDl", T::LTE, R::Predictor, K::Discrete, A::Mode}, 0, 3000, 1},
      {{"antennaHeight", T::LTE, R::Predictor, K::Continuous, A::Median}, 0, 80, 0},
      {{"interSiteDistance", T::LTE, R::Predictor, K::Continuous, A::Median}, 0, 6000, 0},
      {{"sectorAzimuth", T::LTE, R::Predictor, K::Continuous, A::Median}, 0, 360, 0},
      {{"pZeroNominalPusch", T::LTE, R::Config, K::Discrete, A::Mode}, -117, -86, 1},
      {{"preambleInitialReceivedTargetPower", T::LTE, R::Config, K::Discrete, A::Mode}, -120, -90, 2},
      {{"qRxLevMin", T::LTE, R::Config, K::Discrete, A::Mode}, -140, -110, 2},
      {{"cellRange", T::LTE, R::Config, K::Continuous, A::Median}, 1, 15, 0},
      {{"bSChannelBwDL", T::NR, R::Predictor, K::Discrete, A::Mode}, 20, 100, 20},
      {{"arfcnDL", T::NR, R::Predictor, K::Discrete, A::Mode}, 620000, 680000, 1},
      {{"antennaHeight", T::NR, R::Predictor, K::Continuous, A::Median}, 0, 80, 0},
      {{"interSiteDistance", T::NR, R::Predictor, K::Continuous, A::Median}, 0, 6000, 0},
      {{"sectorAzimuth", T::NR, R::Predictor, K::Continuous, A::Median}, 0, 360, 0},
      {{"endcUlNrLowQualThresh", T::NR, R::Config, K::Discrete, A::Mode}, -20, 0, 1},
      {{"rachPreambleRecTargetPower", T::NR, R::Config, K::Discrete, A::Mode}, -130, -100, 2},
      {{"ssPbchBlockPower", T::NR, R::Config, K::Continuous, A::Mean}, -20, 20, 0},
  };
}

inline AttributeSchema schema() {
  std::vector<Attribute> entries;
  for (const auto& s : attribute_specs()) entries.push_back(s.attribute);
  return AttributeSchema(std::move(entries));
}

/// Nominal-normalized clean config of a cluster for one technology, in the
/// order that technology's config attributes appear in the schema. Each
/// cluster emphasizes a different subset of attributes.
inline std::vector<double> cluster_config(std::size_t cluster, std::size_t clusters,
                                          std::size_t attribute_count) {
  std::vector<double> base(attribute_count);
  const double position = clusters > 1 ? static_cast<double>(cluster) / static_cast<double>(clusters - 1) : 0.5;
  for (std::size_t a = 0; a < attribute_count; ++a) {
    if (a + 1 == attribute_count) {
      base[a] = 0.15 + 0.6 * position;  // graded with the archetype
    } else {
      base[a] = (a % clusters == cluster % std::max<std::size_t>(1, attribute_count - 1)) ? 0.8 : 0.1;
    }
  }
  return base;
}

/// Context archetype k: typical antenna height (m) and inter-site distance (m).
struct Archetype {
  double height_mean;
  double height_sd;
  double isd_mean;
  double isd_sd;
};

inline Archetype archetype(std::size_t k) {
  const double kk = static_cast<double>(k);
  const double isd = 400.0 * std::pow(2.2, kk);
  return {20.0 + 12.0 * kk, 5.0, isd, 0.3 * isd};
}

inline double quantize(double raw, const AttributeSpec& s) {
  if (s.step <= 0.0) return raw;
  const double q = s.lo + std::round((raw - s.lo) / s.step) * s.step;
  return std::clamp(q, s.lo, s.hi);
}

inline double to_raw(double u, const AttributeSpec& s) { return quantize(s.lo + u * (s.hi - s.lo), s); }

}  // namespace synth

/// Generates a network whose configs are a function of each cell's context
/// cluster and technology, plus gaussian noise and injected misconfigurations.
inline SynthNetwork generate(const SynthSpec& spec) {
  spec.validate();
  const auto specs = synth::attribute_specs();
  const AttributeSchema schema = synth::schema();
  Rng rng(substream_seed(spec.seed, "synth"));

  // Sites on a plane; clusters are spatial regions around random centers.
  const double side = std::sqrt(static_cast<double>(spec.sites)) * 1000.0;
  std::vector<std::pair<double, double>> centers(spec.context_clusters);
  for (auto& c : centers) c = {rng.uniform(0, side), rng.uniform(0, side)};
  struct Site {
    double x, y;
    std::size_t cluster;
    double height, isd, rotation;
  };
  std::vector<Site> sites(spec.sites);
  for (std::size_t s = 0; s < spec.sites; ++s) {
    Rng srng(substream_seed(spec.seed, "site-" + std::to_string(s)));
    Site& site = sites[s];
    site.x = srng.uniform(0, side);
    site.y = srng.uniform(0, side);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < centers.size(); ++k) {
      const double d = std::hypot(site.x - centers[k].first, site.y - centers[k].second);
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    site.cluster = best;
    const auto arch = synth::archetype(best);
    site.height = std::clamp(srng.normal(arch.height_mean, arch.height_sd), 5.0, 79.0);
    site.isd = std::clamp(srng.normal(arch.isd_mean, arch.isd_sd), 150.0, 5900.0);
    site.rotation = srng.uniform(0.0, 120.0);
  }

  const double share = spec.lte_share / (spec.lte_share + spec.nr_share);
  const auto lte_per_site = static_cast<std::size_t>(std::llround(share * static_cast<double>(spec.cells_per_site)));
  auto slot_of = [&](Technology t, Role r, const std::string& name) {
    return *schema.find(t, r, name);
  };
  auto spec_of = [&](Technology t, Role r, const std::string& name) -> const synth::AttributeSpec& {
    return specs[slot_of(t, r, name)];
  };

  std::vector<CellRecord> cells;
  GroundTruth truth;
  std::vector<std::size_t> cell_site;
  const auto& config_slots = schema.config_slots();
  for (std::size_t s = 0; s < spec.sites; ++s) {
    const Site& site = sites[s];
    Rng crng(substream_seed(spec.seed, "cells-" + std::to_string(s)));
    char node[32];
    std::snprintf(node, sizeof node, "node%03zu", s);
    const std::size_t n_lte = std::min(lte_per_site, spec.cells_per_site);
    for (std::size_t c = 0; c < spec.cells_per_site; ++c) {
      const Technology tech = c < n_lte ? Technology::LTE : Technology::NR;
      const std::size_t sector = tech == Technology::LTE ? c : c - n_lte;
      const std::size_t sectors = tech == Technology::LTE ? n_lte : spec.cells_per_site - n_lte;
      CellRecord rec;
      rec.node_id = node;
      rec.cell_id = std::string(node) + (tech == Technology::LTE ? "-L" : "-N") + std::to_string(sector + 1);
      rec.technology = tech;
      const bool lte = tech == Technology::LTE;
      const double azimuth = std::fmod(site.rotation + 360.0 * static_cast<double>(sector) /
                                                           static_cast<double>(std::max<std::size_t>(1, sectors)),
                                       360.0);
      const std::size_t bw_class = crng.below(4);
      rec.raw_predictors[lte ? "channelBandwidth" : "bSChannelBwDL"] =
          lte ? 5.0 * static_cast<double>(bw_class + 1)
              : std::array<double, 4>{20, 40, 60, 100}[bw_class];
      rec.raw_predictors[lte ? "earfcnDl" : "arfcnDL"] =
          lte ? std::array<double, 4>{100, 1300, 1850, 2850}[crng.below(4)]
              : std::array<double, 4>{627264, 636666, 648000, 653952}[crng.below(4)];
      rec.raw_predictors["antennaHeight"] = std::clamp(site.height + crng.normal(0.0, 1.0), 1.0, 80.0);
      rec.raw_predictors["interSiteDistance"] = site.isd;
      rec.raw_predictors["sectorAzimuth"] = azimuth;

      // Clean config: the cluster's lookup row for this technology.
      std::vector<std::string> names;
      for (std::size_t slot : config_slots)
        if (schema.at(slot).technology == tech) names.push_back(schema.at(slot).name);
      const auto base = synth::cluster_config(site.cluster, spec.context_clusters, names.size());
      CellTruth t;
      t.cluster = site.cluster;
      t.clean_config.assign(config_slots.size(), 0.0);
      t.observed_config.assign(config_slots.size(), 0.0);
      std::vector<double> observed(names.size());
      for (std::size_t a = 0; a < names.size(); ++a)
        observed[a] = std::clamp(base[a] + crng.normal(0.0, spec.config_noise), 0.0, 1.0);
      for (std::size_t a = 0; a < names.size(); ++a) {
        const std::size_t slot = slot_of(tech, Role::Config, names[a]);
        const auto pos = static_cast<std::size_t>(
            std::find(config_slots.begin(), config_slots.end(), slot) - config_slots.begin());
        t.clean_config[pos] = base[a];
        t.observed_config[pos] = observed[a];
        rec.raw_configs[names[a]] = synth::to_raw(observed[a], spec_of(tech, Role::Config, names[a]));
      }
      cells.push_back(std::move(rec));
      truth.cell_ids.push_back(cells.back().cell_id);
      truth.cells.push_back(std::move(t));
      cell_site.push_back(s);
    }
  }

  // Misconfigurations: exactly round(rate * n) cells, two config attributes each.
  const std::size_t n = cells.size();
  const auto corrupt_count = static_cast<std::size_t>(std::llround(spec.misconfig_rate * static_cast<double>(n)));
  {
    Rng mrng(substream_seed(spec.seed, "misconfig"));
    std::vector<std::uint32_t> order(n);
    for (std::uint32_t i = 0; i < n; ++i) order[i] = i;
    mrng.shuffle(order);
    order.resize(corrupt_count);
    std::sort(order.begin(), order.end());
    for (std::uint32_t i : order) {
      CellRecord& rec = cells[i];
      CellTruth& t = truth.cells[i];
      std::vector<std::size_t> positions;
      for (std::size_t p = 0; p < config_slots.size(); ++p)
        if (schema.at(config_slots[p]).technology == rec.technology) positions.push_back(p);
      mrng.shuffle(positions);
      positions.resize(std::min<std::size_t>(2, positions.size()));
      std::sort(positions.begin(), positions.end());
      t.corrupted = true;
      for (std::size_t p : positions) {
        const Attribute& a = schema.at(config_slots[p]);
        const double shift = spec.misconfig_magnitude * kMisconfigUnit * mrng.uniform(0.5, 1.0);
        double& u = t.observed_config[p];
        u = std::clamp(u < 0.5 ? u + shift : u - shift, 0.0, 1.0);
        rec.raw_configs[a.name] = synth::to_raw(u, specs[config_slots[p]]);
        t.corrupted_attributes.push_back(a.name);
      }
    }
  }

  // Inter-site edges between nearest sites until the average inter-node degree
  // is reached.
  std::vector<EdgeSpec> edges;
  if (spec.sites >= 2 && spec.inter_site_degree > 0.0) {
    const auto target = static_cast<std::size_t>(std::llround(spec.inter_site_degree * static_cast<double>(n) / 2.0));
    const auto cap = static_cast<std::size_t>(std::ceil(spec.inter_site_degree));
    if (cap > n - spec.cells_per_site)
      throw ValidationError("synth: inter_site_degree " + std::to_string(spec.inter_site_degree) +
                            " is infeasible with " + std::to_string(n - spec.cells_per_site) +
                            " cells on other sites");
    Rng erng(substream_seed(spec.seed, "edges"));
    struct Candidate {
      double distance;
      double jitter;
      std::uint32_t a, b;
    };
    std::vector<Candidate> candidates;
    for (std::uint32_t a = 0; a < n; ++a)
      for (std::uint32_t b = a + 1; b < n; ++b) {
        if (cell_site[a] == cell_site[b]) continue;
        const Site& sa = sites[cell_site[a]];
        const Site& sb = sites[cell_site[b]];
        candidates.push_back({std::hypot(sa.x - sb.x, sa.y - sb.y), erng.uniform(), a, b});
      }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& x, const Candidate& y) {
      return std::tie(x.distance, x.jitter, x.a, x.b) < std::tie(y.distance, y.jitter, y.a, y.b);
    });
    // A second pass with one extra slot per cell absorbs greedy leftovers.
    std::vector<std::size_t> degree(n, 0);
    std::vector<bool> taken(candidates.size(), false);
    for (std::size_t limit : {cap, cap + 1}) {
      for (std::size_t i = 0; i < candidates.size() && edges.size() < target; ++i) {
        const auto& c = candidates[i];
        if (taken[i] || degree[c.a] >= limit || degree[c.b] >= limit) continue;
        taken[i] = true;
        ++degree[c.a];
        ++degree[c.b];
        edges.push_back({cells[c.a].cell_id, cells[c.b].cell_id, EdgeKind::InterNode});
      }
    }
    if (edges.size() < target)
      throw ValidationError("synth: could not place " + std::to_string(target) +
                            " inter-node edges (placed " + std::to_string(edges.size()) + ")");
  }

  SynthNetwork out{RanGraph::build(schema, std::move(cells), edges), std::move(truth)};
  return out;
}

inline json ground_truth_to_json(const GroundTruth& truth, const AttributeSchema& schema) {
  json doc = json::object();
  for (std::size_t i = 0; i < truth.cells.size(); ++i) {
    const auto& t = truth.cells[i];
    json clean = json::object();
    const auto& slots = schema.config_slots();
    for (std::size_t p = 0; p < slots.size(); ++p)
      clean[std::string(to_string(schema.at(slots[p]).technology)) + ":" + schema.at(slots[p]).name] =
          t.clean_config[p];
    doc[truth.cell_ids[i]] = {{"cluster", t.cluster},
                              {"corrupted", t.corrupted},
                              {"corrupted_attributes", t.corrupted_attributes},
                              {"clean_config", clean}};
  }
  return doc;
}

inline GroundTruth ground_truth_from_json(const json& doc, const AttributeSchema& schema) {
  GroundTruth truth;
  const auto& slots = schema.config_slots();
  for (const auto& [id, v] : doc.items()) {
    CellTruth t;
    t.cluster = v.at("cluster").get<std::size_t>();
    t.corrupted = v.at("corrupted").get<bool>();
    t.corrupted_attributes = v.value("corrupted_attributes", std::vector<std::string>{});
    t.clean_config.assign(slots.size(), 0.0);
    if (v.contains("clean_config"))
      for (std::size_t p = 0; p < slots.size(); ++p) {
        const std::string key = std::string(to_string(schema.at(slots[p]).technology)) + ":" +
                                schema.at(slots[p]).name;
        t.clean_config[p] = v["clean_config"].value(key, 0.0);
      }
    truth.cell_ids.push_back(id);
    truth.cells.push_back(std::move(t));
  }
  return truth;
}

struct LearnabilityDiagnostic {
  double oracle_accuracy = 0.0;
  bool learnable = false;
  double threshold = 0.98;
};

/// Predicts every cell's config with the mean observed config of its
/// (cluster, technology) group and scores the prediction with the mean-cosine
/// accuracy, in the generator's nominal units. Below `threshold` the spec is
/// flagged as unlearnable.
inline LearnabilityDiagnostic learnability_check(const RanGraph& graph, const GroundTruth& truth,
                                                 double threshold = 0.98) {
  const auto specs = synth::attribute_specs();
  const auto& schema = graph.schema();
  if (schema.hash() != synth::schema().hash())
    throw ValidationError("learnability_check: network was not produced by the generator");
  const auto& slots = schema.config_slots();
  std::vector<std::vector<double>> observed;
  for (const auto& c : graph.cells()) {
    std::vector<double> u(slots.size(), 0.0);
    for (std::size_t p = 0; p < slots.size(); ++p) {
      const Attribute& a = schema.at(slots[p]);
      if (a.technology != c.technology) continue;
      const auto it = c.raw_configs.find(a.name);
      if (it == c.raw_configs.end()) continue;
      const auto& s = specs[slots[p]];
      u[p] = (it->second - s.lo) / (s.hi - s.lo);
    }
    observed.push_back(std::move(u));
  }
  std::map<std::pair<std::size_t, Technology>, std::vector<double>> sums;
  std::map<std::pair<std::size_t, Technology>, std::size_t> counts;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto key = std::make_pair(truth.at(graph.cell(static_cast<std::uint32_t>(i)).cell_id).cluster,
                                    graph.cell(static_cast<std::uint32_t>(i)).technology);
    auto& s = sums[key];
    s.resize(slots.size(), 0.0);
    for (std::size_t p = 0; p < slots.size(); ++p) s[p] += observed[i][p];
    ++counts[key];
  }
  std::vector<std::vector<double>> predicted;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const auto key = std::make_pair(truth.at(graph.cell(static_cast<std::uint32_t>(i)).cell_id).cluster,
                                    graph.cell(static_cast<std::uint32_t>(i)).technology);
    std::vector<double> m = sums[key];
    for (auto& v : m) v /= static_cast<double>(counts[key]);
    predicted.push_back(std::move(m));
  }
  LearnabilityDiagnostic d;
  d.threshold = threshold;
  d.oracle_accuracy = accuracy(observed, predicted).accuracy;
  d.learnable = d.oracle_accuracy >= threshold;
  return d;
}

}  // namespace ranrec
