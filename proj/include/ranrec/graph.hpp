#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ranrec/error.hpp"
#include "ranrec/rng.hpp"

namespace ranrec {

using json = nlohmann::ordered_json;

enum class Technology { LTE, NR };
enum class Role { Predictor, Config };
enum class Kind { Continuous, Discrete };
enum class Aggregation { Mode, Median, Mean };
enum class EdgeKind { IntraNode, InterNode };

inline const char* to_string(Technology t) { return t == Technology::LTE ? "LTE" : "NR"; }
inline const char* to_string(Role r) { return r == Role::Predictor ? "predictor" : "config"; }
inline const char* to_string(Kind k) { return k == Kind::Continuous ? "continuous" : "discrete"; }
inline const char* to_string(Aggregation a) {
  switch (a) {
    case Aggregation::Mode: return "mode";
    case Aggregation::Median: return "median";
    case Aggregation::Mean: return "mean";
  }
  return "?";
}
inline const char* to_string(EdgeKind k) { return k == EdgeKind::IntraNode ? "intra_node" : "inter_node"; }

namespace detail {
template <class E>
E parse_enum(const std::string& text, std::initializer_list<std::pair<const char*, E>> options,
             const std::string& what) {
  for (const auto& [name, value] : options)
    if (text == name) return value;
  throw ValidationError("invalid " + what + " '" + text + "'");
}
}  // namespace detail

inline Technology parse_technology(const std::string& s) {
  return detail::parse_enum<Technology>(s, {{"LTE", Technology::LTE}, {"NR", Technology::NR}},
                                        "technology");
}
inline Role parse_role(const std::string& s) {
  return detail::parse_enum<Role>(s, {{"predictor", Role::Predictor}, {"config", Role::Config}},
                                  "role");
}
inline Kind parse_kind(const std::string& s) {
  return detail::parse_enum<Kind>(
      s, {{"continuous", Kind::Continuous}, {"discrete", Kind::Discrete}}, "kind");
}
inline Aggregation parse_aggregation(const std::string& s) {
  return detail::parse_enum<Aggregation>(
      s, {{"mode", Aggregation::Mode}, {"median", Aggregation::Median}, {"mean", Aggregation::Mean}},
      "aggregation");
}
inline EdgeKind parse_edge_kind(const std::string& s) {
  return detail::parse_enum<EdgeKind>(
      s, {{"intra_node", EdgeKind::IntraNode}, {"inter_node", EdgeKind::InterNode}}, "edge kind");
}

struct Attribute {
  std::string name;
  Technology technology = Technology::LTE;
  Role role = Role::Predictor;
  Kind kind = Kind::Continuous;
  Aggregation aggregation = Aggregation::Median;
};

/// Ordered attribute list. Vector slots are laid out LTE block first, then
/// NR, each block in schema order.
class AttributeSchema {
 public:
  AttributeSchema() = default;
  explicit AttributeSchema(std::vector<Attribute> entries) : entries_(std::move(entries)) {
    std::set<std::tuple<Technology, Role, std::string>> seen;
    for (const auto& a : entries_) {
      if (a.name.empty()) throw ValidationError("schema: attribute with empty name");
      if (!seen.emplace(a.technology, a.role, a.name).second)
        throw ValidationError("schema: duplicate attribute '" + a.name + "' for " +
                              to_string(a.technology) + " " + to_string(a.role));
    }
    for (Technology t : {Technology::LTE, Technology::NR})
      for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].technology != t) continue;
        (entries_[i].role == Role::Predictor ? predictor_slots_ : config_slots_).push_back(i);
      }
  }

  const std::vector<Attribute>& entries() const { return entries_; }
  const Attribute& at(std::size_t i) const { return entries_.at(i); }

  /// Schema indices of predictor attributes in vector-slot order.
  const std::vector<std::size_t>& predictor_slots() const { return predictor_slots_; }
  const std::vector<std::size_t>& config_slots() const { return config_slots_; }
  std::size_t predictor_dim() const { return predictor_slots_.size(); }
  std::size_t config_dim() const { return config_slots_.size(); }

  std::optional<std::size_t> find(Technology t, Role r, const std::string& name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].technology == t && entries_[i].role == r && entries_[i].name == name) return i;
    return std::nullopt;
  }

  /// Stable 64-bit fingerprint of the attribute layout, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = fnv1a64("ranrec-schema-v1");
    for (const auto& a : entries_) {
      std::ostringstream os;
      os << a.name << '|' << to_string(a.technology) << '|' << to_string(a.role) << '|'
         << to_string(a.kind);
      // Aggregation only matters for config attributes.
      if (a.role == Role::Config) os << '|' << to_string(a.aggregation);
      os << ';';
      h = fnv1a64(os.str(), h);
    }
    std::ostringstream os;
    os << std::hex;
    os.width(16);
    os.fill('0');
    os << h;
    return os.str();
  }

  friend bool operator==(const AttributeSchema& a, const AttributeSchema& b) {
    return a.hash() == b.hash();
  }

 private:
  std::vector<Attribute> entries_;
  std::vector<std::size_t> predictor_slots_;
  std::vector<std::size_t> config_slots_;
};

struct CellRecord {
  std::string cell_id;
  std::string node_id;
  Technology technology = Technology::LTE;
  std::map<std::string, double> raw_predictors;
  std::map<std::string, double> raw_configs;
};

struct Edge {
  std::uint32_t a = 0;  ///< cell index, a < b
  std::uint32_t b = 0;
  EdgeKind kind = EdgeKind::InterNode;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// An explicit edge as listed in a network file.
struct EdgeSpec {
  std::string a;
  std::string b;
  EdgeKind kind = EdgeKind::InterNode;
};

/// Undirected cell graph. Immutable once built; all cells sharing a node_id
/// are connected by intra_node edges.
class RanGraph {
 public:
  RanGraph() = default;

  static RanGraph build(AttributeSchema schema, std::vector<CellRecord> cells,
                        const std::vector<EdgeSpec>& edges) {
    RanGraph g;
    g.schema_ = std::move(schema);
    g.cells_ = std::move(cells);
    for (std::size_t i = 0; i < g.cells_.size(); ++i) {
      const CellRecord& c = g.cells_[i];
      if (c.cell_id.empty()) throw ValidationError("cell with empty cell_id");
      if (!g.index_.emplace(c.cell_id, static_cast<std::uint32_t>(i)).second)
        throw ValidationError("duplicate cell_id '" + c.cell_id + "'");
      g.validate_cell(c);
      (c.technology == Technology::LTE ? g.lte_count_ : g.nr_count_)++;
    }
    g.adjacency_.assign(g.cells_.size(), {});
    std::set<std::pair<std::uint32_t, std::uint32_t>> present;
    auto add_edge = [&](std::uint32_t a, std::uint32_t b, EdgeKind kind) {
      if (a > b) std::swap(a, b);
      if (!present.emplace(a, b).second) return;
      g.edges_.push_back({a, b, kind});
      g.adjacency_[a].push_back(b);
      g.adjacency_[b].push_back(a);
    };
    std::map<std::string, std::vector<std::uint32_t>> by_node;
    for (std::uint32_t i = 0; i < g.cells_.size(); ++i) by_node[g.cells_[i].node_id].push_back(i);
    for (const auto& [node, members] : by_node)
      for (std::size_t x = 0; x < members.size(); ++x)
        for (std::size_t y = x + 1; y < members.size(); ++y)
          add_edge(members[x], members[y], EdgeKind::IntraNode);
    for (const auto& e : edges) {
      if (e.a == e.b) throw ValidationError("self-loop edge on cell '" + e.a + "'");
      const auto ia = g.index_.find(e.a);
      const auto ib = g.index_.find(e.b);
      if (ia == g.index_.end()) throw ValidationError("edge references unknown cell '" + e.a + "'");
      if (ib == g.index_.end()) throw ValidationError("edge references unknown cell '" + e.b + "'");
      const bool same_node = g.cells_[ia->second].node_id == g.cells_[ib->second].node_id;
      if (same_node != (e.kind == EdgeKind::IntraNode))
        throw ValidationError("edge (" + e.a + ", " + e.b + ") has kind " + to_string(e.kind) +
                              " but the cells are " + (same_node ? "on the same" : "on different") +
                              " nodes");
      add_edge(ia->second, ib->second, e.kind);
    }
    std::sort(g.edges_.begin(), g.edges_.end(),
              [](const Edge& x, const Edge& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });
    for (auto& adj : g.adjacency_) std::sort(adj.begin(), adj.end());
    return g;
  }

  /// A new graph with extra cells and explicit edges appended.
  RanGraph extended(const std::vector<CellRecord>& new_cells,
                    const std::vector<EdgeSpec>& new_edges) const {
    std::vector<CellRecord> cells = cells_;
    cells.insert(cells.end(), new_cells.begin(), new_cells.end());
    std::vector<EdgeSpec> edges = explicit_edges();
    edges.insert(edges.end(), new_edges.begin(), new_edges.end());
    return build(schema_, std::move(cells), edges);
  }

  const AttributeSchema& schema() const { return schema_; }
  const std::vector<CellRecord>& cells() const { return cells_; }
  const CellRecord& cell(std::uint32_t i) const { return cells_.at(i); }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t size() const { return cells_.size(); }
  std::size_t lte_count() const { return lte_count_; }  ///< N
  std::size_t nr_count() const { return nr_count_; }    ///< M

  bool contains(const std::string& id) const { return index_.count(id) != 0; }

  std::uint32_t index_of(const std::string& id) const {
    const auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown cell id '" + id + "'");
    return it->second;
  }

  /// Sorted neighbor indices.
  const std::vector<std::uint32_t>& adjacency(std::uint32_t i) const { return adjacency_.at(i); }

  bool connected(std::uint32_t a, std::uint32_t b) const {
    const auto& adj = adjacency_.at(a);
    return std::binary_search(adj.begin(), adj.end(), b);
  }

  /// Inter-node edges in id form; intra-node edges are implied by node_id.
  std::vector<EdgeSpec> explicit_edges() const {
    std::vector<EdgeSpec> out;
    for (const auto& e : edges_)
      if (e.kind == EdgeKind::InterNode)
        out.push_back({cells_[e.a].cell_id, cells_[e.b].cell_id, e.kind});
    return out;
  }

 private:
  void validate_cell(const CellRecord& c) const {
    for (const auto& [maps, role] : {std::pair{&c.raw_predictors, Role::Predictor},
                                     std::pair{&c.raw_configs, Role::Config}}) {
      for (const auto& [name, value] : *maps) {
        if (!schema_.find(c.technology, role, name))
          throw ValidationError("cell '" + c.cell_id + "': " + to_string(role) + " '" + name +
                                "' is not a " + to_string(c.technology) + " attribute");
        if (!std::isfinite(value))
          throw ValidationError("cell '" + c.cell_id + "': non-finite value for '" + name + "'");
      }
    }
  }

  AttributeSchema schema_;
  std::vector<CellRecord> cells_;
  std::unordered_map<std::string, std::uint32_t> index_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::uint32_t>> adjacency_;
  std::size_t lte_count_ = 0;
  std::size_t nr_count_ = 0;
};

// ---------------------------------------------------------------------------
// JSON

inline json schema_to_json(const AttributeSchema& schema) {
  json arr = json::array();
  for (const auto& a : schema.entries()) {
    json e = {{"name", a.name},
              {"technology", to_string(a.technology)},
              {"role", to_string(a.role)},
              {"kind", to_string(a.kind)}};
    if (a.role == Role::Config) e["aggregation"] = to_string(a.aggregation);
    arr.push_back(std::move(e));
  }
  return arr;
}

inline AttributeSchema schema_from_json(const json& arr) {
  if (!arr.is_array()) throw ValidationError("schema: expected an array");
  std::vector<Attribute> entries;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const json& e = arr[i];
    const std::string where = "schema[" + std::to_string(i) + "]";
    try {
      Attribute a;
      a.name = e.at("name").get<std::string>();
      a.technology = parse_technology(e.at("technology").get<std::string>());
      a.role = parse_role(e.at("role").get<std::string>());
      a.kind = parse_kind(e.at("kind").get<std::string>());
      if (a.role == Role::Config) {
        if (!e.contains("aggregation"))
          throw ValidationError("config attribute '" + a.name + "' has no aggregation policy");
        a.aggregation = parse_aggregation(e.at("aggregation").get<std::string>());
      } else if (e.contains("aggregation")) {
        a.aggregation = parse_aggregation(e.at("aggregation").get<std::string>());
      }
      entries.push_back(std::move(a));
    } catch (const json::exception& ex) {
      throw ValidationError(where + ": " + ex.what());
    } catch (const ValidationError& ex) {
      throw ValidationError(where + ": " + ex.what());
    }
  }
  return AttributeSchema(std::move(entries));
}

inline json network_to_json(const RanGraph& g) {
  json cells = json::array();
  for (const auto& c : g.cells()) {
    json preds = json::object(), cfgs = json::object();
    for (const auto& [k, v] : c.raw_predictors) preds[k] = v;
    for (const auto& [k, v] : c.raw_configs) cfgs[k] = v;
    cells.push_back({{"cell_id", c.cell_id},
                     {"node_id", c.node_id},
                     {"technology", to_string(c.technology)},
                     {"raw_predictors", preds},
                     {"raw_configs", cfgs}});
  }
  json edges = json::array();
  for (const auto& e : g.edges())
    edges.push_back({g.cell(e.a).cell_id, g.cell(e.b).cell_id, to_string(e.kind)});
  return {{"schema", schema_to_json(g.schema())}, {"cells", cells}, {"edges", edges}};
}

struct NetworkParts {
  std::vector<CellRecord> cells;
  std::vector<EdgeSpec> edges;
};

inline NetworkParts network_parts_from_json(const json& doc) {
  NetworkParts parts;
  if (!doc.contains("cells") || !doc["cells"].is_array())
    throw ValidationError("network: missing 'cells' array");
  for (std::size_t i = 0; i < doc["cells"].size(); ++i) {
    const json& c = doc["cells"][i];
    try {
      CellRecord rec;
      rec.cell_id = c.at("cell_id").get<std::string>();
      rec.node_id = c.at("node_id").get<std::string>();
      rec.technology = parse_technology(c.at("technology").get<std::string>());
      if (c.contains("raw_predictors"))
        for (const auto& [k, v] : c["raw_predictors"].items()) rec.raw_predictors[k] = v.get<double>();
      if (c.contains("raw_configs"))
        for (const auto& [k, v] : c["raw_configs"].items()) rec.raw_configs[k] = v.get<double>();
      parts.cells.push_back(std::move(rec));
    } catch (const json::exception& ex) {
      throw ValidationError("cells[" + std::to_string(i) + "]: " + ex.what());
    } catch (const ValidationError& ex) {
      throw ValidationError("cells[" + std::to_string(i) + "]: " + ex.what());
    }
  }
  if (doc.contains("edges")) {
    if (!doc["edges"].is_array()) throw ValidationError("network: 'edges' must be an array");
    for (std::size_t i = 0; i < doc["edges"].size(); ++i) {
      const json& e = doc["edges"][i];
      if (!e.is_array() || e.size() != 3 || !e[0].is_string() || !e[1].is_string() ||
          !e[2].is_string())
        throw ValidationError("edges[" + std::to_string(i) +
                              "]: expected [cell_id, cell_id, kind]");
      try {
        parts.edges.push_back({e[0].get<std::string>(), e[1].get<std::string>(),
                               parse_edge_kind(e[2].get<std::string>())});
      } catch (const ValidationError& ex) {
        throw ValidationError("edges[" + std::to_string(i) + "]: " + ex.what());
      }
    }
  }
  return parts;
}

inline RanGraph network_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("schema"))
    throw ValidationError("network: missing 'schema'");
  auto schema = schema_from_json(doc["schema"]);
  auto parts = network_parts_from_json(doc);
  return RanGraph::build(std::move(schema), std::move(parts.cells), parts.edges);
}

/// Parses JSON text; syntax errors carry the line and column.
inline json parse_json_text(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& ex) {
    std::size_t line = 1, col = 1;
    const std::size_t limit = std::min<std::size_t>(ex.byte == 0 ? 0 : ex.byte - 1, text.size());
    for (std::size_t i = 0; i < limit; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::string context;
    std::size_t start = text.rfind('\n', limit == 0 ? 0 : limit - 1);
    start = start == std::string::npos ? 0 : start + 1;
    std::size_t end = text.find('\n', limit);
    context = text.substr(start, (end == std::string::npos ? text.size() : end) - start);
    throw ValidationError(source + ":" + std::to_string(line) + ":" + std::to_string(col) +
                          ": parse error near '" + context + "'");
  }
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline json load_json_file(const std::filesystem::path& path) {
  return parse_json_text(read_text_file(path), path.string());
}

inline RanGraph load_network(const std::filesystem::path& path) {
  const json doc = load_json_file(path);
  try {
    return network_from_json(doc);
  } catch (const ValidationError& ex) {
    throw ValidationError(path.string() + ": " + ex.what());
  }
}

// ---------------------------------------------------------------------------
// Normalization

struct AttributeRange {
  double min = 0.0;
  double max = 0.0;
  /// Distinct training values, ascending. Used to snap discrete attributes.
  std::vector<double> observed;
};

/// Min/max per schema attribute, fitted on training cells only.
struct NormalizationStats {
  std::vector<AttributeRange> ranges;  ///< indexed like AttributeSchema::entries()
  std::string schema_hash;
};

inline NormalizationStats fit_normalization(const RanGraph& graph,
                                            const std::vector<std::string>& train_ids) {
  if (train_ids.empty()) throw ValidationError("fit_normalization: no training cells");
  const auto& schema = graph.schema();
  std::vector<std::set<double>> values(schema.entries().size());
  for (const auto& id : train_ids) {
    const CellRecord& c = graph.cell(graph.index_of(id));
    for (const auto& [maps, role] : {std::pair{&c.raw_predictors, Role::Predictor},
                                     std::pair{&c.raw_configs, Role::Config}})
      for (const auto& [name, v] : *maps) values[*schema.find(c.technology, role, name)].insert(v);
  }
  NormalizationStats stats;
  stats.schema_hash = schema.hash();
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].empty()) {
      const auto& a = schema.at(i);
      throw ValidationError(std::string("attribute '") + a.name + "' (" + to_string(a.technology) +
                            " " + to_string(a.role) + ") is never observed on a training cell");
    }
    AttributeRange r;
    r.min = *values[i].begin();
    r.max = *values[i].rbegin();
    r.observed.assign(values[i].begin(), values[i].end());
    stats.ranges.push_back(std::move(r));
  }
  return stats;
}

/// Normalized value in [0,1]. Degenerate ranges map to 0; values outside the
/// training range are clamped.
inline double normalize_value(double v, const AttributeRange& r) {
  if (r.max <= r.min) return 0.0;
  return std::clamp((v - r.min) / (r.max - r.min), 0.0, 1.0);
}

struct FeatureVectors {
  std::vector<double> x;  ///< predictors, length P
  std::vector<double> y;  ///< configs, length Q
};

inline FeatureVectors vectorize(const CellRecord& cell, const NormalizationStats& stats,
                                const AttributeSchema& schema) {
  if (stats.ranges.size() != schema.entries().size())
    throw ValidationError("vectorize: normalization stats do not match the schema");
  auto fill = [&](const std::vector<std::size_t>& slots, const std::map<std::string, double>& raw) {
    std::vector<double> out(slots.size(), 0.0);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      const Attribute& a = schema.at(slots[k]);
      if (a.technology != cell.technology) continue;
      const auto it = raw.find(a.name);
      if (it != raw.end()) out[k] = normalize_value(it->second, stats.ranges[slots[k]]);
    }
    return out;
  };
  return {fill(schema.predictor_slots(), cell.raw_predictors),
          fill(schema.config_slots(), cell.raw_configs)};
}

/// Raw value for a normalized one. Discrete attributes snap to the nearest
/// observed training value (ties go to the smaller value).
inline double denormalize_value(double u, const Attribute& a, const AttributeRange& r) {
  const double v = r.min + u * (r.max - r.min);
  if (a.kind != Kind::Discrete || r.observed.empty()) return v;
  const auto it = std::lower_bound(r.observed.begin(), r.observed.end(), v);
  if (it == r.observed.begin()) return *it;
  if (it == r.observed.end()) return r.observed.back();
  const double hi = *it, lo = *(it - 1);
  return (v - lo) <= (hi - v) ? lo : hi;
}

/// Maps a config vector back to attribute units. When `technology` is given
/// only that technology's attributes are emitted; otherwise names that occur
/// in both technologies are qualified as "LTE:name" / "NR:name".
inline std::map<std::string, double> denormalize(const std::vector<double>& y_hat,
                                                 const NormalizationStats& stats,
                                                 const AttributeSchema& schema,
                                                 std::optional<Technology> technology = {}) {
  const auto& slots = schema.config_slots();
  if (y_hat.size() != slots.size())
    throw ValidationError("denormalize: expected " + std::to_string(slots.size()) +
                          " config values, got " + std::to_string(y_hat.size()));
  std::map<std::string, int> name_count;
  for (std::size_t s : slots) name_count[schema.at(s).name]++;
  std::map<std::string, double> out;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    const Attribute& a = schema.at(slots[k]);
    if (technology && a.technology != *technology) continue;
    std::string key = a.name;
    if (!technology && name_count[a.name] > 1) key = std::string(to_string(a.technology)) + ":" + a.name;
    out[key] = denormalize_value(y_hat[k], a, stats.ranges[slots[k]]);
  }
  return out;
}

inline json normalization_to_json(const NormalizationStats& stats, const AttributeSchema& schema) {
  json arr = json::array();
  for (std::size_t i = 0; i < stats.ranges.size(); ++i) {
    const auto& a = schema.at(i);
    arr.push_back({{"name", a.name},
                   {"technology", to_string(a.technology)},
                   {"role", to_string(a.role)},
                   {"min", stats.ranges[i].min},
                   {"max", stats.ranges[i].max},
                   {"observed", stats.ranges[i].observed}});
  }
  return {{"schema_hash", stats.schema_hash}, {"attributes", arr}};
}

inline NormalizationStats normalization_from_json(const json& doc, const AttributeSchema& schema) {
  NormalizationStats stats;
  stats.schema_hash = doc.at("schema_hash").get<std::string>();
  if (stats.schema_hash != schema.hash())
    throw ValidationError("normalization stats were fitted for a different schema");
  const json& arr = doc.at("attributes");
  if (arr.size() != schema.entries().size())
    throw ValidationError("normalization stats: attribute count mismatch");
  for (const auto& e : arr) {
    AttributeRange r;
    r.min = e.at("min").get<double>();
    r.max = e.at("max").get<double>();
    r.observed = e.at("observed").get<std::vector<double>>();
    if (r.min > r.max) throw ValidationError("normalization stats: min > max");
    stats.ranges.push_back(std::move(r));
  }
  return stats;
}

}  // namespace ranrec
