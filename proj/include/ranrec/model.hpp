#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ranrec/error.hpp"
#include "ranrec/gnn.hpp"
#include "ranrec/graph.hpp"
#include "ranrec/sampler.hpp"

namespace ranrec {

enum class ModelKind { SGnn, Gae, Untrained };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::SGnn: return "sgnn";
    case ModelKind::Gae: return "gae";
    case ModelKind::Untrained: return "untrained";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "sgnn") return ModelKind::SGnn;
  if (s == "gae") return ModelKind::Gae;
  if (s == "untrained") return ModelKind::Untrained;
  throw ValidationError("invalid model '" + s + "' (expected sgnn, gae or untrained)");
}

/// Everything needed to embed cells of a network: the frozen encoder, the
/// normalization fitted at training time and the sampling rule.
struct Model {
  ModelKind kind = ModelKind::SGnn;
  ArchConfig arch;
  std::uint64_t seed = 0;
  EncoderStack encoder;
  std::optional<DecoderStack> decoder;  ///< GAE only; never used for inference
  NormalizationStats stats;
  SamplerConfig sampler;
  std::string schema_hash;
  std::vector<std::string> train_cells;
  std::vector<std::string> test_cells;
};

namespace detail {

inline json params_to_json(GatStack& stack) {
  json arr = json::array();
  for (Parameter* p : stack.params())
    arr.push_back({{"name", p->name},
                   {"rows", p->value.rows()},
                   {"cols", p->value.cols()},
                   {"inferential", p->inferential},
                   {"values", p->value.data()}});
  return arr;
}

inline void params_from_json(GatStack& stack, const json& arr, std::size_t& cursor) {
  for (Parameter* p : stack.params()) {
    if (cursor >= arr.size()) throw ValidationError("checkpoint: too few parameters");
    const json& e = arr[cursor++];
    const auto name = e.at("name").get<std::string>();
    if (name != p->name)
      throw ValidationError("checkpoint: expected parameter '" + p->name + "', found '" + name + "'");
    const auto rows = e.at("rows").get<std::size_t>();
    const auto cols = e.at("cols").get<std::size_t>();
    if (rows != p->value.rows() || cols != p->value.cols())
      throw ValidationError("checkpoint: parameter '" + name + "' has the wrong shape");
    p->value = Matrix(rows, cols, e.at("values").get<std::vector<double>>());
    if (!p->value.all_finite()) throw ValidationError("checkpoint: parameter '" + name + "' is not finite");
    p->inferential = e.value("inferential", true);
    p->zero_grad();
  }
}

}  // namespace detail

inline json arch_to_json(const ArchConfig& a) {
  return {{"input_dim", a.input_dim}, {"layers", a.layers},       {"heads", a.heads},
          {"head_dim", a.head_dim},   {"ffn_hidden", a.ffn_hidden}, {"layer_dim", a.layer_dim},
          {"d", a.embedding_dim},     {"slope", a.slope}};
}

inline ArchConfig arch_from_json(const json& j) {
  ArchConfig a;
  a.input_dim = j.at("input_dim").get<std::size_t>();
  a.layers = j.at("layers").get<std::size_t>();
  a.heads = j.at("heads").get<std::size_t>();
  a.head_dim = j.at("head_dim").get<std::size_t>();
  a.ffn_hidden = j.at("ffn_hidden").get<std::size_t>();
  a.layer_dim = j.at("layer_dim").get<std::size_t>();
  a.embedding_dim = j.at("d").get<std::size_t>();
  a.slope = j.at("slope").get<double>();
  a.validate();
  return a;
}

/// Checkpoint document. Parameters are listed in declaration order, encoder
/// first; decoder entries carry "inferential": false.
inline json checkpoint_to_json(Model& m, const AttributeSchema& schema) {
  json params = detail::params_to_json(m.encoder);
  if (m.decoder)
    for (auto& p : detail::params_to_json(*m.decoder)) params.push_back(p);
  return {{"format", "ranrec-checkpoint-v1"},
          {"model", to_string(m.kind)},
          {"arch", arch_to_json(m.arch)},
          {"seed", m.seed},
          {"schema_hash", m.schema_hash},
          {"sampler", {{"fanout", m.sampler.fanout}, {"seed", m.sampler.seed}}},
          {"normalization", normalization_to_json(m.stats, schema)},
          {"train_cells", m.train_cells},
          {"test_cells", m.test_cells},
          {"params", params}};
}

/// Rebuilds a model and checks that it was trained against `schema`.
inline Model checkpoint_from_json(const json& doc, const AttributeSchema& schema) {
  try {
    if (doc.value("format", "") != "ranrec-checkpoint-v1")
      throw ValidationError("not a ranrec checkpoint");
    Model m;
    m.kind = parse_model_kind(doc.at("model").get<std::string>());
    m.arch = arch_from_json(doc.at("arch"));
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.schema_hash = doc.at("schema_hash").get<std::string>();
    if (m.schema_hash != schema.hash())
      throw ValidationError("schema_hash " + m.schema_hash + " does not match the network schema (" +
                            schema.hash() + ")");
    if (m.arch.input_dim != schema.predictor_dim())
      throw ValidationError("checkpoint input_dim does not match the schema predictor count");
    m.sampler.fanout = doc.at("sampler").at("fanout").get<std::size_t>();
    m.sampler.seed = doc.at("sampler").at("seed").get<std::uint64_t>();
    m.stats = normalization_from_json(doc.at("normalization"), schema);
    m.train_cells = doc.at("train_cells").get<std::vector<std::string>>();
    m.test_cells = doc.value("test_cells", std::vector<std::string>{});
    m.encoder = init_encoder(m.arch, m.seed);
    const json& params = doc.at("params");
    std::size_t cursor = 0;
    detail::params_from_json(m.encoder, params, cursor);
    if (m.kind == ModelKind::Gae) {
      m.decoder = init_decoder(m.arch, m.seed);
      detail::params_from_json(*m.decoder, params, cursor);
    }
    if (cursor != params.size()) throw ValidationError("checkpoint: unexpected extra parameters");
    return m;
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("checkpoint: ") + ex.what());
  }
}

}  // namespace ranrec
