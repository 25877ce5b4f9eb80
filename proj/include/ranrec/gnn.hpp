#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ranrec/error.hpp"
#include "ranrec/matrix.hpp"
#include "ranrec/rng.hpp"
#include "ranrec/sampler.hpp"
#include "ranrec/tape.hpp"

namespace ranrec {

/// Layer sizes shared by the encoder and decoder stacks.
struct ArchConfig {
  std::size_t input_dim = 0;       ///< P, predictor vector length
  std::size_t layers = 2;          ///< multi-head layers per stack
  std::size_t heads = 4;
  std::size_t head_dim = 16;
  std::size_t ffn_hidden = 64;
  std::size_t layer_dim = 32;      ///< width between consecutive layers
  std::size_t embedding_dim = 14;  ///< d
  double slope = 0.2;              ///< LeakyReLU slope (attention and FFN)

  void validate() const {
    if (input_dim == 0 || layers == 0 || heads == 0 || head_dim == 0 || ffn_hidden == 0 ||
        layer_dim == 0 || embedding_dim == 0)
      throw ValidationError("architecture dimensions must be positive");
    if (!(slope > 0.0 && slope < 1.0)) throw ValidationError("LeakyReLU slope must lie in (0,1)");
  }

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

/// Glorot-uniform matrix, bound sqrt(6 / (fan_in + fan_out)).
inline Matrix glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix m(fan_in, fan_out);
  for (auto& v : m.data()) v = rng.uniform(-bound, bound);
  return m;
}

/// One GATv2 attention head: e_ij = a . LeakyReLU(W_src h_j + W_dst h_i).
struct Gatv2Head {
  Parameter w_src;  ///< in_dim x head_dim
  Parameter w_dst;  ///< in_dim x head_dim
  Parameter attn;   ///< head_dim x 1
  double slope = 0.2;
};

/// Unnormalized attention score of target `h_i` for source `h_j`.
inline double attention_score(const Gatv2Head& head, std::span<const double> h_i,
                              std::span<const double> h_j) {
  const Matrix& ws = head.w_src.value;
  const Matrix& wd = head.w_dst.value;
  if (h_i.size() != ws.rows() || h_j.size() != ws.rows())
    throw ValidationError("attention_score: feature length does not match head input dim");
  double e = 0.0;
  for (std::size_t k = 0; k < ws.cols(); ++k) {
    double pre = 0.0;
    for (std::size_t r = 0; r < ws.rows(); ++r) pre += h_j[r] * ws(r, k) + h_i[r] * wd(r, k);
    e += head.attn.value(k, 0) * leaky_relu(pre, head.slope);
  }
  return e;
}

/// H GATv2 heads whose concatenated outputs pass through a two-layer FFN.
struct MultiHeadLayer {
  std::vector<Gatv2Head> heads;
  Parameter ffn_w1;  ///< (H * head_dim) x ffn_hidden
  Parameter ffn_b1;  ///< 1 x ffn_hidden
  Parameter ffn_w2;  ///< ffn_hidden x out_dim
  Parameter ffn_b2;  ///< 1 x out_dim

  std::size_t in_dim() const { return heads.front().w_src.value.rows(); }
  std::size_t out_dim() const { return ffn_w2.value.cols(); }

  std::vector<Parameter*> params() {
    std::vector<Parameter*> out;
    for (auto& h : heads) out.insert(out.end(), {&h.w_src, &h.w_dst, &h.attn});
    out.insert(out.end(), {&ffn_w1, &ffn_b1, &ffn_w2, &ffn_b2});
    return out;
  }
};

/// Optional record of per-head attention matrices produced by a forward pass.
struct AttentionTrace {
  std::vector<std::vector<Matrix>> layers;  ///< [layer][head] -> n x n
};

namespace detail {

struct PairIndex {
  std::vector<std::uint32_t> target;  ///< row i*n+j -> i
  std::vector<std::uint32_t> source;  ///< row i*n+j -> j
};

inline PairIndex pair_index(std::size_t n) {
  PairIndex p;
  p.target.reserve(n * n);
  p.source.reserve(n * n);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = 0; j < n; ++j) {
      p.target.push_back(i);
      p.source.push_back(j);
    }
  return p;
}

}  // namespace detail

/// Records one multi-head layer on `tape`. `mask` is the n x n row-major
/// attention mask (self-loops included).
inline Var layer_forward(Tape& tape, MultiHeadLayer& layer, Var h_in, const std::vector<bool>& mask,
                         std::vector<Matrix>* attention_out = nullptr) {
  const std::size_t n = tape.value(h_in).rows();
  if (n == 0) throw ValidationError("layer_forward: empty subgraph");
  if (tape.value(h_in).cols() != layer.in_dim())
    throw ValidationError("layer_forward: input has " + std::to_string(tape.value(h_in).cols()) +
                          " columns, layer expects " + std::to_string(layer.in_dim()));
  const auto pairs = detail::pair_index(n);
  std::vector<Var> head_outputs;
  head_outputs.reserve(layer.heads.size());
  for (auto& head : layer.heads) {
    const Var src = tape.matmul(h_in, tape.param(head.w_src));
    const Var dst = tape.matmul(h_in, tape.param(head.w_dst));
    const Var pre = tape.add(tape.gather_rows(src, pairs.source), tape.gather_rows(dst, pairs.target));
    const Var scores = tape.matmul(tape.leaky_relu(pre, head.slope), tape.param(head.attn));
    const Var alpha = tape.masked_softmax(tape.reshape(scores, n, n), mask);
    if (attention_out) attention_out->push_back(tape.value(alpha));
    head_outputs.push_back(tape.matmul(alpha, src));
  }
  const Var concat = tape.concat_cols(head_outputs);
  const Var hidden = tape.leaky_relu(
      tape.add_row(tape.matmul(concat, tape.param(layer.ffn_w1)), tape.param(layer.ffn_b1)),
      layer.heads.front().slope);
  return tape.add_row(tape.matmul(hidden, tape.param(layer.ffn_w2)), tape.param(layer.ffn_b2));
}

/// Ordered multi-head layers with chained dimensions.
class GatStack {
 public:
  std::vector<MultiHeadLayer> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }

  std::vector<Parameter*> params() {
    std::vector<Parameter*> out;
    for (auto& l : layers) {
      auto p = l.params();
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  void zero_grad() {
    for (Parameter* p : params()) p->zero_grad();
  }

  Var forward(Tape& tape, Var h, const std::vector<bool>& mask, AttentionTrace* trace = nullptr) {
    for (auto& layer : layers) {
      std::vector<Matrix>* slot = nullptr;
      if (trace) slot = &trace->layers.emplace_back();
      h = layer_forward(tape, layer, h, mask, slot);
    }
    return h;
  }
};

/// f_SGNN / f_Encoder: per-vertex predictors -> d-dim embeddings.
struct EncoderStack : GatStack {
  std::size_t embedding_dim() const { return out_dim(); }
};

/// f_Decoder: d-dim embeddings -> reconstructed predictors over the same topology.
struct DecoderStack : GatStack {};

namespace detail {

inline MultiHeadLayer init_layer(const std::string& prefix, std::size_t in_dim,
                                 std::size_t out_dim, const ArchConfig& arch, std::uint64_t seed,
                                 bool inferential) {
  auto make = [&](const std::string& name, std::size_t rows, std::size_t cols, bool bias) {
    const std::string full = prefix + "." + name;
    if (bias) return Parameter(full, Matrix(rows, cols), inferential);
    Rng rng(substream_seed(seed, full));
    return Parameter(full, glorot_uniform(rows, cols, rng), inferential);
  };
  MultiHeadLayer layer;
  for (std::size_t h = 0; h < arch.heads; ++h) {
    const std::string hp = "head" + std::to_string(h) + ".";
    Gatv2Head head;
    head.w_src = make(hp + "w_src", in_dim, arch.head_dim, false);
    head.w_dst = make(hp + "w_dst", in_dim, arch.head_dim, false);
    head.attn = make(hp + "attn", arch.head_dim, 1, false);
    head.slope = arch.slope;
    layer.heads.push_back(std::move(head));
  }
  layer.ffn_w1 = make("ffn.w1", arch.heads * arch.head_dim, arch.ffn_hidden, false);
  layer.ffn_b1 = make("ffn.b1", 1, arch.ffn_hidden, true);
  layer.ffn_w2 = make("ffn.w2", arch.ffn_hidden, out_dim, false);
  layer.ffn_b2 = make("ffn.b2", 1, out_dim, true);
  return layer;
}

inline std::vector<std::size_t> stack_dims(std::size_t in, std::size_t out, const ArchConfig& arch) {
  std::vector<std::size_t> dims{in};
  for (std::size_t l = 1; l < arch.layers; ++l) dims.push_back(arch.layer_dim);
  dims.push_back(out);
  return dims;
}

}  // namespace detail

/// Glorot-uniform weights and zero biases; each parameter draws from its own
/// named substream of `seed`.
inline EncoderStack init_encoder(const ArchConfig& arch, std::uint64_t seed,
                                 const std::string& prefix = "encoder") {
  arch.validate();
  EncoderStack s;
  const auto dims = detail::stack_dims(arch.input_dim, arch.embedding_dim, arch);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    s.layers.push_back(detail::init_layer(prefix + ".layer" + std::to_string(l), dims[l],
                                          dims[l + 1], arch, seed, true));
  return s;
}

inline DecoderStack init_decoder(const ArchConfig& arch, std::uint64_t seed,
                                 const std::string& prefix = "decoder") {
  arch.validate();
  DecoderStack s;
  const auto dims = detail::stack_dims(arch.embedding_dim, arch.input_dim, arch);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l)
    s.layers.push_back(detail::init_layer(prefix + ".layer" + std::to_string(l), dims[l],
                                          dims[l + 1], arch, seed, false));
  return s;
}

inline Var encode(Tape& tape, EncoderStack& stack, const Subgraph& sg,
                  AttentionTrace* trace = nullptr) {
  if (sg.features.rows() != sg.vertex_count())
    throw ValidationError("encode: subgraph features missing");
  const Var x = tape.constant(sg.features);
  return stack.forward(tape, x, sg.attention_mask(), trace);
}

/// Z_i: one d-dim embedding row per subgraph vertex (row 0 is the center).
inline Matrix encode(const EncoderStack& stack, const Subgraph& sg) {
  Tape tape;
  auto& s = const_cast<EncoderStack&>(stack);  // values are only read
  return tape.value(encode(tape, s, sg));
}

inline std::vector<double> embed_center(const EncoderStack& stack, const Subgraph& sg) {
  const Matrix z = encode(stack, sg);
  return {z.row(0).begin(), z.row(0).end()};
}

inline Var decode(Tape& tape, DecoderStack& stack, const Subgraph& sg, Var z) {
  if (tape.value(z).rows() != sg.vertex_count() || tape.value(z).cols() != stack.in_dim())
    throw ValidationError("decode: embedding matrix is " + tape.value(z).shape_string() +
                          ", expected " + std::to_string(sg.vertex_count()) + "x" +
                          std::to_string(stack.in_dim()));
  return stack.forward(tape, z, sg.attention_mask());
}

inline Matrix decode(const DecoderStack& stack, const Subgraph& sg, const Matrix& z) {
  Tape tape;
  auto& s = const_cast<DecoderStack&>(stack);
  return tape.value(decode(tape, s, sg, tape.constant(z)));
}

}  // namespace ranrec
