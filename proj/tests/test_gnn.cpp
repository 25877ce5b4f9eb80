#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracle.hpp"
#include "ranrec.hpp"

using namespace ranrec;

namespace {

ArchConfig small_arch(std::size_t input_dim = 3) {
  ArchConfig a;
  a.input_dim = input_dim;
  a.layers = 2;
  a.heads = 2;
  a.head_dim = 3;
  a.ffn_hidden = 5;
  a.layer_dim = 4;
  a.embedding_dim = 3;
  return a;
}

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

// Random connected subgraph: center joined to every neighbor, plus a few
// neighbor-neighbor edges.
Subgraph random_subgraph(std::size_t n, std::size_t p, Rng& rng) {
  Subgraph sg;
  sg.center = 0;
  for (std::uint32_t k = 1; k < n; ++k) {
    sg.neighbors.push_back(k);
    sg.edges.emplace_back(0, k);
  }
  for (std::uint32_t a = 1; a < n; ++a)
    for (std::uint32_t b = a + 1; b < n; ++b)
      if (rng.uniform() < 0.4) sg.edges.emplace_back(a, b);
  sg.features = random_matrix(n, p, rng);
  return sg;
}

// Relabels local vertices 1..n-1 by `perm` (perm[old-1] = new-1).
Subgraph permute(const Subgraph& sg, const std::vector<std::uint32_t>& perm) {
  Subgraph out = sg;
  auto map = [&](std::uint32_t v) { return v == 0 ? 0u : perm[v - 1] + 1; };
  for (auto& [a, b] : out.edges) {
    a = map(a);
    b = map(b);
    if (a > b) std::swap(a, b);
  }
  for (std::size_t v = 1; v < sg.vertex_count(); ++v) {
    const auto src = sg.features.row(v);
    std::copy(src.begin(), src.end(), out.features.row(map(std::uint32_t(v))).begin());
  }
  return out;
}

double sum_squares(const Matrix& m) {
  return std::inner_product(m.data().begin(), m.data().end(), m.data().begin(), 0.0);
}

}  // namespace

TEST(Attention, ScoreHandExample) {
  Gatv2Head head;
  head.w_src = Parameter("s", Matrix::identity(2));
  head.w_dst = Parameter("d", Matrix::identity(2));
  head.attn = Parameter("a", Matrix{{1.0}, {1.0}});
  head.slope = 0.2;
  const std::vector<double> hi{1.0, 0.0}, hj{0.0, -1.0};
  // pre = (1, -1) -> LeakyReLU -> (1, -0.2)
  EXPECT_NEAR(attention_score(head, hi, hj), 0.8, 1e-15);
  head.attn.value(1, 0) = -1.0;
  EXPECT_NEAR(attention_score(head, hi, hj), 1.2, 1e-15);
  const std::vector<double> bad{1.0};
  EXPECT_THROW(attention_score(head, bad, hj), ValidationError);
}

TEST(Attention, ZeroAttentionVectorIsUniformOverNeighborhood) {
  Rng rng(2);
  Subgraph sg;
  sg.neighbors = {1, 2, 3};
  sg.edges = {{0, 1}, {0, 2}, {0, 3}};
  sg.features = random_matrix(4, 3, rng);
  EncoderStack enc = init_encoder(small_arch(), 1);
  for (auto& layer : enc.layers)
    for (auto& h : layer.heads) h.attn.value.fill(0.0);
  Tape tape;
  AttentionTrace trace;
  encode(tape, enc, sg, &trace);
  ASSERT_EQ(trace.layers.size(), 2u);
  const Matrix& alpha = trace.layers[0][0];
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(alpha(0, j), 0.25, 1e-15);
  // A leaf sees only itself and the center.
  EXPECT_NEAR(alpha(1, 0), 0.5, 1e-15);
  EXPECT_NEAR(alpha(1, 1), 0.5, 1e-15);
  EXPECT_EQ(alpha(1, 2), 0.0);
}

TEST(Attention, RowsAreDistributionsOnTheMask) {
  Rng rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const Subgraph sg = random_subgraph(2 + rng.below(6), 3, rng);
    EncoderStack enc = init_encoder(small_arch(), trial);
    Tape tape;
    AttentionTrace trace;
    encode(tape, enc, sg, &trace);
    const auto mask = sg.attention_mask();
    const std::size_t n = sg.vertex_count();
    for (const auto& heads : trace.layers)
      for (const Matrix& alpha : heads)
        for (std::size_t i = 0; i < n; ++i) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            if (!mask[i * n + j]) {
              EXPECT_EQ(alpha(i, j), 0.0);
            }
            EXPECT_GE(alpha(i, j), 0.0);
            s += alpha(i, j);
          }
          EXPECT_NEAR(s, 1.0, 1e-12);
        }
  }
}

TEST(Encoder, SingleVertexSubgraph) {
  Subgraph sg;
  sg.features = Matrix{{0.1, 0.2, 0.3}};
  EncoderStack enc = init_encoder(small_arch(), 3);
  Tape tape;
  AttentionTrace trace;
  const Matrix z = tape.value(encode(tape, enc, sg, &trace));
  EXPECT_EQ(z.rows(), 1u);
  EXPECT_EQ(z.cols(), 3u);
  EXPECT_TRUE(z.all_finite());
  EXPECT_DOUBLE_EQ(trace.layers[0][0](0, 0), 1.0);
}

TEST(Encoder, NeighborRelabelingIsEquivariant) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 3 + rng.below(5);
    const Subgraph sg = random_subgraph(n, 3, rng);
    std::vector<std::uint32_t> perm(n - 1);
    std::iota(perm.begin(), perm.end(), 0u);
    rng.shuffle(perm);
    const Subgraph pg = permute(sg, perm);
    const EncoderStack enc = init_encoder(small_arch(), 17);
    const Matrix za = encode(enc, sg), zb = encode(enc, pg);
    for (std::size_t c = 0; c < za.cols(); ++c) EXPECT_NEAR(za(0, c), zb(0, c), 1e-12);
    for (std::size_t v = 1; v < n; ++v)
      for (std::size_t c = 0; c < za.cols(); ++c)
        EXPECT_NEAR(za(v, c), zb(perm[v - 1] + 1, c), 1e-12);
  }
}

TEST(Encoder, GlorotBoundsAndZeroBiases) {
  Rng rng(1);
  const Matrix w = glorot_uniform(3, 5, rng);
  const double bound = std::sqrt(6.0 / 8.0);
  for (double v : w.data()) EXPECT_LE(std::abs(v), bound);
  EncoderStack enc = init_encoder(small_arch(), 5);
  for (Parameter* p : enc.params()) {
    if (p->name.find(".b") != std::string::npos) {
      EXPECT_EQ(sum_squares(p->value), 0.0) << p->name;
    } else {
      const double b = std::sqrt(6.0 / double(p->value.rows() + p->value.cols()));
      for (double v : p->value.data()) EXPECT_LE(std::abs(v), b) << p->name;
    }
  }
}

TEST(Encoder, InitDeterministicPerSeed) {
  EncoderStack a = init_encoder(small_arch(), 5), b = init_encoder(small_arch(), 5),
               c = init_encoder(small_arch(), 6);
  const auto pa = a.params(), pb = b.params(), pc = c.params();
  ASSERT_EQ(pa.size(), pb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i]->value.data(), pb[i]->value.data());
    EXPECT_EQ(pa[i]->name, pb[i]->name);
    any_diff = any_diff || pa[i]->value.data() != pc[i]->value.data();
  }
  EXPECT_TRUE(any_diff);
}

TEST(Encoder, ShapesFollowArchitecture) {
  ArchConfig arch;
  arch.input_dim = 5;
  EncoderStack enc = init_encoder(arch, 0);
  EXPECT_EQ(enc.layers.size(), 2u);
  EXPECT_EQ(enc.in_dim(), 5u);
  EXPECT_EQ(enc.embedding_dim(), 14u);
  EXPECT_EQ(enc.layers[0].heads.size(), 4u);
  EXPECT_EQ(enc.layers[0].out_dim(), 32u);
  EXPECT_EQ(enc.layers[0].ffn_w1.value.rows(), 64u);
  arch.input_dim = 0;
  EXPECT_THROW(init_encoder(arch, 0), ValidationError);
}

TEST(Decoder, ReconstructsPredictorShape) {
  Rng rng(12);
  const Subgraph sg = random_subgraph(5, 3, rng);
  const EncoderStack enc = init_encoder(small_arch(), 1);
  const DecoderStack dec = init_decoder(small_arch(), 1);
  const Matrix z = encode(enc, sg);
  const Matrix x_hat = decode(dec, sg, z);
  EXPECT_EQ(x_hat.rows(), 5u);
  EXPECT_EQ(x_hat.cols(), 3u);
  for (const auto& l : dec.layers)
    for (const auto& h : l.heads) EXPECT_FALSE(h.w_src.inferential);
  EXPECT_THROW(decode(dec, sg, Matrix(4, 3)), ValidationError);
}

TEST(Encoder, ReferenceForwardAgrees) {
  Rng rng(30);
  for (int trial = 0; trial < 5; ++trial) {
    const Subgraph sg = random_subgraph(2 + trial, 3, rng);
    const EncoderStack enc = init_encoder(small_arch(), trial);
    const Matrix z = encode(enc, sg);
    const auto ref = oracle::encode_ref(enc, sg);
    for (std::size_t r = 0; r < z.rows(); ++r)
      for (std::size_t c = 0; c < z.cols(); ++c) EXPECT_NEAR(z(r, c), double(ref[r][c]), 1e-12);
  }
}

TEST(Encoder, GradientMatchesFiniteDifferences) {
  Rng rng(21);
  for (int trial = 0; trial < 4; ++trial) {
    const Subgraph sg = random_subgraph(3 + trial, 3, rng);
    EncoderStack enc = init_encoder(small_arch(), 100 + trial);
    const auto params = enc.params();
    auto sum_sq = [&]() {
      oracle::Real s = 0;
      for (const auto& row : oracle::encode_ref(enc, sg))
        for (auto v : row) s += v * v;
      return s;
    };
    const auto r = grad_check(
        [&](bool accumulate) {
          Tape t;
          const Var z = encode(t, enc, sg);
          const Var out = t.sum(t.mul(z, z));
          if (accumulate) t.backward(out);
          return t.scalar(out);
        },
        sum_sq, params);
    EXPECT_LT(r.max_relative_error, 1e-4);
    EXPECT_GT(r.coordinates, 100u);
  }
}

TEST(Decoder, GradientMatchesFiniteDifferences) {
  Rng rng(22);
  const Subgraph sg = random_subgraph(4, 3, rng);
  EncoderStack enc = init_encoder(small_arch(), 7);
  DecoderStack dec = init_decoder(small_arch(), 7);
  auto params = enc.params();
  for (Parameter* p : dec.params()) params.push_back(p);
  const std::vector<const Subgraph*> subgraphs{&sg};
  const std::vector<std::uint32_t> entries{0};
  const auto r = grad_check(
      [&](bool accumulate) { return gae_batch_loss(enc, dec, subgraphs, entries, accumulate); },
      [&] { return oracle::gae_loss(enc, dec, subgraphs, entries); }, params);
  EXPECT_LT(r.max_relative_error, 1e-4);
}
