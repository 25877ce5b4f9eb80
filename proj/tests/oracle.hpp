#pragma once

// Extended-precision reference forward passes, written independently of the
// tape. Used as finite-difference oracles for the library gradients.

#include <cmath>
#include <span>
#include <vector>

#include "ranrec.hpp"

namespace ranrec::oracle {

using Real = long double;
using Rows = std::vector<std::vector<Real>>;

inline Rows rows_of(const Matrix& m) {
  Rows out(m.rows(), std::vector<Real>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

inline Rows product(const Rows& a, const Matrix& b) {
  Rows out(a.size(), std::vector<Real>(b.cols(), 0.0L));
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t k = 0; k < b.rows(); ++k)
      for (std::size_t c = 0; c < b.cols(); ++c) out[r][c] += a[r][k] * Real(b(k, c));
  return out;
}

inline Real lrelu(Real x, Real slope) { return x > 0 ? x : slope * x; }

inline Rows layer(const MultiHeadLayer& l, const Rows& h, const std::vector<bool>& mask) {
  const std::size_t n = h.size();
  Rows concat(n);
  for (const auto& head : l.heads) {
    const Rows src = product(h, head.w_src.value), dst = product(h, head.w_dst.value);
    const std::size_t hd = head.w_src.value.cols();
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<Real> e(n, 0.0L);
      Real top = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[i * n + j]) continue;
        for (std::size_t k = 0; k < hd; ++k)
          e[j] += Real(head.attn.value(k, 0)) * lrelu(src[j][k] + dst[i][k], head.slope);
        top = std::max(top, e[j]);
      }
      Real z = 0.0L;
      for (std::size_t j = 0; j < n; ++j)
        if (mask[i * n + j]) z += std::exp(e[j] - top);
      std::vector<Real> out(hd, 0.0L);
      for (std::size_t j = 0; j < n; ++j) {
        if (!mask[i * n + j]) continue;
        const Real alpha = std::exp(e[j] - top) / z;
        for (std::size_t k = 0; k < hd; ++k) out[k] += alpha * src[j][k];
      }
      concat[i].insert(concat[i].end(), out.begin(), out.end());
    }
  }
  Rows hidden = product(concat, l.ffn_w1.value);
  for (auto& row : hidden)
    for (std::size_t c = 0; c < row.size(); ++c)
      row[c] = lrelu(row[c] + Real(l.ffn_b1.value(0, c)), l.heads.front().slope);
  Rows out = product(hidden, l.ffn_w2.value);
  for (auto& row : out)
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += Real(l.ffn_b2.value(0, c));
  return out;
}

inline Rows forward(const GatStack& s, Rows h, const Subgraph& sg) {
  const auto mask = sg.attention_mask();
  for (const auto& l : s.layers) h = layer(l, h, mask);
  return h;
}

inline Rows encode_ref(const EncoderStack& e, const Subgraph& sg) {
  return forward(e, rows_of(sg.features), sg);
}

inline Real distance(const std::vector<Real>& a, const std::vector<Real>& b) {
  Real s = 0.0L;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return std::sqrt(s);
}

inline Real contrastive(Real c, Real d, Real margin) {
  return 0.5L * (1 + c) * d + 0.5L * (1 - c) * std::max(Real(0), margin - d);
}

/// Mean standard-form contrastive loss over `pairs`.
inline Real sgnn_loss(const EncoderStack& enc, const TrainingSet& set,
                      std::span<const PairSample> pairs, double margin) {
  Real total = 0.0L;
  for (const auto& p : pairs) {
    const Rows za = encode_ref(enc, *set.subgraphs.at(p.a)), zb = encode_ref(enc, *set.subgraphs.at(p.b));
    total += contrastive(p.c, distance(za[0], zb[0]), margin);
  }
  return total / Real(pairs.size());
}

/// Mean over entries of the mean row-wise reconstruction error.
inline Real gae_loss(const EncoderStack& enc, const DecoderStack& dec,
                     const std::vector<const Subgraph*>& subgraphs,
                     std::span<const std::uint32_t> entries) {
  Real total = 0.0L;
  for (std::uint32_t e : entries) {
    const Subgraph& sg = *subgraphs.at(e);
    const Rows x = rows_of(sg.features);
    const Rows x_hat = forward(dec, encode_ref(enc, sg), sg);
    Real s = 0.0L;
    for (std::size_t r = 0; r < x.size(); ++r) s += distance(x[r], x_hat[r]);
    total += s / Real(x.size());
  }
  return total / Real(entries.size());
}

}  // namespace ranrec::oracle
