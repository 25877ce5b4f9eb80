#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ranrec/error.hpp"
#include "ranrec/matrix.hpp"

namespace ranrec {

/// A trainable weight and its accumulated gradient.
///
/// `grad` is zeroed by the optimizer step driver before each backward pass;
/// Tape::backward only accumulates into it, so several tapes can contribute
/// to the same step.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;
  /// False for weights that are trained but never used to embed cells
  /// (the auto-encoder's decoder).
  bool inferential = true;

  Parameter() = default;
  Parameter(std::string n, Matrix v, bool infer = true)
      : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()),
        inferential(infer) {}

  void zero_grad() {
    if (!grad.same_shape(value)) grad = Matrix(value.rows(), value.cols());
    grad.fill(0.0);
  }
};

inline double leaky_relu(double x, double slope) { return x > 0.0 ? x : slope * x; }

/// Subgradient convention: slope for x <= 0.
inline double leaky_relu_derivative(double x, double slope) { return x > 0.0 ? 1.0 : slope; }

inline Matrix leaky_relu(const Matrix& x, double slope) {
  Matrix out = x;
  for (auto& v : out.data()) v = leaky_relu(v, slope);
  return out;
}

/// Softmax over the entries where mask is true; masked entries are exactly 0.
inline std::vector<double> masked_softmax(std::span<const double> scores,
                                          const std::vector<bool>& mask) {
  if (scores.size() != mask.size()) throw ValidationError("masked_softmax: length mismatch");
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i)
    if (mask[i]) peak = std::max(peak, scores[i]);
  if (peak == -std::numeric_limits<double>::infinity())
    throw ValidationError("masked_softmax: every entry is masked");
  std::vector<double> out(scores.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    out[i] = std::exp(scores[i] - peak);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

/// Handle to a value recorded on a Tape.
struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
};

/// Reverse-mode differentiation over a closed set of matrix primitives.
///
/// Each call records one primitive and computes its value eagerly. backward()
/// replays the records in reverse, accumulating gradients into every
/// `input()` leaf and every bound Parameter.
class Tape {
 public:
  enum class Op : std::uint8_t {
    Constant, Input, Param,
    MatMul, Add, Sub, Mul, Scale, AddRow,
    LeakyRelu, Relu, MaskedSoftmax,
    ConcatCols, SliceCols, SliceRows, GatherRows, Reshape,
    Sum, Mean, RowNorms, Sqrt,
  };

  Var constant(Matrix value) { return push(Op::Constant, std::move(value), false); }

  /// A leaf whose gradient can be read back with grad().
  Var input(Matrix value) { return push(Op::Input, std::move(value), true); }

  Var param(Parameter& p) {
    Var v = push(Op::Param, p.value, true);
    nodes_[v.id].param = &p;
    return v;
  }

  Var matmul(Var a, Var b) {
    return push(Op::MatMul, ranrec::matmul(value(a), value(b)), a, b);
  }

  Var add(Var a, Var b) {
    check_same(a, b, "add");
    return push(Op::Add, value(a) + value(b), a, b);
  }

  Var sub(Var a, Var b) {
    check_same(a, b, "sub");
    return push(Op::Sub, value(a) - value(b), a, b);
  }

  /// Elementwise product.
  Var mul(Var a, Var b) {
    check_same(a, b, "mul");
    Matrix out = value(a);
    const Matrix& vb = value(b);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vb[i];
    return push(Op::Mul, std::move(out), a, b);
  }

  Var scale(Var a, double k) {
    Var v = push(Op::Scale, value(a) * k, a);
    nodes_[v.id].scalar = k;
    return v;
  }

  /// a + bias, where bias is 1 x cols(a) and is added to every row.
  Var add_row(Var a, Var bias) {
    const Matrix& va = value(a);
    const Matrix& vb = value(bias);
    if (vb.rows() != 1 || vb.cols() != va.cols())
      throw ValidationError("add_row: bias must be 1x" + std::to_string(va.cols()));
    Matrix out = va;
    for (std::size_t r = 0; r < out.rows(); ++r)
      for (std::size_t c = 0; c < out.cols(); ++c) out(r, c) += vb[c];
    return push(Op::AddRow, std::move(out), a, bias);
  }

  Var leaky_relu(Var a, double slope) {
    Var v = push(Op::LeakyRelu, ranrec::leaky_relu(value(a), slope), a);
    nodes_[v.id].scalar = slope;
    return v;
  }

  Var relu(Var a) {
    Matrix out = value(a);
    for (auto& x : out.data()) x = x > 0.0 ? x : 0.0;
    return push(Op::Relu, std::move(out), a);
  }

  /// Row-wise masked softmax. `mask` is row-major with the shape of `scores`.
  Var masked_softmax(Var scores, std::vector<bool> mask) {
    const Matrix& s = value(scores);
    if (mask.size() != s.size()) throw ValidationError("masked_softmax: mask shape mismatch");
    Matrix out(s.rows(), s.cols());
    std::vector<bool> row_mask(s.cols());
    for (std::size_t r = 0; r < s.rows(); ++r) {
      for (std::size_t c = 0; c < s.cols(); ++c) row_mask[c] = mask[r * s.cols() + c];
      const auto probs = ranrec::masked_softmax(s.row(r), row_mask);
      std::copy(probs.begin(), probs.end(), out.row(r).begin());
    }
    return push(Op::MaskedSoftmax, std::move(out), scores);
  }

  Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ValidationError("concat_cols: no inputs");
    const std::size_t rows = value(parts[0]).rows();
    std::size_t cols = 0;
    for (Var p : parts) {
      if (value(p).rows() != rows) throw ValidationError("concat_cols: row count mismatch");
      cols += value(p).cols();
    }
    Matrix out(rows, cols);
    std::size_t offset = 0;
    for (Var p : parts) {
      const Matrix& vp = value(p);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < vp.cols(); ++c) out(r, offset + c) = vp(r, c);
      offset += vp.cols();
    }
    Var v = push(Op::ConcatCols, std::move(out), false);
    Node& n = nodes_[v.id];
    for (Var p : parts) {
      n.extra.push_back(p.id);
      n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
    }
    return v;
  }

  Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    const Matrix& va = value(a);
    if (begin > end || end > va.cols()) throw ValidationError("slice_cols: range out of bounds");
    Matrix out(va.rows(), end - begin);
    for (std::size_t r = 0; r < va.rows(); ++r)
      for (std::size_t c = begin; c < end; ++c) out(r, c - begin) = va(r, c);
    Var v = push(Op::SliceCols, std::move(out), a);
    nodes_[v.id].extra = {static_cast<std::uint32_t>(begin)};
    return v;
  }

  Var slice_rows(Var a, std::size_t begin, std::size_t end) {
    const Matrix& va = value(a);
    if (begin > end || end > va.rows()) throw ValidationError("slice_rows: range out of bounds");
    Matrix out(end - begin, va.cols());
    std::copy(va.data().begin() + static_cast<std::ptrdiff_t>(begin * va.cols()),
              va.data().begin() + static_cast<std::ptrdiff_t>(end * va.cols()), out.data().begin());
    Var v = push(Op::SliceRows, std::move(out), a);
    nodes_[v.id].extra = {static_cast<std::uint32_t>(begin)};
    return v;
  }

  /// out.row(k) = a.row(index[k]).
  Var gather_rows(Var a, std::vector<std::uint32_t> index) {
    const Matrix& va = value(a);
    Matrix out(index.size(), va.cols());
    for (std::size_t k = 0; k < index.size(); ++k) {
      if (index[k] >= va.rows()) throw ValidationError("gather_rows: index out of range");
      std::copy(va.row(index[k]).begin(), va.row(index[k]).end(), out.row(k).begin());
    }
    Var v = push(Op::GatherRows, std::move(out), a);
    nodes_[v.id].extra = std::move(index);
    return v;
  }

  Var reshape(Var a, std::size_t rows, std::size_t cols) {
    const Matrix& va = value(a);
    if (rows * cols != va.size()) throw ValidationError("reshape: element count mismatch");
    return push(Op::Reshape, Matrix(rows, cols, va.data()), a);
  }

  Var sum(Var a) {
    double s = 0.0;
    for (double x : value(a).data()) s += x;
    return push(Op::Sum, Matrix(1, 1, s), a);
  }

  Var mean(Var a) {
    const Matrix& va = value(a);
    if (va.size() == 0) throw ValidationError("mean of an empty matrix");
    double s = 0.0;
    for (double x : va.data()) s += x;
    return push(Op::Mean, Matrix(1, 1, s / static_cast<double>(va.size())), a);
  }

  /// Euclidean norm of each row, as a column vector.
  Var row_norms(Var a) {
    const Matrix& va = value(a);
    Matrix out(va.rows(), 1);
    for (std::size_t r = 0; r < va.rows(); ++r) out(r, 0) = l2_norm(va.row(r));
    return push(Op::RowNorms, std::move(out), a);
  }

  Var sqrt(Var a) {
    Matrix out = value(a);
    for (auto& x : out.data()) {
      if (x < 0.0) throw NumericError("sqrt of a negative value");
      x = std::sqrt(x);
    }
    return push(Op::Sqrt, std::move(out), a);
  }

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const {
    const Matrix& m = value(v);
    if (m.size() != 1) throw ValidationError("scalar(): value is " + m.shape_string());
    return m[0];
  }

  /// Gradient of the last backward() output w.r.t. v (zeros if unreached).
  Matrix grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.size() == 0) return Matrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

  std::size_t size() const { return nodes_.size(); }

  /// Back-propagates d(out) = 1 for a scalar output.
  void backward(Var out) { backward(out, Matrix(1, 1, 1.0)); }

  /// Back-propagates an explicit upstream gradient `seed` for `out`, adding the
  /// results into bound Parameter::grad.
  void backward(Var out, const Matrix& seed) {
    if (!value(out).same_shape(seed))
      throw ValidationError("backward: seed shape " + seed.shape_string() + " vs value " +
                            value(out).shape_string());
    for (auto& n : nodes_) n.grad = Matrix();
    nodes_[out.id].grad = seed;
    for (std::size_t k = out.id + 1; k-- > 0;) {
      Node& n = nodes_[k];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      propagate(n);
    }
  }

 private:
  static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

  struct Node {
    Op op;
    Matrix value;
    Matrix grad;
    std::uint32_t a = kNone;
    std::uint32_t b = kNone;
    std::vector<std::uint32_t> extra;
    double scalar = 0.0;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  void check_same(Var a, Var b, const char* what) const {
    if (!value(a).same_shape(value(b)))
      throw ValidationError(std::string(what) + ": shape mismatch " + value(a).shape_string() +
                            " vs " + value(b).shape_string());
  }

  Var push(Op op, Matrix value, bool requires_grad) {
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }
  Var push(Op op, Matrix value, Var a) {
    Var v = push(op, std::move(value), nodes_[a.id].requires_grad);
    nodes_[v.id].a = a.id;
    return v;
  }
  Var push(Op op, Matrix value, Var a, Var b) {
    Var v = push(op, std::move(value),
                 nodes_[a.id].requires_grad || nodes_[b.id].requires_grad);
    nodes_[v.id].a = a.id;
    nodes_[v.id].b = b.id;
    return v;
  }

  Matrix* grad_slot(std::uint32_t id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.size() == 0 && n.value.size() != 0) n.grad = Matrix(n.value.rows(), n.value.cols());
    if (n.grad.rows() != n.value.rows() || n.grad.cols() != n.value.cols())
      n.grad = Matrix(n.value.rows(), n.value.cols());
    return &n.grad;
  }

  void propagate(Node& n) {
    const Matrix& g = n.grad;
    switch (n.op) {
      case Op::Constant:
      case Op::Input:
        break;
      case Op::Param:
        if (n.param) {
          if (!n.param->grad.same_shape(n.param->value)) n.param->zero_grad();
          n.param->grad += g;
        }
        break;
      case Op::MatMul: {
        const Matrix& va = nodes_[n.a].value;
        const Matrix& vb = nodes_[n.b].value;
        if (Matrix* ga = grad_slot(n.a)) matmul_a_bt_accumulate(g, vb, *ga);
        if (Matrix* gb = grad_slot(n.b)) matmul_at_b_accumulate(va, g, *gb);
        break;
      }
      case Op::Add:
        if (Matrix* ga = grad_slot(n.a)) *ga += g;
        if (Matrix* gb = grad_slot(n.b)) *gb += g;
        break;
      case Op::Sub:
        if (Matrix* ga = grad_slot(n.a)) *ga += g;
        if (Matrix* gb = grad_slot(n.b)) *gb -= g;
        break;
      case Op::Mul: {
        const Matrix& va = nodes_[n.a].value;
        const Matrix& vb = nodes_[n.b].value;
        if (Matrix* ga = grad_slot(n.a))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * vb[i];
        if (Matrix* gb = grad_slot(n.b))
          for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * va[i];
        break;
      }
      case Op::Scale:
        if (Matrix* ga = grad_slot(n.a))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * n.scalar;
        break;
      case Op::AddRow:
        if (Matrix* ga = grad_slot(n.a)) *ga += g;
        if (Matrix* gb = grad_slot(n.b))
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) (*gb)[c] += g(r, c);
        break;
      case Op::LeakyRelu:
        if (Matrix* ga = grad_slot(n.a)) {
          const Matrix& x = nodes_[n.a].value;
          for (std::size_t i = 0; i < g.size(); ++i)
            (*ga)[i] += g[i] * leaky_relu_derivative(x[i], n.scalar);
        }
        break;
      case Op::Relu:
        if (Matrix* ga = grad_slot(n.a)) {
          const Matrix& x = nodes_[n.a].value;
          for (std::size_t i = 0; i < g.size(); ++i)
            if (x[i] > 0.0) (*ga)[i] += g[i];
        }
        break;
      case Op::MaskedSoftmax:
        if (Matrix* ga = grad_slot(n.a)) {
          // d s_j = p_j (g_j - sum_k p_k g_k); masked entries have p = 0.
          const Matrix& p = n.value;
          for (std::size_t r = 0; r < p.rows(); ++r) {
            double inner = 0.0;
            for (std::size_t c = 0; c < p.cols(); ++c) inner += p(r, c) * g(r, c);
            for (std::size_t c = 0; c < p.cols(); ++c) (*ga)(r, c) += p(r, c) * (g(r, c) - inner);
          }
        }
        break;
      case Op::ConcatCols: {
        std::size_t offset = 0;
        for (std::uint32_t id : n.extra) {
          const std::size_t cols = nodes_[id].value.cols();
          if (Matrix* gp = grad_slot(id))
            for (std::size_t r = 0; r < g.rows(); ++r)
              for (std::size_t c = 0; c < cols; ++c) (*gp)(r, c) += g(r, offset + c);
          offset += cols;
        }
        break;
      }
      case Op::SliceCols:
        if (Matrix* ga = grad_slot(n.a)) {
          const std::size_t begin = n.extra[0];
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(r, begin + c) += g(r, c);
        }
        break;
      case Op::SliceRows:
        if (Matrix* ga = grad_slot(n.a)) {
          const std::size_t begin = n.extra[0];
          for (std::size_t r = 0; r < g.rows(); ++r)
            for (std::size_t c = 0; c < g.cols(); ++c) (*ga)(begin + r, c) += g(r, c);
        }
        break;
      case Op::GatherRows:
        if (Matrix* ga = grad_slot(n.a)) {
          for (std::size_t k = 0; k < n.extra.size(); ++k) {
            auto dst = ga->row(n.extra[k]);
            auto src = g.row(k);
            for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
          }
        }
        break;
      case Op::Reshape:
        if (Matrix* ga = grad_slot(n.a))
          for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i];
        break;
      case Op::Sum:
        if (Matrix* ga = grad_slot(n.a))
          for (auto& x : ga->data()) x += g[0];
        break;
      case Op::Mean:
        if (Matrix* ga = grad_slot(n.a)) {
          const double k = g[0] / static_cast<double>(ga->size());
          for (auto& x : ga->data()) x += k;
        }
        break;
      case Op::RowNorms:
        if (Matrix* ga = grad_slot(n.a)) {
          // Subgradient 0 at the origin.
          const Matrix& x = nodes_[n.a].value;
          for (std::size_t r = 0; r < x.rows(); ++r) {
            const double norm = n.value(r, 0);
            if (norm == 0.0) continue;
            for (std::size_t c = 0; c < x.cols(); ++c) (*ga)(r, c) += g(r, 0) * x(r, c) / norm;
          }
        }
        break;
      case Op::Sqrt:
        if (Matrix* ga = grad_slot(n.a))
          for (std::size_t i = 0; i < g.size(); ++i)
            if (n.value[i] > 0.0) (*ga)[i] += g[i] * 0.5 / n.value[i];
        break;
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace ranrec
