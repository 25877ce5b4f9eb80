#include <gtest/gtest.h>

#include <cmath>

#include "ranrec/grad_check.hpp"
#include "ranrec/matrix.hpp"
#include "ranrec/rng.hpp"
#include "ranrec/tape.hpp"

using namespace ranrec;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data()) v = rng.uniform(-1.0, 1.0);
  return m;
}

// Keeps entries away from the leaky_relu / relu kink so central differences
// stay on one side of it.
Matrix kink_free_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data()) {
    v = rng.uniform(0.05, 1.0);
    if (rng.below(2)) v = -v;
  }
  return m;
}

double check(const std::function<Var(Tape&)>& build, std::vector<Parameter*> params) {
  return grad_check(build, params).max_relative_error;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Rng rng(1);
  const Matrix a = random_matrix(3, 3, rng);
  EXPECT_EQ(matmul(Matrix::identity(3), a), a);
}

TEST(Matmul, HandArithmetic) {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{1}, {1}};
  EXPECT_EQ(matmul(a, b), (Matrix{{3}, {7}}));
}

TEST(Matmul, ShapeMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 3)), ValidationError);
}

TEST(Matmul, AssociativeOnRandom4x4) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = random_matrix(4, 4, rng), b = random_matrix(4, 4, rng), c = random_matrix(4, 4, rng);
    const Matrix left = matmul(matmul(a, b), c), right = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(left[i], right[i], 1e-10);
  }
}

TEST(Matmul, GradientOfSumMatchesFiniteDifferences) {
  Rng rng(3);
  Parameter a("a", random_matrix(3, 4, rng));
  const Matrix b = random_matrix(4, 2, rng);
  EXPECT_LT(check([&](Tape& t) { return t.sum(t.matmul(t.param(a), t.constant(b))); }, {&a}), 1e-6);
}

TEST(LeakyRelu, Definition) {
  EXPECT_DOUBLE_EQ(leaky_relu(-1.0, 0.2), -0.2);
  EXPECT_DOUBLE_EQ(leaky_relu(3.0, 0.2), 3.0);
}

TEST(LeakyRelu, SubgradientAtZeroIsSlope) {
  EXPECT_DOUBLE_EQ(leaky_relu_derivative(0.0, 0.2), 0.2);
  // The one-sided difference from the left agrees with the convention.
  const double h = 1e-7;
  EXPECT_NEAR((leaky_relu(0.0, 0.2) - leaky_relu(-h, 0.2)) / h, 0.2, 1e-9);

  Parameter x("x", Matrix(1, 1, 0.0));
  Tape t;
  const Var y = t.sum(t.leaky_relu(t.param(x), 0.2));
  t.backward(y);
  EXPECT_DOUBLE_EQ(x.grad[0], 0.2);
}

TEST(MaskedSoftmax, UniformOverTwoZeros) {
  const auto p = masked_softmax(std::vector<double>{0.0, 0.0}, {true, true});
  EXPECT_DOUBLE_EQ(p[0], 0.5);
  EXPECT_DOUBLE_EQ(p[1], 0.5);
}

TEST(MaskedSoftmax, SingleUnmaskedEntry) {
  const auto p = masked_softmax(std::vector<double>{3.0, -2.0, 7.0}, {false, true, false});
  EXPECT_EQ(p, (std::vector<double>{0.0, 1.0, 0.0}));
}

TEST(MaskedSoftmax, LargeScoresStayFinite) {
  const auto p = masked_softmax(std::vector<double>{1000.0, 999.0}, {true, true});
  const double expected = 1.0 / (1.0 + std::exp(-1.0));
  EXPECT_NEAR(p[0], expected, 1e-12);
  EXPECT_NEAR(p[1], 1.0 - expected, 1e-12);
  EXPECT_NEAR(p[0], 0.7311, 5e-5);
}

TEST(MaskedSoftmax, AllMaskedThrows) {
  EXPECT_THROW(masked_softmax(std::vector<double>{1.0, 2.0}, {false, false}), Error);
}

TEST(MaskedSoftmax, PropertiesOnRandomInputs) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    std::vector<double> s(n);
    std::vector<bool> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.uniform(-20.0, 20.0);
      mask[i] = rng.below(3) != 0;
    }
    mask[rng.below(n)] = true;
    const auto p = masked_softmax(s, mask);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      EXPECT_GE(p[i], 0.0);
      if (!mask[i]) {
        EXPECT_EQ(p[i], 0.0);
      }
      total += p[i];
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    const double shift = rng.uniform(-50.0, 50.0);
    std::vector<double> shifted = s;
    for (std::size_t i = 0; i < n; ++i)
      if (mask[i]) shifted[i] += shift;
    const auto q = masked_softmax(shifted, mask);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(p[i], q[i], 1e-12);
  }
}

TEST(Distances, Examples) {
  const std::vector<double> v{0.3, -1.2, 4.0};
  EXPECT_EQ(l2_distance(v, v), 0.0);
  EXPECT_NEAR(cosine(v, v), 1.0, 1e-15);
  EXPECT_NEAR(cosine(std::vector<double>{1, 0}, std::vector<double>{1, 1}), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(cosine(std::vector<double>{1, 0}, std::vector<double>{1, 1}), 0.70710678, 1e-8);
}

TEST(Distances, CosineOfZeroVectorIsUndefined) {
  EXPECT_THROW(cosine(std::vector<double>{0, 0}, std::vector<double>{1, 1}), UndefinedCosine);
}

TEST(GradCheck, QuadraticIsExact) {
  Rng rng(5);
  Parameter w("w", random_matrix(5, 1, rng));
  const auto r = grad_check([&](Tape& t) {
    const Var x = t.param(w);
    return t.sum(t.mul(x, x));
  }, std::vector<Parameter*>{&w});
  EXPECT_LT(r.max_relative_error, 1e-8);
  EXPECT_EQ(r.coordinates, 5u);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  Parameter w("w", Matrix(2, 2, 1.0));
  const auto r = grad_check([&](bool) { return 3.5; }, std::vector<Parameter*>{&w});
  EXPECT_EQ(r.max_relative_error, 0.0);
  EXPECT_EQ(w.grad, Matrix(2, 2));
}

TEST(GradCheck, DetectsAWrongGradient) {
  Parameter w("w", Matrix(1, 1, 2.0));
  // Claims d(w^2)/dw = w instead of 2w.
  const auto r = grad_check(
      [&](bool acc) {
        if (acc) w.grad[0] += w.value[0];
        return w.value[0] * w.value[0];
      },
      std::vector<Parameter*>{&w});
  EXPECT_GT(r.max_relative_error, 0.1);
}

// Every differentiable primitive against central differences on random shapes.
TEST(TapePrimitives, PassGradCheckOnRandomShapes) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(substream_seed(seed, "tape-primitives"));
    const std::size_t r = 1 + rng.below(4), c = 1 + rng.below(4), k = 1 + rng.below(4);
    Parameter a("a", kink_free_matrix(r, c, rng));
    Parameter b("b", kink_free_matrix(r, c, rng));
    Parameter w("w", random_matrix(c, k, rng));
    Parameter bias("bias", random_matrix(1, c, rng));
    const Matrix weights = random_matrix(r, c, rng);
    const Matrix rk = random_matrix(r, k, rng);
    const Matrix wide = random_matrix(r, 2 * c, rng);
    const Matrix three = random_matrix(3, c, rng);
    auto weighted = [&](Tape& t, Var v) {
      return t.sum(t.mul(v, t.constant(weights)));
    };
    const std::vector<Parameter*> ab{&a, &b};
    EXPECT_LT(check([&](Tape& t) { return weighted(t, t.add(t.param(a), t.param(b))); }, ab), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return weighted(t, t.sub(t.param(a), t.param(b))); }, ab), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return weighted(t, t.mul(t.param(a), t.param(b))); }, ab), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return weighted(t, t.scale(t.param(a), -1.7)); }, {&a}), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return weighted(t, t.add_row(t.param(a), t.param(bias))); },
                    {&a, &bias}), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return weighted(t, t.leaky_relu(t.param(a), 0.2)); }, {&a}), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return weighted(t, t.relu(t.param(a))); }, {&a}), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return t.sum(t.mul(t.matmul(t.param(a), t.param(w)),
                                                      t.constant(rk))); },
                    {&a, &w}), 1e-4);
    std::vector<bool> mask(r * c, true);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) mask[i * c + j] = (i + j) % 3 != 1 || j == 0;
    EXPECT_LT(check([&](Tape& t) { return weighted(t, t.masked_softmax(t.param(a), mask)); }, {&a}), 1e-4);
    EXPECT_LT(check([&](Tape& t) {
      const Var parts[] = {t.param(a), t.param(b)};
      return t.sum(t.mul(t.concat_cols(parts), t.constant(wide)));
    }, ab), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return t.sum(t.slice_cols(t.param(a), 0, 1)); }, {&a}), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return t.sum(t.slice_rows(t.param(a), r - 1, r)); }, {&a}), 1e-4);
    EXPECT_LT(check([&](Tape& t) {
      return t.sum(t.mul(t.gather_rows(t.param(a), {0, 0, static_cast<std::uint32_t>(r - 1)}),
                         t.constant(three)));
    }, {&a}), 1e-4);
    EXPECT_LT(check([&](Tape& t) {
      return t.sum(t.mul(t.reshape(t.param(a), c, r), t.constant(weights.transpose())));
    }, {&a}), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return t.mean(t.mul(t.param(a), t.param(a))); }, {&a}), 1e-4);
    EXPECT_LT(check([&](Tape& t) { return t.sum(t.row_norms(t.param(a))); }, {&a}), 1e-4);
    EXPECT_LT(check([&](Tape& t) {
      const Var x = t.param(a);
      return t.sum(t.sqrt(t.add(t.mul(x, x), t.constant(Matrix(r, c, 0.5)))));
    }, {&a}), 1e-4);
  }
}

TEST(TapePrimitives, SeededBackwardScalesGradient) {
  Parameter a("a", Matrix{{1.0, 2.0}});
  Tape t;
  const Var y = t.sum(t.mul(t.param(a), t.param(a)));
  t.backward(y, Matrix(1, 1, 3.0));
  EXPECT_EQ(a.grad, (Matrix{{6.0, 12.0}}));
}

TEST(TapePrimitives, InputGradientIsReadable) {
  Tape t;
  const Var x = t.input(Matrix{{1.0, -2.0}});
  const Var y = t.sum(t.scale(x, 4.0));
  t.backward(y);
  EXPECT_EQ(t.grad(x), (Matrix{{4.0, 4.0}}));
}

TEST(TapePrimitives, RowNormSubgradientAtZeroIsZero) {
  Parameter a("a", Matrix(1, 3));
  Tape t;
  t.backward(t.sum(t.row_norms(t.param(a))));
  EXPECT_EQ(a.grad, Matrix(1, 3));
}
