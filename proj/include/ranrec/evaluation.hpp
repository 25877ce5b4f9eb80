#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "ranrec/error.hpp"
#include "ranrec/matrix.hpp"

namespace ranrec {

// ---------------------------------------------------------------------------
// Configuration accuracy

struct AccuracyReport {
  std::string model;  ///< sgnn | gae | untrained
  std::string split;  ///< train | test
  double accuracy = 0.0;
  std::vector<double> per_cell;        ///< cosine per included cell
  std::vector<std::size_t> excluded;   ///< positions with a zero vector
};

/// Mean cosine similarity between true and predicted config vectors. Cells
/// where either vector is zero are skipped and listed in `excluded`.
inline AccuracyReport accuracy(const std::vector<std::vector<double>>& truth,
                               const std::vector<std::vector<double>>& predicted) {
  if (truth.size() != predicted.size())
    throw ValidationError("accuracy: " + std::to_string(truth.size()) + " truths vs " +
                          std::to_string(predicted.size()) + " predictions");
  AccuracyReport r;
  for (std::size_t j = 0; j < truth.size(); ++j) {
    if (l2_norm(truth[j]) == 0.0 || l2_norm(predicted[j]) == 0.0) {
      r.excluded.push_back(j);
      continue;
    }
    r.per_cell.push_back(cosine(truth[j], predicted[j]));
  }
  if (!r.per_cell.empty())
    r.accuracy = std::accumulate(r.per_cell.begin(), r.per_cell.end(), 0.0) /
                 static_cast<double>(r.per_cell.size());
  return r;
}

// ---------------------------------------------------------------------------
// Symmetric eigendecomposition and PCA

struct SymmetricEigen {
  std::vector<double> values;  ///< descending
  Matrix vectors;              ///< column k pairs with values[k]
};

/// Cyclic Jacobi rotations. Adequate for the small dense matrices used here.
inline SymmetricEigen jacobi_eigen(Matrix a, std::size_t max_sweeps = 100) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ValidationError("jacobi_eigen: matrix must be square");
  Matrix v = Matrix::identity(n);
  double scale = 0.0;
  for (double x : a.data()) scale = std::max(scale, std::abs(x));
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off <= 1e-30 * std::max(1.0, scale * scale)) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  SymmetricEigen out;
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values.push_back(a(order[k], order[k]));
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

struct Projection2D {
  std::vector<std::vector<double>> components;  ///< two orthonormal d-vectors
  std::pair<double, double> explained_variance;
  Matrix points;  ///< n x 2
};

/// Projects mean-centered rows onto the top two covariance eigenvectors. Each
/// component's first non-negligible coordinate is made positive.
inline Projection2D pca_project(const Matrix& embeddings) {
  const std::size_t n = embeddings.rows(), d = embeddings.cols();
  if (n < 3) throw ValidationError("pca_project: need at least 3 points");
  if (d < 2) throw ValidationError("pca_project: need at least 2 dimensions");
  std::vector<double> mean(d, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) mean[c] += embeddings(r, c);
  for (auto& m : mean) m /= static_cast<double>(n);
  Matrix centered = embeddings;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) centered(r, c) -= mean[c];
  Matrix cov(d, d);
  matmul_at_b_accumulate(centered, centered, cov);
  cov *= 1.0 / static_cast<double>(n - 1);
  double trace = 0.0;
  for (std::size_t k = 0; k < d; ++k) trace += cov(k, k);
  if (trace <= 0.0) throw NumericError("pca_project: all points are identical (rank 0)");

  const auto eig = jacobi_eigen(cov);
  Projection2D out;
  for (std::size_t k = 0; k < 2; ++k) {
    std::vector<double> comp(d);
    for (std::size_t r = 0; r < d; ++r) comp[r] = eig.vectors(r, k);
    double largest = 0.0;
    for (double x : comp) largest = std::max(largest, std::abs(x));
    for (double x : comp) {
      if (std::abs(x) > 1e-12 * largest) {
        if (x < 0.0)
          for (auto& y : comp) y = -y;
        break;
      }
    }
    out.components.push_back(std::move(comp));
  }
  out.explained_variance = {std::max(0.0, eig.values[0]), std::max(0.0, eig.values[1])};
  out.points = Matrix(n, 2);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < 2; ++k) out.points(r, k) = dot(centered.row(r), out.components[k]);
  return out;
}

// ---------------------------------------------------------------------------
// Ranking

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores
/// count one half.
inline double roc_auc(const std::vector<double>& scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw ValidationError("roc_auc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (positive[order[k]]) {
        rank_sum += avg_rank;
        ++pos;
      }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw ValidationError("roc_auc: need both positive and negative cases");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

}  // namespace ranrec
