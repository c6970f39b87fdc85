// Copyright 2026 The RAGFuse Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragfuse/matrix.hpp"

namespace ragfuse {

struct MetricReport {
  double auc = 0.0;
  double ap = 0.0;
  double f1_macro = 0.0;
  double threshold = 0.5;
};

namespace detail {
inline void check_labels(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("scores and labels differ in length");
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("label outside {0,1}");
  }
}
}  // namespace detail

/// Mann-Whitney AUC with average ranks for ties (a tie counts one half).
inline double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  detail::check_labels(scores, labels);
  const std::size_t m = scores.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double positives = 0.0;
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j < m && scores[order[j]] == scores[order[i]]) ++j;
    // 1-based ranks i+1..j share their average
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) {
        rank_sum += avg_rank;
        positives += 1.0;
      }
    }
    i = j;
  }
  const double negatives = static_cast<double>(m) - positives;
  if (positives == 0.0 || negatives == 0.0) throw std::invalid_argument("single-class input");
  return (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives);
}

/// Step-wise average precision over the ranking sorted by (score desc, index asc).
inline double average_precision(std::span<const double> scores, std::span<const int> labels) {
  detail::check_labels(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const auto positives = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
  if (positives == 0.0) throw std::invalid_argument("average precision needs at least one positive");
  double hits = 0.0;
  double ap = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 1) {
      hits += 1.0;
      ap += hits / static_cast<double>(k + 1);
    }
  }
  return ap / positives;
}

/// Unweighted mean of per-class F1 with prediction = (score >= threshold).
/// A class with no predicted and no true members scores F1 = 0.
inline double f1_macro(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5) {
  detail::check_labels(scores, labels);
  double tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool pred = scores[i] >= threshold;
    const bool truth = labels[i] == 1;
    if (pred && truth) tp += 1;
    else if (pred && !truth) fp += 1;
    else if (!pred && truth) fn += 1;
    else tn += 1;
  }
  auto f1 = [](double t, double f_pos, double f_neg) {
    const double denom = 2 * t + f_pos + f_neg;
    return denom == 0.0 ? 0.0 : 2 * t / denom;
  };
  return 0.5 * (f1(tp, fp, fn) + f1(tn, fn, fp));
}

/// Threshold maximizing F1-macro over the distinct score values (ties go to
/// the smallest threshold).
inline double best_f1_threshold(std::span<const double> scores, std::span<const int> labels) {
  std::vector<double> candidates(scores.begin(), scores.end());
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  double best = 0.5;
  double best_f1 = -1.0;
  for (double t : candidates) {
    const double f = f1_macro(scores, labels, t);
    if (f > best_f1) {
      best_f1 = f;
      best = t;
    }
  }
  return best;
}

inline MetricReport compute_metrics(std::span<const double> scores, std::span<const int> labels,
                                    double threshold = 0.5) {
  MetricReport r;
  r.auc = roc_auc(scores, labels);
  r.ap = average_precision(scores, labels);
  r.threshold = threshold;
  r.f1_macro = f1_macro(scores, labels, threshold);
  return r;
}

/// Mean over rows of cos(x_i, y_i); rows with a zero norm contribute 0.
inline double mean_cosine_similarity(const Matrix& x, const Matrix& y) {
  if (x.rows != y.rows || x.cols != y.cols) throw std::invalid_argument("cosine similarity: shape mismatch");
  if (x.rows == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    double dot = 0.0, nx = 0.0, ny = 0.0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      dot += x(i, j) * y(i, j);
      nx += x(i, j) * x(i, j);
      ny += y(i, j) * y(i, j);
    }
    if (nx > 0.0 && ny > 0.0) total += dot / (std::sqrt(nx) * std::sqrt(ny));
  }
  return total / static_cast<double>(x.rows);
}

/// Linear CKA: ||Ỹᵀ X̃||²_F / (||X̃ᵀ X̃||_F ||Ỹᵀ Ỹ||_F) on column-centered inputs.
inline double linear_cka(const Matrix& x, const Matrix& y) {
  if (x.rows != y.rows) throw std::invalid_argument("linear CKA: row counts differ");
  if (x.rows < 2) throw std::invalid_argument("linear CKA needs at least two rows");
  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  auto centered = [](const Matrix& m) {
    RowMat c = Eigen::Map<const RowMat>(m.data.data(), static_cast<Eigen::Index>(m.rows),
                                        static_cast<Eigen::Index>(m.cols));
    c.rowwise() -= c.colwise().mean();
    return c;
  };
  const RowMat xc = centered(x);
  const RowMat yc = centered(y);
  const double xx = (xc.transpose() * xc).norm();
  const double yy = (yc.transpose() * yc).norm();
  if (xx == 0.0 || yy == 0.0) throw std::invalid_argument("linear CKA undefined for zero-variance input");
  const double xy = (yc.transpose() * xc).squaredNorm();
  return std::clamp(xy / (xx * yy), 0.0, 1.0);
}

}  // namespace ragfuse
