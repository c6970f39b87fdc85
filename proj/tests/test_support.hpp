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

// Shared fixtures and dense oracles. Oracles here are written from the
// definitions with plain loops and never call into the library's kernels.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "ragfuse/graph.hpp"
#include "ragfuse/matrix.hpp"
#include "ragfuse/tensor.hpp"

namespace ragfuse::testing {

using DenseMatrix = std::vector<std::vector<double>>;

/// Random undirected multi-relation graph with duplicate, reversed and self
/// edges mixed into the raw lists.
inline MultiRelationGraph random_graph(std::mt19937_64& gen, std::size_t n, std::size_t relations,
                                       std::size_t feature_dim, double edge_prob) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<EdgeList> edges(relations);
  for (auto& list : edges) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (u(gen) < edge_prob / 2.0) list.emplace_back(i, j);
      }
    }
  }
  Matrix features(n, feature_dim);
  for (double& v : features.data) v = normal(gen);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 2);
  return build_graph(edges, std::move(features), std::move(labels));
}

/// Four nodes, two relations, fixed features: small enough for exhaustive
/// finite differences over every parameter.
inline MultiRelationGraph toy_graph(std::size_t feature_dim = 3) {
  std::mt19937_64 gen(2024);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix features(4, feature_dim);
  for (double& v : features.data) v = normal(gen);
  return build_graph({{{0, 1}, {1, 2}}, {{2, 3}, {0, 3}, {1, 3}}}, std::move(features), {0, 1, 0, 1});
}

/// Dense 0/1 adjacency of one relation.
inline DenseMatrix dense_adjacency(const MultiRelationGraph& g, std::size_t r) {
  const std::size_t n = g.num_nodes();
  DenseMatrix a(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (NodeId j : g.adjacency(r).neighbors(i)) a[i][j] = 1.0;
  }
  return a;
}

/// D̃^{-1/2}(A + I)D̃^{-1/2} from a dense adjacency.
inline DenseMatrix dense_normalized(const DenseMatrix& a) {
  const std::size_t n = a.size();
  DenseMatrix t = a;
  for (std::size_t i = 0; i < n; ++i) t[i][i] += 1.0;
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) deg[i] += t[i][j];
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) t[i][j] /= std::sqrt(deg[i]) * std::sqrt(deg[j]);
  }
  return t;
}

inline DenseMatrix dense_matmul(const DenseMatrix& a, const DenseMatrix& b) {
  const std::size_t m = a.size(), k = b.size(), n = b.empty() ? 0 : b[0].size();
  DenseMatrix c(m, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      for (std::size_t j = 0; j < n; ++j) c[i][j] += a[i][p] * b[p][j];
    }
  }
  return c;
}

inline DenseMatrix to_dense(const Tensor& t) {
  DenseMatrix out(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t i = 0; i < t.rows(); ++i) {
    for (std::size_t j = 0; j < t.cols(); ++j) out[i][j] = t[i * t.cols() + j];
  }
  return out;
}

inline DenseMatrix to_dense(const Matrix& m) {
  DenseMatrix out(m.rows, std::vector<double>(m.cols));
  for (std::size_t i = 0; i < m.rows; ++i) {
    for (std::size_t j = 0; j < m.cols; ++j) out[i][j] = m(i, j);
  }
  return out;
}

inline double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) worst = std::max(worst, std::abs(a[i][j] - b[i][j]));
  }
  return worst;
}

inline Tensor random_tensor(std::mt19937_64& gen, Shape shape, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = normal(gen);
  return t;
}

/// Pairwise AUC: a positive scoring above a negative counts 1, a tie 1/2.
inline double brute_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1.0;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

/// Step-wise AP from each positive's position in the (score desc, index asc)
/// order, found by counting rather than sorting.
inline double brute_ap(const std::vector<double>& s, const std::vector<int>& y) {
  auto ahead = [&](std::size_t j, std::size_t i) { return s[j] > s[i] || (s[j] == s[i] && j <= i); };
  double total = 0.0, positives = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    positives += 1.0;
    double rank = 0.0, hits = 0.0;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (!ahead(j, i)) continue;
      rank += 1.0;
      hits += y[j] == 1 ? 1.0 : 0.0;
    }
    total += hits / rank;
  }
  return total / positives;
}

/// Macro F1 from an explicit 2x2 confusion matrix.
inline double f1_oracle(const std::vector<double>& s, const std::vector<int>& y, double threshold) {
  double cm[2][2] = {{0, 0}, {0, 0}};  // [truth][prediction]
  for (std::size_t i = 0; i < s.size(); ++i) cm[y[i]][s[i] >= threshold ? 1 : 0] += 1.0;
  double macro = 0.0;
  for (int c = 0; c < 2; ++c) {
    const double tp = cm[c][c], fp = cm[1 - c][c], fn = cm[c][1 - c];
    const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    macro += precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
  }
  return macro / 2.0;
}

/// Random scoring instance with both classes present; about half the
/// instances draw scores from a small grid so ties are common.
inline void random_scores(std::mt19937_64& gen, std::size_t max_m, std::vector<double>& s, std::vector<int>& y) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t m = 2 + gen() % (max_m - 1);
  const bool coarse = gen() % 2 == 0;
  s.resize(m);
  y.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    s[i] = coarse ? static_cast<double>(gen() % 5) / 4.0 : u(gen);
    y[i] = static_cast<int>(gen() % 2);
  }
  const std::size_t pos = gen() % m;
  y[pos] = 1;
  y[(pos + 1 + gen() % (m - 1)) % m] = 0;
}

/// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::uint64_t counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("ragfuse_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace ragfuse::testing
