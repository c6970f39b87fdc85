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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ragfuse/matrix.hpp"
#include "ragfuse/random.hpp"

namespace ragfuse {

using NodeId = std::uint32_t;
using Edge = std::pair<std::size_t, std::size_t>;
using EdgeList = std::vector<Edge>;

/// Unweighted, undirected adjacency in CSR form. Neighbor lists are sorted,
/// deduplicated and never contain the row's own node.
struct Adjacency {
  std::vector<std::size_t> row_ptr{0};
  std::vector<NodeId> col_idx;

  std::size_t num_nodes() const { return row_ptr.size() - 1; }
  std::size_t degree(std::size_t i) const { return row_ptr[i + 1] - row_ptr[i]; }
  std::span<const NodeId> neighbors(std::size_t i) const {
    return {col_idx.data() + row_ptr[i], row_ptr[i + 1] - row_ptr[i]};
  }
  /// Undirected edge count (each edge stored twice).
  std::size_t num_edges() const { return col_idx.size() / 2; }

  bool operator==(const Adjacency&) const = default;
};

/// D̃^{-1/2}(A + I)D̃^{-1/2} for one relation.
struct NormalizedAdjacency {
  std::size_t relation = 0;
  SparseMatrix values;
};

/// Builds the self-loop-augmented symmetric normalization of an adjacency.
/// When `restrict_to` is non-empty, only those rows/columns are kept (in the
/// given order), but degrees still come from the full adjacency.
inline SparseMatrix normalize_adjacency(const Adjacency& adj, std::span<const NodeId> restrict_to = {}) {
  const std::size_t n = adj.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(adj.degree(i) + 1));

  SparseMatrix out;
  if (restrict_to.empty()) {
    out.rows = out.cols = n;
    out.row_ptr.assign(1, 0);
    out.col_idx.reserve(adj.col_idx.size() + n);
    out.values.reserve(adj.col_idx.size() + n);
    for (std::size_t i = 0; i < n; ++i) {
      bool self_done = false;
      for (NodeId j : adj.neighbors(i)) {
        if (!self_done && j > i) {
          out.col_idx.push_back(static_cast<std::uint32_t>(i));
          out.values.push_back(inv_sqrt[i] * inv_sqrt[i]);
          self_done = true;
        }
        out.col_idx.push_back(j);
        out.values.push_back(inv_sqrt[i] * inv_sqrt[j]);
      }
      if (!self_done) {
        out.col_idx.push_back(static_cast<std::uint32_t>(i));
        out.values.push_back(inv_sqrt[i] * inv_sqrt[i]);
      }
      out.row_ptr.push_back(out.col_idx.size());
    }
    return out;
  }

  const std::size_t m = restrict_to.size();
  std::vector<std::int64_t> local(n, -1);
  for (std::size_t k = 0; k < m; ++k) local[restrict_to[k]] = static_cast<std::int64_t>(k);
  out.rows = out.cols = m;
  out.row_ptr.assign(1, 0);
  std::vector<std::pair<std::uint32_t, double>> row;
  for (std::size_t k = 0; k < m; ++k) {
    const NodeId i = restrict_to[k];
    row.clear();
    row.emplace_back(static_cast<std::uint32_t>(k), inv_sqrt[i] * inv_sqrt[i]);
    for (NodeId j : adj.neighbors(i)) {
      if (local[j] >= 0) row.emplace_back(static_cast<std::uint32_t>(local[j]), inv_sqrt[i] * inv_sqrt[j]);
    }
    std::sort(row.begin(), row.end());
    for (auto [c, v] : row) {
      out.col_idx.push_back(c);
      out.values.push_back(v);
    }
    out.row_ptr.push_back(out.col_idx.size());
  }
  return out;
}

/// Immutable multi-relation graph: node features, binary labels and one
/// undirected adjacency per relation. Normalized adjacencies are computed at
/// construction, so every accessor is safe for concurrent readers.
class MultiRelationGraph {
 public:
  MultiRelationGraph() = default;

  std::size_t num_nodes() const { return labels_.size(); }
  std::size_t num_relations() const { return adjacency_.size(); }
  std::size_t feature_dim() const { return features_.cols; }

  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }

  const Adjacency& adjacency(std::size_t relation) const {
    check_relation(relation);
    return adjacency_[relation];
  }

  const NormalizedAdjacency& normalized_adjacency(std::size_t relation) const {
    check_relation(relation);
    return normalized_[relation];
  }

  bool operator==(const MultiRelationGraph& other) const {
    return features_ == other.features_ && labels_ == other.labels_ && adjacency_ == other.adjacency_ &&
           relation_names_ == other.relation_names_;
  }

  friend MultiRelationGraph build_graph(const std::vector<EdgeList>& edges_per_relation, Matrix features,
                                        std::vector<int> labels, std::vector<std::string> relation_names);

 private:
  void check_relation(std::size_t relation) const {
    if (relation >= adjacency_.size()) {
      throw std::out_of_range("relation index " + std::to_string(relation) + " out of range (R=" +
                              std::to_string(adjacency_.size()) + ")");
    }
  }

  Matrix features_;
  std::vector<int> labels_;
  std::vector<Adjacency> adjacency_;
  std::vector<NormalizedAdjacency> normalized_;
  std::vector<std::string> relation_names_;
};

/// Symmetrizes, deduplicates and drops self-edges, producing sorted CSR lists.
inline Adjacency build_adjacency(std::size_t n, const EdgeList& edges) {
  std::vector<std::size_t> counts(n + 1, 0);
  for (auto [u, v] : edges) {
    if (u >= n || v >= n) {
      throw std::out_of_range("edge endpoint (" + std::to_string(u) + "," + std::to_string(v) +
                              ") out of range for n=" + std::to_string(n));
    }
    if (u == v) continue;
    ++counts[u + 1];
    ++counts[v + 1];
  }
  for (std::size_t i = 0; i < n; ++i) counts[i + 1] += counts[i];
  std::vector<NodeId> raw(counts[n]);
  std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
  for (auto [u, v] : edges) {
    if (u == v) continue;
    raw[cursor[u]++] = static_cast<NodeId>(v);
    raw[cursor[v]++] = static_cast<NodeId>(u);
  }
  Adjacency adj;
  adj.row_ptr.assign(1, 0);
  adj.row_ptr.reserve(n + 1);
  adj.col_idx.reserve(raw.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto first = raw.begin() + static_cast<std::ptrdiff_t>(counts[i]);
    auto last = raw.begin() + static_cast<std::ptrdiff_t>(counts[i + 1]);
    std::sort(first, last);
    last = std::unique(first, last);
    adj.col_idx.insert(adj.col_idx.end(), first, last);
    adj.row_ptr.push_back(adj.col_idx.size());
  }
  return adj;
}

inline MultiRelationGraph build_graph(const std::vector<EdgeList>& edges_per_relation, Matrix features,
                                      std::vector<int> labels, std::vector<std::string> relation_names = {}) {
  if (edges_per_relation.empty()) throw std::invalid_argument("graph needs at least one relation");
  const std::size_t n = labels.size();
  if (features.rows != n) {
    throw std::invalid_argument("feature row count mismatch: " + std::to_string(features.rows) + " rows for " +
                                std::to_string(n) + " nodes");
  }
  for (int y : labels) {
    if (y != 0 && y != 1) throw std::invalid_argument("label outside {0,1}: " + std::to_string(y));
  }
  if (relation_names.empty()) {
    for (std::size_t r = 0; r < edges_per_relation.size(); ++r) relation_names.push_back("r" + std::to_string(r));
  }
  if (relation_names.size() != edges_per_relation.size()) {
    throw std::invalid_argument("relation name count does not match relation count");
  }

  MultiRelationGraph g;
  g.features_ = std::move(features);
  g.labels_ = std::move(labels);
  g.relation_names_ = std::move(relation_names);
  for (std::size_t r = 0; r < edges_per_relation.size(); ++r) {
    g.adjacency_.push_back(build_adjacency(n, edges_per_relation[r]));
    g.normalized_.push_back({r, normalize_adjacency(g.adjacency_.back())});
  }
  return g;
}

inline const NormalizedAdjacency& normalized_adjacency(const MultiRelationGraph& graph, std::size_t relation) {
  return graph.normalized_adjacency(relation);
}

/// Per-hop node sets (hop 1..max_hop) around `node` under one relation, by BFS.
/// Sets are sorted, pairwise disjoint and never contain the target.
inline std::vector<std::vector<NodeId>> khop_neighbors(const MultiRelationGraph& graph, std::size_t node,
                                                       std::size_t relation, std::size_t max_hop) {
  if (node >= graph.num_nodes()) throw std::out_of_range("node " + std::to_string(node) + " out of range");
  if (max_hop < 1) throw std::invalid_argument("max_hop must be >= 1");
  const Adjacency& adj = graph.adjacency(relation);
  std::vector<std::vector<NodeId>> hops(max_hop);
  std::vector<NodeId> frontier{static_cast<NodeId>(node)};
  std::vector<NodeId> visited{static_cast<NodeId>(node)};
  for (std::size_t h = 0; h < max_hop && !frontier.empty(); ++h) {
    std::vector<NodeId> next;
    for (NodeId u : frontier) {
      for (NodeId v : adj.neighbors(u)) next.push_back(v);
    }
    std::sort(next.begin(), next.end());
    next.erase(std::unique(next.begin(), next.end()), next.end());
    std::vector<NodeId> fresh;
    std::set_difference(next.begin(), next.end(), visited.begin(), visited.end(), std::back_inserter(fresh));
    std::vector<NodeId> merged;
    std::merge(visited.begin(), visited.end(), fresh.begin(), fresh.end(), std::back_inserter(merged));
    visited = std::move(merged);
    hops[h] = fresh;
    frontier = std::move(fresh);
  }
  return hops;
}

struct NodeSplit {
  std::vector<NodeId> train;
  std::vector<NodeId> validation;
  std::vector<NodeId> test;
};

/// Per-class proportional split. Each class is shuffled with a seeded stream;
/// the first round(train_ratio * |class|) go to train, the next
/// round(val_ratio * |class|) to validation, the rest to test.
inline NodeSplit stratified_split(std::span<const int> labels, double train_ratio, double val_ratio,
                                  std::uint64_t seed) {
  if (!(train_ratio > 0.0 && train_ratio < 1.0)) throw std::invalid_argument("train_ratio outside (0,1)");
  if (!(val_ratio >= 0.0 && val_ratio < 1.0)) throw std::invalid_argument("val_ratio outside [0,1)");
  if (train_ratio + val_ratio >= 1.0) throw std::invalid_argument("train_ratio + val_ratio must be < 1");

  std::vector<NodeId> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("label outside {0,1}");
    by_class[labels[i]].push_back(static_cast<NodeId>(i));
  }
  NodeSplit split;
  Rng rng(seed);
  for (int c : {1, 0}) {
    auto& members = by_class[c];
    if (members.empty()) throw std::invalid_argument("class " + std::to_string(c) + " has zero members");
    rng.shuffle(std::span<NodeId>(members));
    const auto count = static_cast<double>(members.size());
    const auto n_train = static_cast<std::size_t>(std::llround(train_ratio * count));
    const auto n_val =
        std::min(members.size() - n_train, static_cast<std::size_t>(std::llround(val_ratio * count)));
    split.train.insert(split.train.end(), members.begin(), members.begin() + n_train);
    split.validation.insert(split.validation.end(), members.begin() + n_train, members.begin() + n_train + n_val);
    split.test.insert(split.test.end(), members.begin() + n_train + n_val, members.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

}  // namespace ragfuse
