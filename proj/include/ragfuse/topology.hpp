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
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragfuse/graph.hpp"
#include "ragfuse/ops.hpp"
#include "ragfuse/params.hpp"

namespace ragfuse {

/// How the per-relation GCNs see the graph during a forward pass.
enum class PropagationMode {
  kFullGraph,  // propagate over all n nodes, then gather batch rows
  kInduced,    // propagate over the batch's (layers)-hop closure only
};

/// sigma(Â H W), with sigma = ReLU applied only when requested.
inline Tensor gcn_layer(const SparseMatrix& a_hat, const Tensor& h, const Tensor& w, bool apply_nonlinearity) {
  Tensor out = ops::spmm(a_hat, ops::matmul(h, w));
  return apply_nonlinearity ? ops::relu(out) : out;
}

inline Tensor gcn_layer(const NormalizedAdjacency& a_hat, const Tensor& h, const Tensor& w, bool apply_nonlinearity) {
  return gcn_layer(a_hat.values, h, w, apply_nonlinearity);
}

struct TopologyConfig {
  std::size_t feature_dim = 0;
  std::size_t num_relations = 1;
  std::size_t dim = 64;
  std::size_t layers = 2;
  PropagationMode mode = PropagationMode::kFullGraph;
};

/// One independent bias-free GCN stack per relation. The last layer has no
/// nonlinearity.
class TopologyEncoder {
 public:
  TopologyEncoder() = default;

  TopologyEncoder(const TopologyConfig& config, ParamStore& store, Rng& rng, const std::string& prefix = "topology")
      : config_(config) {
    if (config.layers < 1) throw std::invalid_argument("topology encoder needs at least one GCN layer");
    weights.resize(config.num_relations);
    for (std::size_t r = 0; r < config.num_relations; ++r) {
      for (std::size_t l = 0; l < config.layers; ++l) {
        const std::size_t fan_in = l == 0 ? config.feature_dim : config.dim;
        weights[r].push_back(store.add(prefix + ".r" + std::to_string(r) + ".w" + std::to_string(l),
                                       init::uniform_weight(fan_in, config.dim, rng)));
      }
    }
  }

  const TopologyConfig& config() const { return config_; }

  /// All-node outputs for one relation -> (n, d).
  Tensor relation_forward(const SparseMatrix& a_hat, const Tensor& features, std::size_t relation) const {
    Tensor h = features;
    for (std::size_t l = 0; l < config_.layers; ++l) {
      h = gcn_layer(a_hat, h, weights.at(relation)[l], l + 1 < config_.layers);
    }
    return h;
  }

  /// Full-graph propagation for every relation -> (n, R, d).
  Tensor forward_all(const MultiRelationGraph& graph, const Tensor& features) const {
    check(graph, features);
    std::vector<Tensor> per_relation;
    for (std::size_t r = 0; r < config_.num_relations; ++r) {
      per_relation.push_back(relation_forward(graph.normalized_adjacency(r).values, features, r));
    }
    return ops::reshape(ops::concat(per_relation), {graph.num_nodes(), config_.num_relations, config_.dim});
  }

  /// Batch-row embeddings -> (B, R, d), using the configured propagation mode.
  Tensor forward(const MultiRelationGraph& graph, const Tensor& features, std::span<const NodeId> batch) const {
    check(graph, features);
    for (NodeId v : batch) {
      if (v >= graph.num_nodes()) throw std::out_of_range("batch node " + std::to_string(v) + " out of range");
    }
    std::vector<Tensor> per_relation;
    for (std::size_t r = 0; r < config_.num_relations; ++r) {
      if (config_.mode == PropagationMode::kFullGraph) {
        const Tensor all = relation_forward(graph.normalized_adjacency(r).values, features, r);
        std::vector<std::size_t> rows(batch.begin(), batch.end());
        per_relation.push_back(ops::gather_rows(all, rows));
      } else {
        per_relation.push_back(induced_forward(graph, features, batch, r));
      }
    }
    return ops::reshape(ops::concat(per_relation), {batch.size(), config_.num_relations, config_.dim});
  }

  std::vector<std::vector<Tensor>> weights;  // [relation][layer]

 private:
  void check(const MultiRelationGraph& graph, const Tensor& features) const {
    if (graph.num_relations() != config_.num_relations) {
      throw std::invalid_argument("graph has " + std::to_string(graph.num_relations()) + " relations, encoder " +
                                  std::to_string(config_.num_relations));
    }
    if (features.rank() != 2 || features.dim(0) != graph.num_nodes() || features.dim(1) != config_.feature_dim) {
      throw std::invalid_argument("topology features must be (n, " + std::to_string(config_.feature_dim) + ")");
    }
  }

  // Exact for batch rows: the closure contains every node within `layers`
  // hops, and the normalization keeps full-graph degrees.
  Tensor induced_forward(const MultiRelationGraph& graph, const Tensor& features, std::span<const NodeId> batch,
                         std::size_t relation) const {
    const Adjacency& adj = graph.adjacency(relation);
    std::vector<NodeId> closure(batch.begin(), batch.end());
    std::sort(closure.begin(), closure.end());
    closure.erase(std::unique(closure.begin(), closure.end()), closure.end());
    std::vector<NodeId> frontier = closure;
    for (std::size_t l = 0; l < config_.layers; ++l) {
      std::vector<NodeId> next;
      for (NodeId u : frontier) {
        for (NodeId v : adj.neighbors(u)) next.push_back(v);
      }
      std::sort(next.begin(), next.end());
      next.erase(std::unique(next.begin(), next.end()), next.end());
      std::vector<NodeId> fresh;
      std::set_difference(next.begin(), next.end(), closure.begin(), closure.end(), std::back_inserter(fresh));
      std::vector<NodeId> merged;
      std::merge(closure.begin(), closure.end(), fresh.begin(), fresh.end(), std::back_inserter(merged));
      closure = std::move(merged);
      frontier = std::move(fresh);
    }
    auto a_hat = std::make_shared<const SparseMatrix>(normalize_adjacency(adj, closure));
    std::vector<std::size_t> rows(closure.begin(), closure.end());
    Tensor h = ops::gather_rows(features, rows);
    for (std::size_t l = 0; l < config_.layers; ++l) {
      h = ops::spmm(a_hat, ops::matmul(h, weights[relation][l]));
      if (l + 1 < config_.layers) h = ops::relu(h);
    }
    std::vector<std::size_t> local;
    local.reserve(batch.size());
    for (NodeId v : batch) {
      local.push_back(static_cast<std::size_t>(std::lower_bound(closure.begin(), closure.end(), v) - closure.begin()));
    }
    return ops::gather_rows(h, local);
  }

  TopologyConfig config_;
};

}  // namespace ragfuse
