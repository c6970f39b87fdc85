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
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragfuse/attention.hpp"
#include "ragfuse/graph.hpp"
#include "ragfuse/ops.hpp"
#include "ragfuse/parallel.hpp"
#include "ragfuse/params.hpp"

namespace ragfuse {

/// Group vocabulary for neighbor tokens.
enum class Group : std::size_t { kBenignTrain = 0, kFraudTrain = 1, kUnknown = 2 };
inline constexpr std::size_t kNumGroups = 3;

/// Per-target token sequences. Each relation contributes one target token
/// followed by one token per (hop, group) bucket, so L = R * (1 + 3 * max_hop).
/// Bucket tokens hold the mean raw feature vector of the bucket's members.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t length = 0;
  std::size_t feature_dim = 0;
  std::size_t num_relations = 0;
  std::size_t max_hop = 0;

  std::vector<NodeId> targets;
  std::vector<double> tokens;  // batch * length * feature_dim
  std::vector<std::size_t> hop_ids;
  std::vector<std::size_t> group_ids;
  std::vector<std::size_t> relation_ids;
  std::vector<std::uint8_t> presence_mask;
  std::vector<std::size_t> target_positions;  // one per relation, same for every row

  static std::size_t tokens_per_relation(std::size_t max_hop) { return 1 + kNumGroups * max_hop; }
  static std::size_t sequence_length(std::size_t relations, std::size_t max_hop) {
    return relations * tokens_per_relation(max_hop);
  }
  static std::size_t position(std::size_t relation, std::size_t hop, std::size_t group, std::size_t max_hop) {
    const std::size_t base = relation * tokens_per_relation(max_hop);
    return hop == 0 ? base : base + 1 + (hop - 1) * kNumGroups + group;
  }

  std::span<const double> token(std::size_t row, std::size_t pos) const {
    return {tokens.data() + (row * length + pos) * feature_dim, feature_dim};
  }

  Tensor token_tensor() const { return Tensor(Shape{batch, length, feature_dim}, tokens); }

  /// Subset of rows, in the given order.
  SequenceBatch select(std::span<const std::size_t> rows) const {
    SequenceBatch out;
    out.batch = rows.size();
    out.length = length;
    out.feature_dim = feature_dim;
    out.num_relations = num_relations;
    out.max_hop = max_hop;
    out.target_positions = target_positions;
    const std::size_t row_tokens = length * feature_dim;
    out.tokens.reserve(rows.size() * row_tokens);
    for (std::size_t r : rows) {
      if (r >= batch) throw std::out_of_range("SequenceBatch::select: row out of range");
      out.targets.push_back(targets[r]);
      out.tokens.insert(out.tokens.end(), tokens.begin() + r * row_tokens, tokens.begin() + (r + 1) * row_tokens);
      auto copy = [&](auto& dst, const auto& src) {
        dst.insert(dst.end(), src.begin() + r * length, src.begin() + (r + 1) * length);
      };
      copy(out.hop_ids, hop_ids);
      copy(out.group_ids, group_ids);
      copy(out.relation_ids, relation_ids);
      copy(out.presence_mask, presence_mask);
    }
    return out;
  }
};

/// Builds per-target sequences. A neighbor's group is its label when it is in
/// `train_ids` (and is not the target itself), otherwise kUnknown. Target
/// tokens always carry hop 0 and kUnknown, so a target's own label never
/// enters its sequence. `train_ids` must be sorted.
inline SequenceBatch build_sequences(const MultiRelationGraph& graph, std::span<const NodeId> targets,
                                     std::span<const NodeId> train_ids, std::size_t max_hop) {
  if (max_hop < 1) throw std::invalid_argument("max_hop must be >= 1");
  if (!std::is_sorted(train_ids.begin(), train_ids.end())) throw std::invalid_argument("train_ids must be sorted");
  const std::size_t n = graph.num_nodes();
  const std::size_t relations = graph.num_relations();
  const std::size_t k = graph.feature_dim();
  for (NodeId t : targets) {
    if (t >= n) throw std::out_of_range("target " + std::to_string(t) + " out of range");
  }
  std::vector<std::uint8_t> in_train(n, 0);
  for (NodeId i : train_ids) {
    if (i >= n) throw std::out_of_range("train id out of range");
    in_train[i] = 1;
  }

  SequenceBatch batch;
  batch.batch = targets.size();
  batch.num_relations = relations;
  batch.max_hop = max_hop;
  batch.feature_dim = k;
  batch.length = SequenceBatch::sequence_length(relations, max_hop);
  batch.targets.assign(targets.begin(), targets.end());
  const std::size_t len = batch.length;
  batch.tokens.assign(targets.size() * len * k, 0.0);
  batch.hop_ids.resize(targets.size() * len);
  batch.group_ids.resize(targets.size() * len);
  batch.relation_ids.resize(targets.size() * len);
  batch.presence_mask.assign(targets.size() * len, 0);
  for (std::size_t r = 0; r < relations; ++r) {
    batch.target_positions.push_back(SequenceBatch::position(r, 0, 0, max_hop));
  }

  const Matrix& features = graph.features();
  const auto& labels = graph.labels();
  parallel_for(targets.size(), 64, [&](std::size_t begin, std::size_t end) {
    std::vector<std::size_t> counts(kNumGroups);
    for (std::size_t b = begin; b < end; ++b) {
      const NodeId target = targets[b];
      const std::size_t row = b * len;
      for (std::size_t r = 0; r < relations; ++r) {
        const std::size_t tpos = SequenceBatch::position(r, 0, 0, max_hop);
        batch.hop_ids[row + tpos] = 0;
        batch.group_ids[row + tpos] = static_cast<std::size_t>(Group::kUnknown);
        batch.relation_ids[row + tpos] = r;
        batch.presence_mask[row + tpos] = 1;
        std::copy_n(features.row(target).data(), k, batch.tokens.data() + (row + tpos) * k);

        const auto hops = khop_neighbors(graph, target, r, max_hop);
        for (std::size_t h = 1; h <= max_hop; ++h) {
          std::fill(counts.begin(), counts.end(), 0);
          for (std::size_t g = 0; g < kNumGroups; ++g) {
            const std::size_t pos = SequenceBatch::position(r, h, g, max_hop);
            batch.hop_ids[row + pos] = h;
            batch.group_ids[row + pos] = g;
            batch.relation_ids[row + pos] = r;
          }
          for (NodeId v : hops[h - 1]) {
            if (v == target) continue;
            const std::size_t g = in_train[v] ? static_cast<std::size_t>(labels[v])
                                              : static_cast<std::size_t>(Group::kUnknown);
            const std::size_t pos = SequenceBatch::position(r, h, g, max_hop);
            double* dst = batch.tokens.data() + (row + pos) * k;
            const auto src = features.row(v);
            for (std::size_t c = 0; c < k; ++c) dst[c] += src[c];
            ++counts[g];
          }
          for (std::size_t g = 0; g < kNumGroups; ++g) {
            if (counts[g] == 0) continue;
            const std::size_t pos = SequenceBatch::position(r, h, g, max_hop);
            double* dst = batch.tokens.data() + (row + pos) * k;
            for (std::size_t c = 0; c < k; ++c) dst[c] /= static_cast<double>(counts[g]);
            batch.presence_mask[row + pos] = 1;
          }
        }
      }
    }
  });
  return batch;
}

struct SemanticConfig {
  std::size_t feature_dim = 0;
  std::size_t num_relations = 1;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t layers = 2;
  std::size_t max_hop = 2;
  double dropout = 0.1;
};

/// Transformer over relation token sequences with cross-relation aggregation
/// between consecutive layers.
class SemanticEncoder {
 public:
  SemanticEncoder() = default;

  SemanticEncoder(const SemanticConfig& config, ParamStore& store, Rng& rng, const std::string& prefix = "semantic")
      : config_(config) {
    if (config.layers < 1) throw std::invalid_argument("semantic encoder needs at least one Transformer layer");
    const std::size_t d = config.dim;
    input_weight = store.add(prefix + ".input.weight", init::uniform_weight(config.feature_dim, d, rng));
    input_bias = store.add(prefix + ".input.bias", init::zeros({d}));
    hop_embedding = store.add(prefix + ".hop_embedding", init::embedding_table(config.max_hop + 1, d, rng));
    group_embedding = store.add(prefix + ".group_embedding", init::embedding_table(kNumGroups, d, rng));
    relation_embedding = store.add(prefix + ".relation_embedding", init::embedding_table(config.num_relations, d, rng));
    for (std::size_t l = 0; l < config.layers; ++l) {
      layers.push_back(TransformerLayer::create(store, prefix + ".layer" + std::to_string(l), d, config.heads, rng));
      if (l + 1 < config.layers) {
        aggregators.push_back(store.add(prefix + ".aggregator" + std::to_string(l),
                                        init::uniform_weight(config.num_relations * d, d, rng)));
      }
    }
  }

  const SemanticConfig& config() const { return config_; }

  /// proj(X_n) + E_g[group] + E_h[hop] + E_r[relation] -> (B, L, d).
  Tensor embed(const SequenceBatch& batch) const {
    check_batch(batch);
    const Tensor tokens = batch.token_tensor();
    Tensor x = ops::linear(ops::reshape(tokens, {batch.batch * batch.length, batch.feature_dim}), input_weight,
                           input_bias);
    x = ops::add(x, ops::embedding(group_embedding, batch.group_ids));
    x = ops::add(x, ops::embedding(hop_embedding, batch.hop_ids));
    x = ops::add(x, ops::embedding(relation_embedding, batch.relation_ids));
    return ops::reshape(x, {batch.batch, batch.length, config_.dim});
  }

  /// Replaces every relation's target token with W * concat(target tokens).
  static Tensor cross_relation_aggregate(const Tensor& x, const SequenceBatch& batch, const Tensor& weight) {
    const std::size_t b = x.dim(0);
    const std::size_t len = x.dim(1);
    const std::size_t d = x.dim(2);
    const std::size_t relations = batch.target_positions.size();
    if (weight.rank() != 2 || weight.dim(0) != relations * d || weight.dim(1) != d) {
      throw std::invalid_argument("aggregator weight must be (R*d, d)");
    }
    std::vector<Tensor> parts;
    std::vector<std::int64_t> source(b * len, -1);
    for (std::size_t r = 0; r < relations; ++r) {
      std::vector<std::size_t> rows(b);
      for (std::size_t i = 0; i < b; ++i) {
        rows[i] = i * len + batch.target_positions[r];
        source[rows[i]] = static_cast<std::int64_t>(i);
      }
      parts.push_back(ops::gather_rows(x, rows));
    }
    const Tensor fused = ops::matmul(ops::concat(parts), weight);
    return ops::replace_rows(x, fused, source);
  }

  /// Target-position outputs per relation -> (B, R, d).
  static Tensor read_targets(const Tensor& x, const SequenceBatch& batch) {
    const std::size_t b = x.dim(0);
    const std::size_t len = x.dim(1);
    const std::size_t relations = batch.target_positions.size();
    std::vector<std::size_t> rows;
    rows.reserve(b * relations);
    for (std::size_t i = 0; i < b; ++i) {
      for (std::size_t r = 0; r < relations; ++r) rows.push_back(i * len + batch.target_positions[r]);
    }
    return ops::reshape(ops::gather_rows(x, rows), {b, relations, x.dim(2)});
  }

  Tensor forward(const SequenceBatch& batch, bool train, Rng& rng) const {
    Tensor x = embed(batch);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      x = layers[l].forward(x, config_.dropout, rng, train);
      if (l < aggregators.size()) x = cross_relation_aggregate(x, batch, aggregators[l]);
    }
    return read_targets(x, batch);
  }

  Tensor input_weight, input_bias;
  Tensor hop_embedding, group_embedding, relation_embedding;
  std::vector<TransformerLayer> layers;
  std::vector<Tensor> aggregators;

 private:
  void check_batch(const SequenceBatch& batch) const {
    if (batch.feature_dim != config_.feature_dim) {
      throw std::invalid_argument("sequence feature dim " + std::to_string(batch.feature_dim) +
                                  " does not match input projection " + std::to_string(config_.feature_dim));
    }
    if (batch.num_relations != config_.num_relations || batch.max_hop != config_.max_hop) {
      throw std::invalid_argument("sequence batch relation/hop layout does not match encoder");
    }
  }

  SemanticConfig config_;
};

}  // namespace ragfuse
