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

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ragfuse/fusion.hpp"
#include "ragfuse/graph.hpp"
#include "ragfuse/params.hpp"
#include "ragfuse/semantic.hpp"
#include "ragfuse/topology.hpp"

namespace ragfuse {

enum class EncoderMode { kFull, kSemanticOnly, kTopologyOnly };

/// A model variant: which encoders exist and, for kFull, how they are fused.
/// Names: "full" (= attention_res), "semantic_only", "topology_only", or any
/// fusion scheme name.
struct Variant {
  EncoderMode mode = EncoderMode::kFull;
  FusionScheme fusion = FusionScheme::kAttentionRes;

  static Variant parse(std::string_view name) {
    if (name == "full") return {EncoderMode::kFull, FusionScheme::kAttentionRes};
    if (name == "semantic_only") return {EncoderMode::kSemanticOnly, FusionScheme::kAttentionRes};
    if (name == "topology_only") return {EncoderMode::kTopologyOnly, FusionScheme::kAttentionRes};
    return {EncoderMode::kFull, parse_fusion_scheme(name)};
  }

  std::string name() const {
    switch (mode) {
      case EncoderMode::kSemanticOnly: return "semantic_only";
      case EncoderMode::kTopologyOnly: return "topology_only";
      case EncoderMode::kFull: break;
    }
    return std::string(to_string(fusion));
  }

  bool has_semantic() const { return mode != EncoderMode::kTopologyOnly; }
  bool has_topology() const { return mode != EncoderMode::kSemanticOnly; }
};

struct ModelConfig {
  Variant variant;
  std::size_t feature_dim = 0;
  std::size_t num_relations = 1;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t transformer_layers = 2;
  std::size_t gcn_layers = 2;
  std::size_t max_hop = 2;
  double dropout = 0.1;
  PropagationMode propagation = PropagationMode::kFullGraph;
  std::uint64_t seed = 0;
};

/// Semantic encoder + topology encoder + fusion head + classifier. Encoder-only
/// variants never create the unused encoder's parameters. Each component is
/// initialized from its own seeded stream, so a component's initial weights do
/// not depend on which other components exist.
class Model {
 public:
  explicit Model(const ModelConfig& config) : config_(config) {
    Rng semantic_rng = Rng(Rng::mix(config.seed ^ 0x5e3a)).fork(1);
    Rng topology_rng = Rng(Rng::mix(config.seed ^ 0x7090)).fork(2);
    Rng fusion_rng = Rng(Rng::mix(config.seed ^ 0xf05e)).fork(3);
    Rng classifier_rng = Rng(Rng::mix(config.seed ^ 0xc1a5)).fork(4);
    const Variant v = config.variant;
    if (v.has_semantic()) {
      SemanticConfig sc;
      sc.feature_dim = config.feature_dim;
      sc.num_relations = config.num_relations;
      sc.dim = config.dim;
      sc.heads = config.heads;
      sc.layers = config.transformer_layers;
      sc.max_hop = config.max_hop;
      sc.dropout = config.dropout;
      semantic_.emplace(sc, params_, semantic_rng);
    }
    if (v.has_topology()) {
      TopologyConfig tc;
      tc.feature_dim = config.feature_dim;
      tc.num_relations = config.num_relations;
      tc.dim = config.dim;
      tc.layers = config.gcn_layers;
      tc.mode = config.propagation;
      topology_.emplace(tc, params_, topology_rng);
    }
    std::size_t width = config.num_relations * config.dim;
    if (v.mode == EncoderMode::kFull) {
      fusion_.emplace(v.fusion, config.num_relations, config.dim, config.heads, params_, fusion_rng);
      width = fusion_->output_width();
    }
    classifier_ = Classifier(width, config.dim, params_, classifier_rng);
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  const std::optional<SemanticEncoder>& semantic() const { return semantic_; }
  const std::optional<TopologyEncoder>& topology() const { return topology_; }
  const std::optional<FusionHead>& fusion() const { return fusion_; }
  const Classifier& classifier() const { return classifier_; }

  /// (B, R, d) semantic embeddings, or an undefined tensor if absent.
  Tensor semantic_embeddings(const SequenceBatch& batch, bool train, Rng& rng) const {
    if (!semantic_) return {};
    return semantic_->forward(batch, train, rng);
  }

  /// (B, R, d) topological embeddings, or an undefined tensor if absent.
  Tensor topology_embeddings(const MultiRelationGraph& graph, const Tensor& features,
                             std::span<const NodeId> nodes) const {
    if (!topology_) return {};
    return topology_->forward(graph, features, nodes);
  }

  /// Flat classifier input for the variant -> (B, width).
  Tensor combine(const Tensor& x_sem, const Tensor& x_gcn) const {
    switch (config_.variant.mode) {
      case EncoderMode::kSemanticOnly:
        return ops::reshape(x_sem, {x_sem.dim(0), x_sem.dim(1) * x_sem.dim(2)});
      case EncoderMode::kTopologyOnly:
        return ops::reshape(x_gcn, {x_gcn.dim(0), x_gcn.dim(1) * x_gcn.dim(2)});
      case EncoderMode::kFull:
        break;
    }
    return fusion_->forward(x_sem, x_gcn);
  }

  Tensor logits(const Tensor& x_sem, const Tensor& x_gcn) const { return classifier_.logits(combine(x_sem, x_gcn)); }

  /// Parameter counts per component.
  std::size_t semantic_parameter_count() const { return params_.count("semantic."); }
  std::size_t topology_parameter_count() const { return params_.count("topology."); }
  std::size_t fusion_parameter_count() const { return params_.count("fusion."); }
  std::size_t classifier_parameter_count() const { return params_.count("classifier."); }

 private:
  ModelConfig config_;
  ParamStore params_;
  std::optional<SemanticEncoder> semantic_;
  std::optional<TopologyEncoder> topology_;
  std::optional<FusionHead> fusion_;
  Classifier classifier_;
};

}  // namespace ragfuse
