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

#include <array>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ragfuse/attention.hpp"
#include "ragfuse/ops.hpp"
#include "ragfuse/params.hpp"

namespace ragfuse {

enum class FusionScheme { kAttentionRes, kAttentionNoRes, kConcat, kAdd, kGated };

inline constexpr std::array<std::pair<FusionScheme, std::string_view>, 5> kFusionSchemeNames{{
    {FusionScheme::kAttentionRes, "attention_res"},
    {FusionScheme::kAttentionNoRes, "attention_no_res"},
    {FusionScheme::kConcat, "concat"},
    {FusionScheme::kAdd, "add"},
    {FusionScheme::kGated, "gated"},
}};

inline std::string_view to_string(FusionScheme s) {
  for (auto [scheme, name] : kFusionSchemeNames) {
    if (scheme == s) return name;
  }
  return "unknown";
}

inline FusionScheme parse_fusion_scheme(std::string_view name) {
  for (auto [scheme, n] : kFusionSchemeNames) {
    if (n == name) return scheme;
  }
  throw std::invalid_argument("unknown fusion scheme: " + std::string(name));
}

inline bool uses_attention(FusionScheme s) {
  return s == FusionScheme::kAttentionRes || s == FusionScheme::kAttentionNoRes;
}

/// Flattened width of the fused representation for R relations of width d.
inline std::size_t fused_width(FusionScheme s, std::size_t relations, std::size_t dim) {
  return (s == FusionScheme::kConcat ? 2 : 1) * relations * dim;
}

/// Combines per-relation semantic (B, R, d) and topological (B, R, d)
/// embeddings into one flat vector per node.
class FusionHead {
 public:
  FusionHead() = default;

  FusionHead(FusionScheme scheme, std::size_t relations, std::size_t dim, std::size_t heads, ParamStore& store,
             Rng& rng, const std::string& prefix = "fusion")
      : scheme_(scheme), relations_(relations), dim_(dim) {
    if (uses_attention(scheme)) {
      attention = MultiHeadAttention::create(store, prefix + ".attn", dim, heads, rng);
      output_weight = store.add(prefix + ".output.weight", init::uniform_weight(2 * relations * dim, relations * dim, rng));
      output_bias = store.add(prefix + ".output.bias", init::zeros({relations * dim}));
    } else if (scheme == FusionScheme::kGated) {
      gate_weight = store.add(prefix + ".gate.weight", init::uniform_weight(dim, dim, rng));
      gate_bias = store.add(prefix + ".gate.bias", init::zeros({dim}));
    }
  }

  FusionScheme scheme() const { return scheme_; }
  std::size_t output_width() const { return fused_width(scheme_, relations_, dim_); }

  struct AttentionResult {
    Tensor fused;  // (B, R, d)
    Tensor probs;  // (B, heads, 2R, 2R)
  };

  /// X_seq = [X_gcn^1..X_gcn^R, X_sem^1..X_sem^R]; X̂ = SelfAttention(X_seq);
  /// X_fused = X_sem + Linear(flatten X̂) when with_residual, else Linear(...).
  AttentionResult attention_fuse(const Tensor& x_sem, const Tensor& x_gcn, bool with_residual) const {
    check_inputs(x_sem, x_gcn);
    if (!attention.wq.defined()) throw std::logic_error("attention_fuse on a head without attention parameters");
    const std::size_t b = x_sem.dim(0);
    const std::size_t flat = relations_ * dim_;
    const Tensor seq =
        ops::reshape(ops::concat({ops::reshape(x_gcn, {b, flat}), ops::reshape(x_sem, {b, flat})}), {b, 2 * relations_, dim_});
    auto attended = attention.forward(seq);
    Tensor out = ops::linear(ops::reshape(attended.out, {b, 2 * flat}), output_weight, output_bias);
    if (with_residual) out = ops::add(ops::reshape(x_sem, {b, flat}), out);
    return {ops::reshape(out, {b, relations_, dim_}), attended.probs};
  }

  /// Fused features flattened to (B, output_width()).
  Tensor forward(const Tensor& x_sem, const Tensor& x_gcn) const {
    check_inputs(x_sem, x_gcn);
    const std::size_t b = x_sem.dim(0);
    const std::size_t flat = relations_ * dim_;
    switch (scheme_) {
      case FusionScheme::kAttentionRes:
      case FusionScheme::kAttentionNoRes:
        return ops::reshape(attention_fuse(x_sem, x_gcn, scheme_ == FusionScheme::kAttentionRes).fused, {b, flat});
      case FusionScheme::kConcat: {
        // per-relation [sem_r | gcn_r], then flattened
        const Tensor sem = ops::reshape(x_sem, {b * relations_, dim_});
        const Tensor gcn = ops::reshape(x_gcn, {b * relations_, dim_});
        return ops::reshape(ops::concat({sem, gcn}), {b, 2 * flat});
      }
      case FusionScheme::kAdd:
        return ops::reshape(ops::add(x_sem, x_gcn), {b, flat});
      case FusionScheme::kGated: {
        const Tensor gamma = ops::sigmoid(ops::linear(x_sem, gate_weight, gate_bias));
        const Tensor mixed = ops::add(x_gcn, ops::mul(gamma, ops::sub(x_sem, x_gcn)));
        return ops::reshape(mixed, {b, flat});
      }
    }
    throw std::logic_error("unhandled fusion scheme");
  }

  MultiHeadAttention attention;
  Tensor output_weight, output_bias;
  Tensor gate_weight, gate_bias;

 private:
  void check_inputs(const Tensor& x_sem, const Tensor& x_gcn) const {
    if (x_sem.shape() != x_gcn.shape() || x_sem.rank() != 3 || x_sem.dim(1) != relations_ || x_sem.dim(2) != dim_) {
      throw std::invalid_argument("fusion inputs must both be (B, " + std::to_string(relations_) + ", " +
                                  std::to_string(dim_) + "), got " + shape_string(x_sem.shape()) + " and " +
                                  shape_string(x_gcn.shape()));
    }
  }

  FusionScheme scheme_ = FusionScheme::kAttentionRes;
  std::size_t relations_ = 0;
  std::size_t dim_ = 0;
};

/// MLP in -> hidden -> 1 with ReLU; one logit per row.
class Classifier {
 public:
  Classifier() = default;

  Classifier(std::size_t in_width, std::size_t hidden, ParamStore& store, Rng& rng,
             const std::string& prefix = "classifier")
      : in_width_(in_width) {
    w1 = store.add(prefix + ".w1", init::uniform_weight(in_width, hidden, rng));
    b1 = store.add(prefix + ".b1", init::zeros({hidden}));
    w2 = store.add(prefix + ".w2", init::uniform_weight(hidden, 1, rng));
    b2 = store.add(prefix + ".b2", init::zeros({1}));
  }

  std::size_t in_width() const { return in_width_; }

  /// (B, in_width) -> (B) logits.
  Tensor logits(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != in_width_) {
      throw std::invalid_argument("classifier expects (B, " + std::to_string(in_width_) + "), got " +
                                  shape_string(x.shape()));
    }
    const Tensor hidden = ops::relu(ops::linear(x, w1, b1));
    return ops::reshape(ops::linear(hidden, w2, b2), {x.dim(0)});
  }

  struct Result {
    std::vector<double> probabilities;
    Tensor loss;
  };

  Result classify_and_loss(const Tensor& x, std::span<const int> labels) const {
    const Tensor z = logits(x);
    Result r;
    r.probabilities.reserve(z.size());
    for (double v : z.data()) r.probabilities.push_back(ops::sigmoid_value(v));
    r.loss = ops::bce_with_logits(z, labels);
    return r;
  }

  Tensor w1, b1, w2, b2;

 private:
  std::size_t in_width_ = 0;
};

}  // namespace ragfuse
