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

#include <cmath>
#include <stdexcept>
#include <string>

#include "ragfuse/ops.hpp"
#include "ragfuse/params.hpp"

namespace ragfuse {

/// Multi-head scaled dot-product self-attention over (B, L, d) inputs.
struct MultiHeadAttention {
  std::size_t dim = 0;
  std::size_t heads = 1;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  struct Output {
    Tensor out;    // (B, L, d)
    Tensor probs;  // (B, heads, L, L), rows sum to one
  };

  static MultiHeadAttention create(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t heads,
                                   Rng& rng) {
    if (heads == 0 || dim % heads != 0) {
      throw std::invalid_argument("attention: dim " + std::to_string(dim) + " not divisible by heads " +
                                  std::to_string(heads));
    }
    MultiHeadAttention m;
    m.dim = dim;
    m.heads = heads;
    m.wq = store.add(prefix + ".wq", init::uniform_weight(dim, dim, rng));
    m.bq = store.add(prefix + ".bq", init::zeros({dim}));
    m.wk = store.add(prefix + ".wk", init::uniform_weight(dim, dim, rng));
    m.bk = store.add(prefix + ".bk", init::zeros({dim}));
    m.wv = store.add(prefix + ".wv", init::uniform_weight(dim, dim, rng));
    m.bv = store.add(prefix + ".bv", init::zeros({dim}));
    m.wo = store.add(prefix + ".wo", init::uniform_weight(dim, dim, rng));
    m.bo = store.add(prefix + ".bo", init::zeros({dim}));
    return m;
  }

  Output forward(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(2) != dim) {
      throw std::invalid_argument("attention: expected (B, L, " + std::to_string(dim) + "), got " +
                                  shape_string(x.shape()));
    }
    const std::size_t b = x.dim(0);
    const std::size_t len = x.dim(1);
    const std::size_t head_dim = dim / heads;
    auto split = [&](const Tensor& t) {
      return ops::permute(ops::reshape(t, {b, len, heads, head_dim}), {0, 2, 1, 3});
    };
    const Tensor q = split(ops::linear(x, wq, bq));
    const Tensor k = split(ops::linear(x, wk, bk));
    const Tensor v = split(ops::linear(x, wv, bv));
    const Tensor scores = ops::scale(ops::bmm(q, k, /*transpose_b=*/true), 1.0 / std::sqrt(static_cast<double>(head_dim)));
    Tensor probs = ops::softmax(scores);
    const Tensor context = ops::reshape(ops::permute(ops::bmm(probs, v), {0, 2, 1, 3}), {b, len, dim});
    return {ops::linear(context, wo, bo), probs};
  }
};

/// Post-norm Transformer encoder layer:
///   x1 = LN(x + Dropout(MHA(x)));  out = LN(x1 + Dropout(FFN(x1)))
/// with FFN = Linear(d, 4d) -> ReLU -> Linear(4d, d).
struct TransformerLayer {
  MultiHeadAttention attention;
  Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;

  static TransformerLayer create(ParamStore& store, const std::string& prefix, std::size_t dim, std::size_t heads,
                                 Rng& rng) {
    TransformerLayer layer;
    layer.attention = MultiHeadAttention::create(store, prefix + ".attn", dim, heads, rng);
    layer.ffn_w1 = store.add(prefix + ".ffn.w1", init::uniform_weight(dim, 4 * dim, rng));
    layer.ffn_b1 = store.add(prefix + ".ffn.b1", init::zeros({4 * dim}));
    layer.ffn_w2 = store.add(prefix + ".ffn.w2", init::uniform_weight(4 * dim, dim, rng));
    layer.ffn_b2 = store.add(prefix + ".ffn.b2", init::zeros({dim}));
    layer.ln1_gamma = store.add(prefix + ".ln1.gamma", init::ones({dim}));
    layer.ln1_beta = store.add(prefix + ".ln1.beta", init::zeros({dim}));
    layer.ln2_gamma = store.add(prefix + ".ln2.gamma", init::ones({dim}));
    layer.ln2_beta = store.add(prefix + ".ln2.beta", init::zeros({dim}));
    return layer;
  }

  Tensor forward(const Tensor& x, double dropout, Rng& rng, bool train) const {
    const Tensor attended = ops::dropout(attention.forward(x).out, dropout, rng, train);
    const Tensor x1 = ops::layer_norm(ops::add(x, attended), ln1_gamma, ln1_beta);
    const Tensor hidden = ops::relu(ops::linear(x1, ffn_w1, ffn_b1));
    const Tensor ffn = ops::dropout(ops::linear(hidden, ffn_w2, ffn_b2), dropout, rng, train);
    return ops::layer_norm(ops::add(x1, ffn), ln2_gamma, ln2_beta);
  }
};

}  // namespace ragfuse
