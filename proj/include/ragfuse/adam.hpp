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
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "ragfuse/params.hpp"

namespace ragfuse {

/// Adam moments with classical L2 weight decay (grad += wd * param before the
/// moment update).
struct AdamState {
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update in place. Gradients are read, not cleared.
inline void adam_step(ParamStore& params, AdamState& state) {
  const auto& entries = params.entries();
  if (state.first_moment.empty() && state.step == 0) {
    for (const auto& e : entries) {
      state.first_moment.emplace_back(e.tensor.size(), 0.0);
      state.second_moment.emplace_back(e.tensor.size(), 0.0);
    }
  }
  if (state.first_moment.size() != entries.size() || state.second_moment.size() != entries.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter count");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < entries.size(); ++p) {
    Tensor w = entries[p].tensor;
    auto& m = state.first_moment[p];
    auto& v = state.second_moment[p];
    if (m.size() != w.size() || v.size() != w.size()) {
      throw std::invalid_argument("adam_step: shape drift at parameter " + entries[p].name);
    }
    auto values = w.data();
    const bool has_grad = w.has_grad();
    std::span<const double> grad = has_grad ? std::span<const double>(w.grad()) : std::span<const double>();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = (has_grad ? grad[i] : 0.0) + state.weight_decay * values[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      values[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace ragfuse
