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
#include <functional>
#include <stdexcept>
#include <vector>

#include "ragfuse/tensor.hpp"

namespace ragfuse {

struct GradCheckEntry {
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
  bool flagged = false;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
  std::size_t flagged = 0;

  bool passed() const { return flagged == 0; }
};

/// Denominator floor for the relative error, so that gradients that are zero
/// analytically compare on an absolute scale.
inline constexpr double kGradCheckFloor = 1e-5;

/// Compares tape gradients of a scalar function against central finite
/// differences for every element of `inputs`. `f` must rebuild its graph from
/// the inputs on each call and must be deterministic.
inline GradCheckReport grad_check(const std::function<Tensor()>& f, std::vector<Tensor> inputs,
                                  double step = 1e-5, double tolerance = 1e-4) {
  double base = 0.0;
  {
    NoGradGuard no_grad;
    base = f().item();
    if (f().item() != base) throw std::invalid_argument("grad_check: function is not deterministic");
  }

  std::vector<std::vector<double>> analytic;
  {
    for (auto& t : inputs) {
      t.set_requires_grad(true);
      t.zero_grad();
    }
    Tape tape;
    TapeGuard guard(tape);
    Tensor loss = f();
    tape.backward(loss);
    for (auto& t : inputs) analytic.emplace_back(t.grad().begin(), t.grad().end());
  }

  GradCheckReport report;
  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto values = inputs[k].data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = f().item();
      values[i] = saved - step;
      const double minus = f().item();
      values[i] = saved;
      GradCheckEntry e;
      e.input = k;
      e.index = i;
      e.analytic = analytic[k][i];
      e.numeric = (plus - minus) / (2.0 * step);
      e.rel_error = std::abs(e.analytic - e.numeric) /
                    std::max({std::abs(e.analytic), std::abs(e.numeric), kGradCheckFloor});
      e.flagged = e.rel_error > tolerance;
      report.max_rel_error = std::max(report.max_rel_error, e.rel_error);
      report.flagged += e.flagged ? 1 : 0;
      report.entries.push_back(e);
    }
  }
  return report;
}

}  // namespace ragfuse
