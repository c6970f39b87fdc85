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
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ragfuse/random.hpp"
#include "ragfuse/tensor.hpp"

namespace ragfuse {

/// Named, insertion-ordered collection of learnable tensors.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
  };

  Tensor add(std::string name, Tensor tensor) {
    for (const auto& e : entries_) {
      if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
    }
    tensor.set_requires_grad(true);
    entries_.push_back({std::move(name), tensor});
    return tensor;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  Tensor find(const std::string& name) const {
    for (const auto& e : entries_) {
      if (e.name == name) return e.tensor;
    }
    throw std::out_of_range("no parameter named " + name);
  }

  /// Total scalar count of all parameters whose name starts with prefix.
  std::size_t count(const std::string& prefix = "") const {
    std::size_t n = 0;
    for (const auto& e : entries_) {
      if (e.name.compare(0, prefix.size(), prefix) == 0) n += e.tensor.size();
    }
    return n;
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  std::vector<std::vector<double>> snapshot() const {
    std::vector<std::vector<double>> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
    return out;
  }

  void restore(const std::vector<std::vector<double>>& values) {
    if (values.size() != entries_.size()) throw std::invalid_argument("snapshot does not match parameter set");
    for (std::size_t i = 0; i < values.size(); ++i) {
      auto dst = entries_[i].tensor.data();
      if (values[i].size() != dst.size()) throw std::invalid_argument("snapshot shape drift at " + entries_[i].name);
      std::copy(values[i].begin(), values[i].end(), dst.begin());
    }
  }

 private:
  std::vector<Entry> entries_;
};

namespace init {

/// Weight matrix (fan_in, fan_out) ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Tensor uniform_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor w(Shape{fan_in, fan_out});
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : w.data()) v = rng.uniform(-bound, bound);
  return w;
}

inline Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

inline Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }

/// Embedding table ~ N(0, 0.02^2).
inline Tensor embedding_table(std::size_t vocab, std::size_t dim, Rng& rng) {
  Tensor t(Shape{vocab, dim});
  for (auto& v : t.data()) v = rng.normal(0.0, 0.02);
  return t;
}

}  // namespace init

}  // namespace ragfuse
