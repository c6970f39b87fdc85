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

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ragfuse {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {
struct TensorNode {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;

  std::vector<double>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    return grad;
  }
};
}  // namespace detail

/// Dense array of doubles with an optional gradient accumulator.
///
/// Tensor is a shared handle: copies alias the same storage. Parameters are
/// long-lived tensors with requires_grad set; intermediates are created by the
/// primitives in ops.hpp and are recorded on the active Tape.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : node_(std::make_shared<detail::TensorNode>()) {
    node_->value.assign(shape_size(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::TensorNode>()) {
    if (values.size() != shape_size(shape)) {
      throw std::invalid_argument("tensor data length " + std::to_string(values.size()) +
                                  " does not match shape " + shape_string(shape));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor scalar(double v, bool requires_grad = false) { return Tensor(Shape{}, {v}, requires_grad); }

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t size() const { return node_->value.size(); }

  /// Columns of the row-major matrix view (last dimension).
  std::size_t cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }
  /// Rows of the row-major matrix view (product of all but the last dimension).
  std::size_t rows() const { return cols() == 0 ? 0 : size() / cols(); }

  std::span<double> data() { return node_->value; }
  std::span<const double> data() const { return node_->value; }
  double item() const {
    if (size() != 1) throw std::logic_error("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }
  double& operator[](std::size_t i) { return node_->value[i]; }
  double operator[](std::size_t i) const { return node_->value[i]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Gradient accumulator; materialized as zeros on first access.
  std::span<double> grad() { return node_->grad_buffer(); }
  std::span<const double> grad() const { return node_->grad_buffer(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// Deep copy of values (no gradient, no tape history).
  Tensor clone() const { return Tensor(shape(), std::vector<double>(data().begin(), data().end())); }

  /// Same storage, new handle identity check.
  bool same_as(const Tensor& other) const { return node_ == other.node_; }

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

/// Ordered record of primitive applications for reverse-mode differentiation.
///
/// Primitives append to the tape that is active on the current thread (see
/// TapeGuard). Records are appended after their inputs exist, so the record
/// list is already in topological order and backward() walks it in reverse,
/// visiting each record once. A tape is single-use: after backward() it must be
/// cleared before recording again.
class Tape {
 public:
  struct Record {
    std::shared_ptr<detail::TensorNode> output;
    std::function<void(std::span<const double> grad_out)> backward;
  };

  void record(const Tensor& output, std::function<void(std::span<const double>)> backward) {
    if (consumed_) throw std::logic_error("tape already consumed; clear() it before recording");
    records_.push_back({output.node(), std::move(backward)});
  }

  std::size_t size() const { return records_.size(); }
  bool consumed() const { return consumed_; }

  void clear() {
    records_.clear();
    consumed_ = false;
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable tensor with
  /// requires_grad. Parameter gradients accumulate additively.
  void backward(Tensor loss) {
    if (consumed_) throw std::logic_error("tape already consumed");
    if (loss.size() != 1) {
      throw std::invalid_argument("backward expects a scalar loss, got shape " + shape_string(loss.shape()));
    }
    consumed_ = true;
    if (!loss.requires_grad()) return;
    loss.grad()[0] += 1.0;
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      auto& out = *it->output;
      if (out.grad.empty()) continue;
      it->backward(out.grad);
    }
    // Release intermediates; parameters keep their accumulated gradients.
    records_.clear();
  }

 private:
  std::vector<Record> records_;
  bool consumed_ = false;
};

namespace detail {
inline Tape*& active_tape() {
  thread_local Tape* tape = nullptr;
  return tape;
}
}  // namespace detail

/// Makes `tape` the recording target for the current thread for the guard's
/// lifetime. Without an active tape primitives compute values only.
class TapeGuard {
 public:
  explicit TapeGuard(Tape& tape) : previous_(detail::active_tape()) { detail::active_tape() = &tape; }
  ~TapeGuard() { detail::active_tape() = previous_; }
  TapeGuard(const TapeGuard&) = delete;
  TapeGuard& operator=(const TapeGuard&) = delete;

 private:
  Tape* previous_;
};

/// Suspends recording (evaluation mode).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::active_tape()) { detail::active_tape() = nullptr; }
  ~NoGradGuard() { detail::active_tape() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* previous_;
};

inline Tape* active_tape() { return detail::active_tape(); }

/// Runs backward on the thread's active tape.
inline void backward(Tensor loss) {
  Tape* tape = active_tape();
  if (tape == nullptr) throw std::logic_error("backward called without an active tape");
  tape->backward(std::move(loss));
}

}  // namespace ragfuse
