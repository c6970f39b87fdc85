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

// Differentiable primitives. Each function computes its forward value and,
// when a tape is active and some input requires a gradient, records a
// backward rule that accumulates into the inputs' gradient buffers.
//
// Tensors are treated through a row-major "matrix view": the last dimension is
// the column count and all leading dimensions are flattened into rows.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragfuse/matrix.hpp"
#include "ragfuse/random.hpp"
#include "ragfuse/tensor.hpp"

namespace ragfuse::ops {

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

inline ConstMap cmap(std::span<const double> s, std::size_t r, std::size_t c) {
  return ConstMap(s.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
inline MutMap mmap(std::span<double> s, std::size_t r, std::size_t c) {
  return MutMap(s.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

/// Active tape if any input needs a gradient, else nullptr.
inline Tape* recording(std::initializer_list<const Tensor*> inputs) {
  Tape* tape = active_tape();
  if (tape == nullptr) return nullptr;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return tape;
  }
  return nullptr;
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                                shape_string(b.shape()));
  }
}

using NodePtr = std::shared_ptr<ragfuse::detail::TensorNode>;

template <typename Fn>
void unary_record(Tape* tape, const Tensor& x, Tensor& out, Fn&& fn) {
  out.set_requires_grad(true);
  tape->record(out, [xn = x.node(), fn = std::forward<Fn>(fn)](std::span<const double> g) {
    if (xn->requires_grad) fn(g, std::span<double>(xn->grad_buffer()));
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  if (Tape* tape = detail::recording({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [an = a.node(), bn = b.node()](std::span<const double> g) {
      for (auto* n : {an.get(), bn.get()}) {
        if (!n->requires_grad) continue;
        auto& gx = n->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
    });
  }
  return out;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  if (Tape* tape = detail::recording({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [an = a.node(), bn = b.node()](std::span<const double> g) {
      if (an->requires_grad) {
        auto& gx = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& gy = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gy[i] -= g[i];
      }
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * y[i];
  if (Tape* tape = detail::recording({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [an = a.node(), bn = b.node()](std::span<const double> g) {
      if (an->requires_grad) {
        auto& gx = an->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * bn->value[i];
      }
      if (bn->requires_grad) {
        auto& gy = bn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i] * an->value[i];
      }
    });
  }
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  Tensor out(a.shape());
  auto o = out.data();
  auto x = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = c * x[i];
  if (Tape* tape = detail::recording({&a})) {
    detail::unary_record(tape, a, out, [c](std::span<const double> g, std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
    });
  }
  return out;
}

/// x + bias, bias broadcast over the rows of x's matrix view.
inline Tensor add_row(const Tensor& x, const Tensor& bias) {
  if (bias.size() != x.cols()) {
    throw std::invalid_argument("add_row: bias length " + std::to_string(bias.size()) + " != columns " +
                                std::to_string(x.cols()));
  }
  Tensor out(x.shape());
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  auto o = out.data();
  auto xv = x.data();
  auto bv = bias.data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) o[i * cols + j] = xv[i * cols + j] + bv[j];
  }
  if (Tape* tape = detail::recording({&x, &bias})) {
    out.set_requires_grad(true);
    tape->record(out, [xn = x.node(), bn = bias.node(), rows, cols](std::span<const double> g) {
      if (xn->requires_grad) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) gb[j] += g[i * cols + j];
        }
      }
    });
  }
  return out;
}

inline Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.data();
  auto v = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] < 0.0 ? 0.0 : v[i];  // NaN passes through
  if (Tape* tape = detail::recording({&x})) {
    detail::unary_record(tape, x, out, [xn = x.node()](std::span<const double> g, std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (xn->value[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

inline double sigmoid_value(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  Tensor out(x.shape());
  auto o = out.data();
  auto v = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = sigmoid_value(v[i]);
  if (Tape* tape = detail::recording({&x})) {
    detail::unary_record(tape, x, out, [on = out.node()](std::span<const double> g, std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = on->value[i];
        gx[i] += g[i] * s * (1.0 - s);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra

/// x (.., k) times w (k, n) -> (.., n).
inline Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2) throw std::invalid_argument("matmul: right operand must be rank 2");
  if (x.rank() < 1 || x.cols() != w.dim(0)) {
    throw std::invalid_argument("matmul: dimension mismatch " + shape_string(x.shape()) + " x " +
                                shape_string(w.shape()));
  }
  const std::size_t m = x.rows();
  const std::size_t k = w.dim(0);
  const std::size_t n = w.dim(1);
  Shape shape = x.shape();
  shape.back() = n;
  Tensor out(shape);
  detail::mmap(out.data(), m, n).noalias() = detail::cmap(x.data(), m, k) * detail::cmap(w.data(), k, n);
  if (Tape* tape = detail::recording({&x, &w})) {
    out.set_requires_grad(true);
    tape->record(out, [xn = x.node(), wn = w.node(), m, k, n](std::span<const double> g) {
      auto gm = detail::cmap(g, m, n);
      if (xn->requires_grad) {
        detail::mmap(xn->grad_buffer(), m, k).noalias() += gm * detail::cmap(wn->value, k, n).transpose();
      }
      if (wn->requires_grad) {
        detail::mmap(wn->grad_buffer(), k, n).noalias() += detail::cmap(xn->value, m, k).transpose() * gm;
      }
    });
  }
  return out;
}

/// Batched product over matching leading dimensions:
/// a (.., m, k) * b (.., k, n), or b (.., n, k) transposed when transpose_b.
inline Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false) {
  if (a.rank() < 3 || b.rank() != a.rank()) throw std::invalid_argument("bmm: operands must share rank >= 3");
  const std::size_t r = a.rank();
  for (std::size_t i = 0; i + 2 < r; ++i) {
    if (a.dim(i) != b.dim(i)) throw std::invalid_argument("bmm: batch dimension mismatch");
  }
  const std::size_t m = a.dim(r - 2);
  const std::size_t k = a.dim(r - 1);
  const std::size_t n = transpose_b ? b.dim(r - 2) : b.dim(r - 1);
  if ((transpose_b ? b.dim(r - 1) : b.dim(r - 2)) != k) {
    throw std::invalid_argument("bmm: inner dimension mismatch " + shape_string(a.shape()) + " x " +
                                shape_string(b.shape()));
  }
  const std::size_t batch = a.size() / (m * k);
  Shape shape = a.shape();
  shape[r - 1] = n;
  Tensor out(shape);
  auto av = a.data();
  auto bv = b.data();
  auto ov = out.data();
  for (std::size_t t = 0; t < batch; ++t) {
    auto am = detail::cmap(av.subspan(t * m * k, m * k), m, k);
    auto om = detail::mmap(ov.subspan(t * m * n, m * n), m, n);
    if (transpose_b) {
      om.noalias() = am.lazyProduct(detail::cmap(bv.subspan(t * n * k, n * k), n, k).transpose());
    } else {
      om.noalias() = am.lazyProduct(detail::cmap(bv.subspan(t * k * n, k * n), k, n));
    }
  }
  if (Tape* tape = detail::recording({&a, &b})) {
    out.set_requires_grad(true);
    tape->record(out, [an = a.node(), bn = b.node(), m, k, n, batch, transpose_b](std::span<const double> g) {
      std::span<const double> av(an->value);
      std::span<const double> bv(bn->value);
      for (std::size_t t = 0; t < batch; ++t) {
        auto gm = detail::cmap(g.subspan(t * m * n, m * n), m, n);
        auto am = detail::cmap(av.subspan(t * m * k, m * k), m, k);
        if (transpose_b) {
          auto bm = detail::cmap(bv.subspan(t * n * k, n * k), n, k);
          if (an->requires_grad) {
            detail::mmap(std::span<double>(an->grad_buffer()).subspan(t * m * k, m * k), m, k).noalias() +=
                gm.lazyProduct(bm);
          }
          if (bn->requires_grad) {
            detail::mmap(std::span<double>(bn->grad_buffer()).subspan(t * n * k, n * k), n, k).noalias() +=
                gm.transpose().lazyProduct(am);
          }
        } else {
          auto bm = detail::cmap(bv.subspan(t * k * n, k * n), k, n);
          if (an->requires_grad) {
            detail::mmap(std::span<double>(an->grad_buffer()).subspan(t * m * k, m * k), m, k).noalias() +=
                gm.lazyProduct(bm.transpose());
          }
          if (bn->requires_grad) {
            detail::mmap(std::span<double>(bn->grad_buffer()).subspan(t * k * n, k * n), k, n).noalias() +=
                am.transpose().lazyProduct(gm);
          }
        }
      }
    });
  }
  return out;
}

/// Sparse (constant) times dense: A (m, n) * H (n, d) -> (m, d).
/// A is referenced by the backward rule and must outlive the tape's backward().
inline Tensor spmm(const SparseMatrix& a, const Tensor& h) {
  if (h.rank() != 2 || a.cols != h.dim(0)) {
    throw std::invalid_argument("spmm: dimension mismatch A is " + std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + ", H is " + shape_string(h.shape()));
  }
  const std::size_t d = h.dim(1);
  Tensor out(Shape{a.rows, d});
  a.multiply(h.data(), d, out.data());
  if (Tape* tape = detail::recording({&h})) {
    detail::unary_record(tape, h, out, [ap = &a, d](std::span<const double> g, std::span<double> gh) {
      // grad_H = A^T grad_out, as a scatter over A's rows.
      for (std::size_t i = 0; i < ap->rows; ++i) {
        const double* gi = g.data() + i * d;
        for (std::size_t p = ap->row_ptr[i]; p < ap->row_ptr[i + 1]; ++p) {
          const double v = ap->values[p];
          double* dst = gh.data() + static_cast<std::size_t>(ap->col_idx[p]) * d;
          for (std::size_t c = 0; c < d; ++c) dst[c] += v * gi[c];
        }
      }
    });
  }
  return out;
}

/// Owning variant: the backward rule keeps `a` alive.
inline Tensor spmm(std::shared_ptr<const SparseMatrix> a, const Tensor& h) {
  Tensor out = spmm(*a, h);
  if (Tape* tape = active_tape(); tape != nullptr && out.requires_grad()) {
    // Pin the matrix for as long as the tape holds the spmm record.
    tape->record(out, [a = std::move(a)](std::span<const double>) {});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Normalization

/// Softmax over the last dimension.
inline Tensor softmax(const Tensor& x) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  Tensor out(x.shape());
  auto xv = x.data();
  auto o = out.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = xv.data() + i * cols;
    double* dst = o.data() + i * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, in[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      dst[j] = std::exp(in[j] - mx);
      sum += dst[j];
    }
    for (std::size_t j = 0; j < cols; ++j) dst[j] /= sum;
  }
  if (Tape* tape = detail::recording({&x})) {
    detail::unary_record(tape, x, out,
                         [on = out.node(), rows, cols](std::span<const double> g, std::span<double> gx) {
                           const auto& y = on->value;
                           for (std::size_t i = 0; i < rows; ++i) {
                             double dot = 0.0;
                             for (std::size_t j = 0; j < cols; ++j) dot += g[i * cols + j] * y[i * cols + j];
                             for (std::size_t j = 0; j < cols; ++j) {
                               gx[i * cols + j] += y[i * cols + j] * (g[i * cols + j] - dot);
                             }
                           }
                         });
  }
  return out;
}

inline constexpr double kLayerNormEps = 1e-12;

/// Per-row normalization over the last dimension with learnable scale/shift.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kLayerNormEps) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (gamma.size() != cols || beta.size() != cols) throw std::invalid_argument("layer_norm: scale/shift width");
  Tensor out(x.shape());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(rows);
  auto xv = x.data();
  auto gv = gamma.data();
  auto bv = beta.data();
  auto o = out.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* in = xv.data() + i * cols;
    double mean = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += in[j];
    mean /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(cols);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      xhat[i * cols + j] = (in[j] - mean) * inv_std[i];
      o[i * cols + j] = gv[j] * xhat[i * cols + j] + bv[j];
    }
  }
  if (Tape* tape = detail::recording({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record(out, [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
                       inv_std = std::move(inv_std), rows, cols](std::span<const double> g) {
      const double inv_cols = 1.0 / static_cast<double>(cols);
      if (xn->requires_grad) {
        auto& gx = xn->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i) {
          double mean_g = 0.0;
          double mean_gx = 0.0;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gh = g[i * cols + j] * gn->value[j];
            mean_g += gh;
            mean_gx += gh * xhat[i * cols + j];
          }
          mean_g *= inv_cols;
          mean_gx *= inv_cols;
          for (std::size_t j = 0; j < cols; ++j) {
            const double gh = g[i * cols + j] * gn->value[j];
            gx[i * cols + j] += inv_std[i] * (gh - mean_g - xhat[i * cols + j] * mean_gx);
          }
        }
      }
      if (gn->requires_grad) {
        auto& gg = gn->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) gg[j] += g[i * cols + j] * xhat[i * cols + j];
        }
      }
      if (bn->requires_grad) {
        auto& gb = bn->grad_buffer();
        for (std::size_t i = 0; i < rows; ++i) {
          for (std::size_t j = 0; j < cols; ++j) gb[j] += g[i * cols + j];
        }
      }
    });
  }
  return out;
}

/// Inverted dropout. Identity (the same tensor) when !train or p == 0.
inline Tensor dropout(const Tensor& x, double p, Rng& rng, bool train) {
  if (!train || p <= 0.0) return x;
  if (p >= 1.0) throw std::invalid_argument("dropout: p must be < 1");
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < p ? 0.0 : keep_scale;
  Tensor out(x.shape());
  auto o = out.data();
  auto v = x.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = v[i] * mask[i];
  if (Tape* tape = detail::recording({&x})) {
    detail::unary_record(tape, x, out, [mask = std::move(mask)](std::span<const double> g, std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * mask[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape and indexing

/// Same values, new shape.
inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw std::invalid_argument("reshape: " + shape_string(x.shape()) + " -> " + shape_string(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (Tape* tape = detail::recording({&x})) {
    detail::unary_record(tape, x, out, [](std::span<const double> g, std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

/// Axis permutation: out.shape[i] = x.shape[perm[i]].
inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const std::size_t r = x.rank();
  if (perm.size() != r) throw std::invalid_argument("permute: rank mismatch");
  Shape shape(r);
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * x.dim(i);
  for (std::size_t i = 0; i < r; ++i) shape[i] = x.dim(perm.at(i));
  // source offset for each output element
  std::vector<std::size_t> src(x.size());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t o = 0; o < src.size(); ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_stride[perm[i]];
    src[o] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  Tensor out(shape);
  auto o = out.data();
  auto v = x.data();
  for (std::size_t i = 0; i < src.size(); ++i) o[i] = v[src[i]];
  if (Tape* tape = detail::recording({&x})) {
    detail::unary_record(tape, x, out, [src = std::move(src)](std::span<const double> g, std::span<double> gx) {
      for (std::size_t i = 0; i < g.size(); ++i) gx[src[i]] += g[i];
    });
  }
  return out;
}

/// Concatenation along the last dimension; all parts share the row count.
inline Tensor concat(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat: row count mismatch");
    total += p.cols();
  }
  Shape shape = parts.front().shape();
  if (shape.empty()) shape = {1};
  shape.back() = total;
  Tensor out(shape);
  auto o = out.data();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    auto v = p.data();
    for (std::size_t i = 0; i < rows; ++i) std::copy_n(v.data() + i * c, c, o.data() + i * total + offset);
    offset += c;
  }
  Tape* tape = active_tape();
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (tape != nullptr && any) {
    out.set_requires_grad(true);
    std::vector<detail::NodePtr> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    tape->record(out, [nodes = std::move(nodes), rows, total](std::span<const double> g) {
      std::size_t off = 0;
      for (const auto& n : nodes) {
        const std::size_t c = n->value.size() / std::max<std::size_t>(rows, 1);
        if (n->requires_grad) {
          auto& gx = n->grad_buffer();
          for (std::size_t i = 0; i < rows; ++i) {
            for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * total + off + j];
          }
        }
        off += c;
      }
    });
  }
  return out;
}

/// Rows of x's matrix view selected by index -> (indices.size(), cols).
inline Tensor gather_rows(const Tensor& x, std::span<const std::size_t> indices) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  for (auto i : idx) {
    if (i >= rows) throw std::out_of_range("gather_rows: index " + std::to_string(i) + " >= " + std::to_string(rows));
  }
  Tensor out(Shape{idx.size(), cols});
  auto o = out.data();
  auto v = x.data();
  for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(v.data() + idx[r] * cols, cols, o.data() + r * cols);
  if (Tape* tape = detail::recording({&x})) {
    detail::unary_record(tape, x, out, [idx = std::move(idx), cols](std::span<const double> g, std::span<double> gx) {
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t c = 0; c < cols; ++c) gx[idx[r] * cols + c] += g[r * cols + c];
      }
    });
  }
  return out;
}

/// Integer-indexed lookup into a learnable table (vocab, d) -> (ids.size(), d).
inline Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  if (table.rank() != 2) throw std::invalid_argument("embedding: table must be rank 2");
  for (auto id : ids) {
    if (id >= table.dim(0)) {
      throw std::out_of_range("embedding: id " + std::to_string(id) + " outside table of " +
                              std::to_string(table.dim(0)));
    }
  }
  return gather_rows(table, ids);
}

/// Row replacement: out row i = src row source[i] when source[i] >= 0, else
/// base row i. One src row may fan out to several output rows.
inline Tensor replace_rows(const Tensor& base, const Tensor& src, std::span<const std::int64_t> source) {
  const std::size_t rows = base.rows();
  const std::size_t cols = base.cols();
  if (src.cols() != cols || source.size() != rows) throw std::invalid_argument("replace_rows: shape mismatch");
  std::vector<std::int64_t> map(source.begin(), source.end());
  for (auto s : map) {
    if (s >= static_cast<std::int64_t>(src.rows())) throw std::out_of_range("replace_rows: source index");
  }
  Tensor out(base.shape());
  auto o = out.data();
  auto bv = base.data();
  auto sv = src.data();
  for (std::size_t i = 0; i < rows; ++i) {
    const double* from = map[i] >= 0 ? sv.data() + static_cast<std::size_t>(map[i]) * cols : bv.data() + i * cols;
    std::copy_n(from, cols, o.data() + i * cols);
  }
  if (Tape* tape = detail::recording({&base, &src})) {
    out.set_requires_grad(true);
    tape->record(out, [bn = base.node(), sn = src.node(), map = std::move(map), cols](std::span<const double> g) {
      for (std::size_t i = 0; i < map.size(); ++i) {
        if (map[i] >= 0) {
          if (!sn->requires_grad) continue;
          auto& gs = sn->grad_buffer();
          for (std::size_t c = 0; c < cols; ++c) gs[static_cast<std::size_t>(map[i]) * cols + c] += g[i * cols + c];
        } else {
          if (!bn->requires_grad) continue;
          auto& gb = bn->grad_buffer();
          for (std::size_t c = 0; c < cols; ++c) gb[i * cols + c] += g[i * cols + c];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (Tape* tape = detail::recording({&x})) {
    detail::unary_record(tape, x, out, [](std::span<const double> g, std::span<double> gx) {
      for (auto& v : gx) v += g[0];
    });
  }
  return out;
}

inline Tensor mean(const Tensor& x) {
  if (x.size() == 0) throw std::invalid_argument("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

/// Mean over the rows of the matrix view -> (cols).
inline Tensor mean_rows(const Tensor& x) {
  const std::size_t rows = x.rows();
  const std::size_t cols = x.cols();
  if (rows == 0) throw std::invalid_argument("mean_rows of empty tensor");
  Tensor out(Shape{cols});
  auto o = out.data();
  auto v = x.data();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) o[j] += v[i * cols + j];
  }
  for (auto& val : o) val /= static_cast<double>(rows);
  if (Tape* tape = detail::recording({&x})) {
    detail::unary_record(tape, x, out, [rows, cols](std::span<const double> g, std::span<double> gx) {
      const double inv = 1.0 / static_cast<double>(rows);
      for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) gx[i * cols + j] += g[j] * inv;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Loss

/// Mean binary cross-entropy on logits, in the overflow-free form
/// max(z,0) - z*y + log(1 + exp(-|z|)).
inline Tensor bce_with_logits(const Tensor& logits, std::span<const int> labels) {
  if (logits.size() != labels.size()) {
    throw std::invalid_argument("bce_with_logits: " + std::to_string(logits.size()) + " logits vs " +
                                std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw std::invalid_argument("bce_with_logits: empty batch");
  std::vector<double> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("bce_with_logits: label outside {0,1}");
    y[i] = labels[i];
  }
  const auto z = logits.data();
  double total = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    total += std::max(z[i], 0.0) - z[i] * y[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  const double n = static_cast<double>(y.size());
  Tensor out = Tensor::scalar(total / n);
  if (Tape* tape = detail::recording({&logits})) {
    detail::unary_record(tape, logits, out,
                         [ln = logits.node(), y = std::move(y), n](std::span<const double> g, std::span<double> gz) {
                           for (std::size_t i = 0; i < y.size(); ++i) {
                             gz[i] += g[0] * (sigmoid_value(ln->value[i]) - y[i]) / n;
                           }
                         });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Composites

inline Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_row(matmul(x, weight), bias);
}

}  // namespace ragfuse::ops
