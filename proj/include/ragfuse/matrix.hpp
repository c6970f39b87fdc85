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
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragfuse/parallel.hpp"

namespace ragfuse {

/// Row-major dense matrix of doubles. Plain value type for data that does not
/// take part in differentiation (features, metric inputs).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}
  Matrix(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw std::invalid_argument("matrix data length does not match shape");
  }

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// Compressed sparse row matrix with real values. Column indices within a row
/// are sorted ascending.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::uint32_t> col_idx;
  std::vector<double> values;

  std::size_t nnz() const { return col_idx.size(); }

  static SparseMatrix identity(std::size_t n) {
    SparseMatrix m;
    m.rows = m.cols = n;
    m.row_ptr.resize(n + 1);
    m.col_idx.resize(n);
    m.values.assign(n, 1.0);
    for (std::size_t i = 0; i <= n; ++i) m.row_ptr[i] = i;
    for (std::size_t i = 0; i < n; ++i) m.col_idx[i] = static_cast<std::uint32_t>(i);
    return m;
  }

  static SparseMatrix zeros(std::size_t r, std::size_t c) {
    SparseMatrix m;
    m.rows = r;
    m.cols = c;
    m.row_ptr.assign(r + 1, 0);
    return m;
  }

  /// Builds from a dense row-major array, keeping exact nonzeros.
  static SparseMatrix from_dense(const Matrix& dense) {
    SparseMatrix m;
    m.rows = dense.rows;
    m.cols = dense.cols;
    m.row_ptr.assign(1, 0);
    for (std::size_t i = 0; i < dense.rows; ++i) {
      for (std::size_t j = 0; j < dense.cols; ++j) {
        if (dense(i, j) != 0.0) {
          m.col_idx.push_back(static_cast<std::uint32_t>(j));
          m.values.push_back(dense(i, j));
        }
      }
      m.row_ptr.push_back(m.col_idx.size());
    }
    return m;
  }

  Matrix to_dense() const {
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) out(i, col_idx[p]) = values[p];
    }
    return out;
  }

  SparseMatrix transposed() const {
    SparseMatrix t;
    t.rows = cols;
    t.cols = rows;
    t.row_ptr.assign(cols + 1, 0);
    for (auto c : col_idx) ++t.row_ptr[c + 1];
    for (std::size_t i = 0; i < cols; ++i) t.row_ptr[i + 1] += t.row_ptr[i];
    t.col_idx.resize(nnz());
    t.values.resize(nnz());
    std::vector<std::size_t> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
        const std::size_t q = cursor[col_idx[p]]++;
        t.col_idx[q] = static_cast<std::uint32_t>(i);
        t.values[q] = values[p];
      }
    }
    return t;
  }

  /// out (rows x width) = this * in (cols x width), both row-major.
  void multiply(std::span<const double> in, std::size_t width, std::span<double> out) const {
    if (in.size() != cols * width || out.size() != rows * width) {
      throw std::invalid_argument("spmm: dimension mismatch");
    }
    parallel_for(rows, 256, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i) {
        double* dst = out.data() + i * width;
        for (std::size_t c = 0; c < width; ++c) dst[c] = 0.0;
        for (std::size_t p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
          const double a = values[p];
          const double* src = in.data() + static_cast<std::size_t>(col_idx[p]) * width;
          for (std::size_t c = 0; c < width; ++c) dst[c] += a * src[c];
        }
      }
    });
  }
};

}  // namespace ragfuse
