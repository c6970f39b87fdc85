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
#include <atomic>
#include <cstddef>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

namespace ragfuse {

namespace detail {
inline std::atomic<std::size_t>& thread_cap() {
  static std::atomic<std::size_t> cap = [] {
    std::size_t n = 1;
    if (const char* env = std::getenv("RAGFUSE_THREADS")) {
      try {
        const long v = std::stol(env);
        if (v > 0) n = static_cast<std::size_t>(v);
      } catch (...) {
      }
    }
    return n;
  }();
  return cap;
}
}  // namespace detail

/// Upper bound on worker threads for row-partitioned kernels. Read once from
/// RAGFUSE_THREADS, defaults to 1 (single-stream).
inline std::size_t max_threads() { return detail::thread_cap().load(); }

inline void set_max_threads(std::size_t n) { detail::thread_cap().store(std::max<std::size_t>(1, n)); }

/// Runs fn(begin, end) over contiguous chunks of [0, count). Each index is
/// handled by exactly one chunk, so per-index work stays bitwise identical
/// regardless of the thread count.
template <typename Fn>
void parallel_for(std::size_t count, std::size_t min_chunk, Fn&& fn) {
  const std::size_t threads =
      std::min(max_threads(), std::max<std::size_t>(1, count / std::max<std::size_t>(1, min_chunk)));
  if (threads <= 1) {
    fn(std::size_t{0}, count);
    return;
  }
  const std::size_t chunk = (count + threads - 1) / threads;
  std::vector<std::jthread> workers;
  workers.reserve(threads - 1);
  for (std::size_t t = 1; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(count, begin + chunk);
    if (begin >= end) break;
    workers.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(std::size_t{0}, std::min(count, chunk));
}

}  // namespace ragfuse
