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

// Parameter checkpoint layout (all integers unsigned 64-bit little-endian):
//
//   magic "RGFCKPT1" (8 bytes) | version | tensor count
//   per tensor: name byte length | UTF-8 name | rank | dims[rank] |
//               values as IEEE-754 binary64 little-endian

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "ragfuse/params.hpp"

namespace ragfuse {

inline constexpr std::array<char, 8> kCheckpointMagic{'R', 'G', 'F', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint64_t kCheckpointVersion = 1;

namespace detail {
inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline std::uint64_t get_u64(const std::string& in, std::size_t& pos) {
  if (pos + 8 > in.size()) throw std::runtime_error("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 8;
  return v;
}
}  // namespace detail

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

inline std::string encode_checkpoint(const ParamStore& params) {
  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  detail::put_u64(out, kCheckpointVersion);
  detail::put_u64(out, params.size());
  for (const auto& e : params.entries()) {
    detail::put_u64(out, e.name.size());
    out += e.name;
    detail::put_u64(out, e.tensor.rank());
    for (auto d : e.tensor.shape()) detail::put_u64(out, d);
    for (double v : e.tensor.data()) detail::put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

inline std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic.data(), 8) != 0) {
    throw std::runtime_error("not a checkpoint file (bad magic)");
  }
  std::size_t pos = 8;
  const auto version = detail::get_u64(bytes, pos);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto count = detail::get_u64(bytes, pos);
  std::vector<NamedTensor> out;
  for (std::uint64_t t = 0; t < count; ++t) {
    const auto len = detail::get_u64(bytes, pos);
    if (pos + len > bytes.size()) throw std::runtime_error("checkpoint truncated");
    std::string name = bytes.substr(pos, len);
    pos += len;
    const auto rank = detail::get_u64(bytes, pos);
    Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(detail::get_u64(bytes, pos));
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) v = std::bit_cast<double>(detail::get_u64(bytes, pos));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (pos != bytes.size()) throw std::runtime_error("trailing bytes after checkpoint");
  return out;
}

inline void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const std::string bytes = encode_checkpoint(params);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

/// Loads values into an existing parameter set; names and shapes must match.
inline void load_checkpoint(ParamStore& params, const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  const auto tensors = decode_checkpoint(bytes);
  if (tensors.size() != params.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                             std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& e = params.entries()[i];
    if (tensors[i].name != e.name || tensors[i].tensor.shape() != e.tensor.shape()) {
      throw std::runtime_error("checkpoint tensor " + tensors[i].name + " " + shape_string(tensors[i].tensor.shape()) +
                               " does not match model tensor " + e.name + " " + shape_string(e.tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    Tensor dst = params.entries()[i].tensor;
    std::copy(tensors[i].tensor.data().begin(), tensors[i].tensor.data().end(), dst.data().begin());
  }
}

}  // namespace ragfuse
