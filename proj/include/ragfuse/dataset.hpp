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

// Dataset directory layout:
//
//   manifest.json   {"num_nodes", "num_relations", "feature_dim",
//                    "relation_names": [...],
//                    "files": {"features", "labels", "edges": [...]}}
//   features.bin    n*k IEEE-754 binary32 little-endian, row-major
//   labels.csv      "node_id,label" per line
//   edges_<r>.csv   "src,dst" per line, one undirected edge, src < dst

#pragma once

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ragfuse/graph.hpp"
#include "ragfuse/random.hpp"

namespace ragfuse {

namespace fs = std::filesystem;

struct DatasetManifest {
  std::size_t num_nodes = 0;
  std::size_t num_relations = 0;
  std::size_t feature_dim = 0;
  std::vector<std::string> relation_names;
  std::string features_file = "features.bin";
  std::string labels_file = "labels.csv";
  std::vector<std::string> edge_files;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["num_nodes"] = num_nodes;
    j["num_relations"] = num_relations;
    j["feature_dim"] = feature_dim;
    j["relation_names"] = relation_names;
    j["files"]["features"] = features_file;
    j["files"]["labels"] = labels_file;
    j["files"]["edges"] = edge_files;
    return j;
  }

  static DatasetManifest from_json(const nlohmann::json& j) {
    DatasetManifest m;
    try {
      m.num_nodes = j.at("num_nodes").get<std::size_t>();
      m.num_relations = j.at("num_relations").get<std::size_t>();
      m.feature_dim = j.at("feature_dim").get<std::size_t>();
      m.relation_names = j.at("relation_names").get<std::vector<std::string>>();
      const auto& files = j.at("files");
      m.features_file = files.at("features").get<std::string>();
      m.labels_file = files.at("labels").get<std::string>();
      m.edge_files = files.at("edges").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(std::string("malformed manifest: ") + e.what());
    }
    if (m.relation_names.size() != m.num_relations || m.edge_files.size() != m.num_relations) {
      throw std::runtime_error("manifest relation count mismatch");
    }
    return m;
  }
};

/// 64-bit FNV-1a over a file's bytes, as 16 lowercase hex digits.
inline std::string file_checksum(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (is) {
    is.read(buf, sizeof(buf));
    for (std::streamsize i = 0; i < is.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    std::string_view field = line.substr(start, comma == std::string_view::npos ? line.npos : comma - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '\r')) {
      field.remove_suffix(1);
    }
    out.push_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

inline bool blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

/// Reads "a,b" integer pairs. A non-numeric first line is treated as a header.
inline EdgeList read_edge_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing file: " + path.string());
  EdgeList edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto fields = split_csv(line);
    std::size_t u = 0, v = 0;
    if (fields.size() < 2 || !parse_number(fields[0], u) || !parse_number(fields[1], v)) {
      if (line_no == 1) continue;
      throw std::runtime_error("malformed edge row " + std::to_string(line_no) + " in " + path.string());
    }
    edges.emplace_back(u, v);
  }
  return edges;
}

inline std::vector<int> read_label_csv(const fs::path& path, std::size_t n) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing file: " + path.string());
  std::vector<int> labels(n, -1);
  std::string line;
  std::size_t line_no = 0;
  std::size_t seen = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (blank(line)) continue;
    const auto fields = split_csv(line);
    std::size_t id = 0;
    int y = 0;
    if (fields.size() != 2 || !parse_number(fields[0], id) || !parse_number(fields[1], y)) {
      if (line_no == 1) continue;
      throw std::runtime_error("malformed label row " + std::to_string(line_no) + " in " + path.string());
    }
    if (id >= n) throw std::runtime_error("label row for node " + std::to_string(id) + " out of range");
    if (y != 0 && y != 1) throw std::runtime_error("label outside {0,1} at row " + std::to_string(line_no));
    if (labels[id] != -1) throw std::runtime_error("duplicate label for node " + std::to_string(id));
    labels[id] = y;
    ++seen;
  }
  if (seen != n) {
    throw std::runtime_error("label row count mismatch: " + std::to_string(seen) + " rows for " + std::to_string(n) +
                             " nodes");
  }
  return labels;
}

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace detail

inline void save_dataset(const MultiRelationGraph& graph, const fs::path& dir) {
  fs::create_directories(dir);
  DatasetManifest m;
  m.num_nodes = graph.num_nodes();
  m.num_relations = graph.num_relations();
  m.feature_dim = graph.feature_dim();
  m.relation_names = graph.relation_names();
  for (std::size_t r = 0; r < m.num_relations; ++r) m.edge_files.push_back("edges_" + std::to_string(r) + ".csv");

  {
    std::string bytes;
    bytes.reserve(graph.features().data.size() * 4);
    for (double v : graph.features().data) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
      for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    detail::write_text(dir / m.features_file, bytes);
  }
  {
    std::string text;
    for (std::size_t i = 0; i < graph.num_nodes(); ++i) {
      text += std::to_string(i) + ',' + std::to_string(graph.labels()[i]) + '\n';
    }
    detail::write_text(dir / m.labels_file, text);
  }
  for (std::size_t r = 0; r < m.num_relations; ++r) {
    const Adjacency& adj = graph.adjacency(r);
    std::string text;
    for (std::size_t u = 0; u < adj.num_nodes(); ++u) {
      for (NodeId v : adj.neighbors(u)) {
        if (u < v) text += std::to_string(u) + ',' + std::to_string(v) + '\n';
      }
    }
    detail::write_text(dir / m.edge_files[r], text);
  }
  detail::write_text(dir / "manifest.json", m.to_json().dump(2) + "\n");
}

inline DatasetManifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.json";
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing file: " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed manifest: ") + e.what());
  }
  return DatasetManifest::from_json(j);
}

inline MultiRelationGraph load_dataset(const fs::path& dir) {
  const DatasetManifest m = read_manifest(dir);
  const fs::path feature_path = dir / m.features_file;
  if (!fs::exists(feature_path)) throw std::runtime_error("missing file: " + feature_path.string());
  const auto bytes = fs::file_size(feature_path);
  if (m.feature_dim == 0 || bytes % (4 * m.feature_dim) != 0) {
    throw std::runtime_error("feature file size is not a multiple of 4*feature_dim");
  }
  const std::size_t rows = bytes / (4 * m.feature_dim);
  if (rows != m.num_nodes) {
    throw std::runtime_error("feature row count mismatch: " + std::to_string(rows) + " rows for " +
                             std::to_string(m.num_nodes) + " nodes");
  }
  Matrix features(rows, m.feature_dim);
  {
    std::ifstream is(feature_path, std::ios::binary);
    std::string raw(bytes, '\0');
    is.read(raw.data(), static_cast<std::streamsize>(bytes));
    for (std::size_t i = 0; i < features.data.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * i + b])) << (8 * b);
      features.data[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  std::vector<int> labels = detail::read_label_csv(dir / m.labels_file, m.num_nodes);
  std::vector<EdgeList> edges;
  for (const auto& f : m.edge_files) edges.push_back(detail::read_edge_csv(dir / f));
  return build_graph(edges, std::move(features), std::move(labels), m.relation_names);
}

/// Checksums of every file referenced by a dataset manifest (manifest included).
inline nlohmann::ordered_json dataset_checksums(const fs::path& dir) {
  const DatasetManifest m = read_manifest(dir);
  nlohmann::ordered_json j;
  j["manifest.json"] = file_checksum(dir / "manifest.json");
  j[m.features_file] = file_checksum(dir / m.features_file);
  j[m.labels_file] = file_checksum(dir / m.labels_file);
  for (const auto& f : m.edge_files) j[f] = file_checksum(dir / f);
  return j;
}

/// Raw dump conversion: features CSV (one row of k values per node, node order
/// = row order), labels CSV (node_id,label), one edge CSV per relation.
inline MultiRelationGraph convert_csv_dump(const fs::path& features_csv, const fs::path& labels_csv,
                                           const std::vector<fs::path>& edge_csvs,
                                           std::vector<std::string> relation_names = {}) {
  std::ifstream is(features_csv);
  if (!is) throw std::runtime_error("missing file: " + features_csv.string());
  std::vector<double> values;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (detail::blank(line)) continue;
    const auto fields = detail::split_csv(line);
    std::vector<double> row;
    bool ok = true;
    for (auto f : fields) {
      double v = 0;
      if (!detail::parse_number(f, v)) {
        ok = false;
        break;
      }
      row.push_back(v);
    }
    if (!ok) {
      if (line_no == 1) continue;
      throw std::runtime_error("malformed feature row " + std::to_string(line_no));
    }
    if (cols == 0) cols = row.size();
    if (row.size() != cols) throw std::runtime_error("ragged feature row " + std::to_string(line_no));
    values.insert(values.end(), row.begin(), row.end());
    ++rows;
  }
  std::vector<int> labels = detail::read_label_csv(labels_csv, rows);
  std::vector<EdgeList> edges;
  for (const auto& p : edge_csvs) edges.push_back(detail::read_edge_csv(p));
  return build_graph(edges, Matrix(rows, cols, std::move(values)), std::move(labels), std::move(relation_names));
}

// ---------------------------------------------------------------------------
// Synthetic generator

struct RelationSpec {
  double mean_degree = 5.0;
  double homophily = 0.5;
};

struct SyntheticConfig {
  std::size_t num_nodes = 1000;
  double fraud_fraction = 0.5;
  std::size_t feature_dim = 16;
  double feature_separation = 1.0;
  double noise_fraction = 0.0;
  std::vector<RelationSpec> relations{{5.0, 0.5}};
  std::uint64_t seed = 0;

  void validate() const {
    if (num_nodes < 2) throw std::invalid_argument("synthetic: num_nodes must be >= 2");
    if (!(fraud_fraction > 0.0 && fraud_fraction < 1.0)) throw std::invalid_argument("synthetic: fraud_fraction outside (0,1)");
    if (feature_dim == 0) throw std::invalid_argument("synthetic: feature_dim must be > 0");
    if (!(feature_separation >= 0.0)) throw std::invalid_argument("synthetic: feature_separation must be >= 0");
    if (!(noise_fraction >= 0.0 && noise_fraction <= 1.0)) throw std::invalid_argument("synthetic: noise_fraction outside [0,1]");
    if (relations.empty()) throw std::invalid_argument("synthetic: at least one relation required");
    for (const auto& r : relations) {
      if (!(r.homophily >= 0.0 && r.homophily <= 1.0)) throw std::invalid_argument("synthetic: homophily outside [0,1]");
      if (!(r.mean_degree >= 0.0 && r.mean_degree < static_cast<double>(num_nodes))) {
        throw std::invalid_argument("synthetic: mean_degree must be in [0, num_nodes)");
      }
    }
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["num_nodes"] = num_nodes;
    j["fraud_fraction"] = fraud_fraction;
    j["feature_dim"] = feature_dim;
    j["feature_separation"] = feature_separation;
    j["noise_fraction"] = noise_fraction;
    j["relations"] = nlohmann::ordered_json::array();
    for (const auto& r : relations) {
      j["relations"].push_back({{"mean_degree", r.mean_degree}, {"homophily", r.homophily}});
    }
    j["seed"] = seed;
    return j;
  }

  static SyntheticConfig from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known{"num_nodes",      "fraud_fraction", "feature_dim", "feature_separation",
                                                "noise_fraction", "relations",      "seed"};
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
        throw std::invalid_argument("unknown synthetic config key: " + it.key());
      }
    }
    SyntheticConfig c;
    if (j.contains("num_nodes")) c.num_nodes = j["num_nodes"].get<std::size_t>();
    if (j.contains("fraud_fraction")) c.fraud_fraction = j["fraud_fraction"].get<double>();
    if (j.contains("feature_dim")) c.feature_dim = j["feature_dim"].get<std::size_t>();
    if (j.contains("feature_separation")) c.feature_separation = j["feature_separation"].get<double>();
    if (j.contains("noise_fraction")) c.noise_fraction = j["noise_fraction"].get<double>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("relations")) {
      c.relations.clear();
      for (const auto& r : j["relations"]) {
        for (auto it = r.begin(); it != r.end(); ++it) {
          if (it.key() != "mean_degree" && it.key() != "homophily") {
            throw std::invalid_argument("unknown relation key: " + it.key());
          }
        }
        c.relations.push_back({r.value("mean_degree", 5.0), r.value("homophily", 0.5)});
      }
    }
    return c;
  }
};

/// Seeded two-class multi-relation graph.
///
/// Exactly round(fraud_fraction * n) nodes are fraud, chosen by a seeded
/// shuffle. The first (1 - noise_fraction) * k feature dimensions are drawn
/// from N(+s/2, 1) for fraud and N(-s/2, 1) for benign nodes; the remaining
/// dimensions are N(0, 1) for everyone. For each relation every node draws
/// mean_degree candidate edges (the fractional part as a Bernoulli extra);
/// each candidate's other endpoint is a uniform node of the same class with
/// probability h and a uniform node of the other class otherwise.
inline MultiRelationGraph generate_synthetic(const SyntheticConfig& config) {
  config.validate();
  const std::size_t n = config.num_nodes;
  Rng master(config.seed);
  Rng label_rng = master.fork(1);
  Rng feature_rng = master.fork(2);

  std::vector<NodeId> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<NodeId>(i);
  label_rng.shuffle(std::span<NodeId>(order));
  const auto n_fraud = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(config.fraud_fraction * static_cast<double>(n))), 1, n - 1);
  std::vector<int> labels(n, 0);
  for (std::size_t i = 0; i < n_fraud; ++i) labels[order[i]] = 1;
  std::vector<NodeId> members[2];
  for (std::size_t i = 0; i < n; ++i) members[labels[i]].push_back(static_cast<NodeId>(i));

  const std::size_t k = config.feature_dim;
  const auto noise_dims = static_cast<std::size_t>(std::llround(config.noise_fraction * static_cast<double>(k)));
  const std::size_t informative = k - std::min(noise_dims, k);
  Matrix features(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const double shift = (labels[i] == 1 ? 0.5 : -0.5) * config.feature_separation;
    for (std::size_t j = 0; j < k; ++j) {
      // stored as binary32 on disk; keep the in-memory graph identical to a reload
      features(i, j) = static_cast<float>(feature_rng.normal() + (j < informative ? shift : 0.0));
    }
  }

  std::vector<EdgeList> edges;
  std::vector<std::string> names;
  for (std::size_t r = 0; r < config.relations.size(); ++r) {
    const auto& spec = config.relations[r];
    Rng edge_rng = master.fork(100 + r);
    const auto whole = static_cast<std::size_t>(std::floor(spec.mean_degree));
    const double frac = spec.mean_degree - static_cast<double>(whole);
    EdgeList list;
    list.reserve(n * (whole + 1));
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t draws = whole + (edge_rng.bernoulli(frac) ? 1 : 0);
      for (std::size_t t = 0; t < draws; ++t) {
        const bool same = edge_rng.bernoulli(spec.homophily);
        const auto& pool = members[same ? labels[u] : 1 - labels[u]];
        const NodeId v = pool[edge_rng.below(pool.size())];
        if (v != u) list.emplace_back(u, v);
      }
    }
    edges.push_back(std::move(list));
    names.push_back("rel" + std::to_string(r));
  }
  return build_graph(edges, std::move(features), std::move(labels), std::move(names));
}

}  // namespace ragfuse
