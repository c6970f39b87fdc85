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
#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "ragfuse/adam.hpp"
#include "ragfuse/graph.hpp"
#include "ragfuse/metrics.hpp"
#include "ragfuse/model.hpp"

namespace ragfuse {

struct TrainConfig {
  std::string scheme = "full";
  std::size_t epochs = 200;
  std::size_t batch_size = 256;
  double lr = 1e-3;
  double weight_decay = 1e-4;
  std::size_t max_hop = 2;
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t transformer_layers = 2;
  std::size_t gcn_layers = 2;
  double dropout = 0.1;
  std::uint64_t seed = 0;
  std::size_t patience = 20;
  double train_ratio = 0.4;
  double val_ratio = 0.1;
  std::string propagation = "full_graph";  // or "induced"
  std::string f1_threshold = "fixed";      // or "best_val"
  std::size_t probe_size = 512;
  std::size_t eval_batch_size = 1024;

  Variant variant() const { return Variant::parse(scheme); }

  PropagationMode propagation_mode() const {
    if (propagation == "full_graph") return PropagationMode::kFullGraph;
    if (propagation == "induced") return PropagationMode::kInduced;
    throw std::invalid_argument("unknown propagation mode: " + propagation);
  }

  ModelConfig model_config(std::size_t feature_dim, std::size_t relations) const {
    ModelConfig m;
    m.variant = variant();
    m.feature_dim = feature_dim;
    m.num_relations = relations;
    m.dim = dim;
    m.heads = heads;
    m.transformer_layers = transformer_layers;
    m.gcn_layers = gcn_layers;
    m.max_hop = max_hop;
    m.dropout = dropout;
    m.propagation = propagation_mode();
    m.seed = seed;
    return m;
  }

  void validate() const {
    (void)variant();
    (void)propagation_mode();
    if (f1_threshold != "fixed" && f1_threshold != "best_val") {
      throw std::invalid_argument("f1_threshold must be 'fixed' or 'best_val'");
    }
    if (batch_size == 0 || dim == 0 || heads == 0 || eval_batch_size == 0) {
      throw std::invalid_argument("batch_size, dim, heads and eval_batch_size must be positive");
    }
    if (dim % heads != 0) throw std::invalid_argument("dim must be divisible by heads");
    if (max_hop < 1 || transformer_layers < 1 || gcn_layers < 1) {
      throw std::invalid_argument("max_hop, transformer_layers and gcn_layers must be >= 1");
    }
    if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("dropout outside [0,1)");
    if (!(lr > 0.0) || !(weight_decay >= 0.0)) throw std::invalid_argument("lr must be > 0 and weight_decay >= 0");
  }

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["scheme"] = scheme;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["max_hop"] = max_hop;
    j["dim"] = dim;
    j["heads"] = heads;
    j["transformer_layers"] = transformer_layers;
    j["gcn_layers"] = gcn_layers;
    j["dropout"] = dropout;
    j["seed"] = seed;
    j["patience"] = patience;
    j["train_ratio"] = train_ratio;
    j["val_ratio"] = val_ratio;
    j["propagation"] = propagation;
    j["f1_threshold"] = f1_threshold;
    j["probe_size"] = probe_size;
    j["eval_batch_size"] = eval_batch_size;
    return j;
  }

  /// Applies the keys of `j` over this config. Unknown keys are rejected.
  void merge(const nlohmann::json& j) {
    const nlohmann::ordered_json known = to_json();
    for (auto it = j.begin(); it != j.end(); ++it) {
      if (!known.contains(it.key())) throw std::invalid_argument("unknown config key: " + it.key());
    }
    try {
      auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
      };
      get("scheme", scheme);
      get("epochs", epochs);
      get("batch_size", batch_size);
      get("lr", lr);
      get("weight_decay", weight_decay);
      get("max_hop", max_hop);
      get("dim", dim);
      get("heads", heads);
      get("transformer_layers", transformer_layers);
      get("gcn_layers", gcn_layers);
      get("dropout", dropout);
      get("seed", seed);
      get("patience", patience);
      get("train_ratio", train_ratio);
      get("val_ratio", val_ratio);
      get("propagation", propagation);
      get("f1_threshold", f1_threshold);
      get("probe_size", probe_size);
      get("eval_batch_size", eval_batch_size);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("bad config value: ") + e.what());
    }
  }

  static TrainConfig from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.merge(j);
    return c;
  }
};

struct SimilarityPoint {
  double cosine = std::numeric_limits<double>::quiet_NaN();
  double cka = std::numeric_limits<double>::quiet_NaN();
  bool degenerate = false;
};

struct EpochReport {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  MetricReport validation;
  MetricReport test;
  std::optional<SimilarityPoint> similarity;  // only when both encoders exist
  double seconds = 0.0;
};

/// Everything derived from (graph, config) that training and evaluation share:
/// the split, per-node sequences (built against the train labels), and the
/// feature matrix as a constant tensor.
class TrainingContext {
 public:
  TrainingContext(const MultiRelationGraph& graph, const TrainConfig& config)
      : TrainingContext(graph, config,
                        stratified_split(graph.labels(), config.train_ratio, config.val_ratio, config.seed)) {}

  /// Uses a caller-provided split instead of drawing one.
  TrainingContext(const MultiRelationGraph& graph, const TrainConfig& config, NodeSplit split)
      : graph_(&graph), split_(std::move(split)) {
    for (const auto* part : {&split_.train, &split_.validation, &split_.test}) {
      for (NodeId v : *part) {
        if (v >= graph.num_nodes()) throw std::out_of_range("split node " + std::to_string(v) + " out of range");
      }
    }
    if (!std::is_sorted(split_.train.begin(), split_.train.end())) {
      throw std::invalid_argument("split train ids must be sorted");
    }
    features_ = Tensor(Shape{graph.num_nodes(), graph.feature_dim()}, graph.features().data);
    if (config.variant().has_semantic()) {
      std::vector<NodeId> all(graph.num_nodes());
      std::iota(all.begin(), all.end(), NodeId{0});
      sequences_ = build_sequences(graph, all, split_.train, config.max_hop);
    }
    // Probe for similarity traces: up to probe_size seeded test nodes.
    probe_ = split_.test;
    Rng rng = Rng(Rng::mix(config.seed ^ 0x9a0be)).fork(7);
    rng.shuffle(std::span<NodeId>(probe_));
    if (probe_.size() > config.probe_size) probe_.resize(config.probe_size);
    std::sort(probe_.begin(), probe_.end());
  }

  const MultiRelationGraph& graph() const { return *graph_; }
  const NodeSplit& split() const { return split_; }
  const Tensor& features() const { return features_; }
  const std::vector<NodeId>& probe() const { return probe_; }

  SequenceBatch sequences_for(std::span<const NodeId> nodes) const {
    std::vector<std::size_t> rows(nodes.begin(), nodes.end());
    return sequences_.select(rows);
  }

  std::vector<int> labels_for(std::span<const NodeId> nodes) const {
    std::vector<int> y;
    y.reserve(nodes.size());
    for (NodeId v : nodes) y.push_back(graph_->labels()[v]);
    return y;
  }

 private:
  const MultiRelationGraph* graph_;
  NodeSplit split_;
  Tensor features_;
  SequenceBatch sequences_;
  std::vector<NodeId> probe_;
};

/// Eval-mode embeddings for a node list, in chunks: (n, R, d) each, undefined
/// when the encoder is absent.
struct Embeddings {
  Tensor semantic;
  Tensor topology;
};

inline Embeddings embed_nodes(const Model& model, const TrainingContext& ctx, std::span<const NodeId> nodes,
                              std::size_t chunk) {
  NoGradGuard no_grad;
  Rng unused(0);
  Embeddings out;
  const std::size_t relations = model.config().num_relations;
  const std::size_t d = model.config().dim;
  if (model.topology()) {
    if (model.config().propagation == PropagationMode::kFullGraph) {
      const Tensor all = model.topology()->forward_all(ctx.graph(), ctx.features());
      std::vector<std::size_t> rows(nodes.begin(), nodes.end());
      out.topology = ops::reshape(ops::gather_rows(ops::reshape(all, {all.dim(0), relations * d}), rows),
                                  {nodes.size(), relations, d});
    } else {
      out.topology = model.topology_embeddings(ctx.graph(), ctx.features(), nodes);
    }
  }
  if (model.semantic()) {
    std::vector<double> values;
    values.reserve(nodes.size() * relations * d);
    for (std::size_t begin = 0; begin < nodes.size(); begin += chunk) {
      const auto part = nodes.subspan(begin, std::min(chunk, nodes.size() - begin));
      const Tensor x = model.semantic_embeddings(ctx.sequences_for(part), false, unused);
      values.insert(values.end(), x.data().begin(), x.data().end());
    }
    out.semantic = Tensor(Shape{nodes.size(), relations, d}, std::move(values));
  }
  return out;
}

/// Fraud probabilities for the given nodes (dropout off, no tape).
inline std::vector<double> predict(const Model& model, const TrainingContext& ctx, std::span<const NodeId> nodes,
                                   std::size_t chunk = 1024) {
  const Embeddings e = embed_nodes(model, ctx, nodes, chunk);
  NoGradGuard no_grad;
  std::vector<double> scores;
  scores.reserve(nodes.size());
  for (std::size_t begin = 0; begin < nodes.size(); begin += chunk) {
    const std::size_t len = std::min(chunk, nodes.size() - begin);
    std::vector<std::size_t> rows(len);
    std::iota(rows.begin(), rows.end(), begin);
    auto slice = [&](const Tensor& t) -> Tensor {
      if (!t.defined()) return {};
      return ops::reshape(ops::gather_rows(ops::reshape(t, {t.dim(0), t.dim(1) * t.dim(2)}), rows),
                          {len, t.dim(1), t.dim(2)});
    };
    const Tensor z = model.logits(slice(e.semantic), slice(e.topology));
    for (double v : z.data()) scores.push_back(ops::sigmoid_value(v));
  }
  return scores;
}

inline Matrix flatten_embeddings(const Tensor& t) {
  return Matrix(t.dim(0), t.dim(1) * t.dim(2), std::vector<double>(t.data().begin(), t.data().end()));
}

/// Cosine and linear CKA between flattened X_sem and X_gcn on the probe nodes.
inline SimilarityPoint similarity_at(const Model& model, const TrainingContext& ctx, std::span<const NodeId> probe) {
  if (!model.semantic() || !model.topology()) {
    throw std::invalid_argument("similarity needs both encoders");
  }
  const Embeddings e = embed_nodes(model, ctx, probe, 1024);
  const Matrix xs = flatten_embeddings(e.semantic);
  const Matrix xg = flatten_embeddings(e.topology);
  SimilarityPoint p;
  p.cosine = mean_cosine_similarity(xs, xg);
  try {
    p.cka = linear_cka(xs, xg);
  } catch (const std::invalid_argument&) {
    p.degenerate = true;
  }
  return p;
}

/// Similarity per parameter snapshot (e.g. one per epoch). Model parameters
/// are restored to their current values afterwards.
inline std::vector<SimilarityPoint> similarity_trace(Model& model,
                                                     const std::vector<std::vector<std::vector<double>>>& snapshots,
                                                     const TrainingContext& ctx, std::span<const NodeId> probe) {
  const auto current = model.params().snapshot();
  std::vector<SimilarityPoint> out;
  for (const auto& s : snapshots) {
    model.params().restore(s);
    out.push_back(similarity_at(model, ctx, probe));
  }
  model.params().restore(current);
  return out;
}

inline MetricReport evaluate(const Model& model, const TrainingContext& ctx, std::span<const NodeId> nodes,
                             double threshold = 0.5, std::size_t chunk = 1024) {
  const std::vector<double> scores = predict(model, ctx, nodes, chunk);
  const std::vector<int> labels = ctx.labels_for(nodes);
  return compute_metrics(scores, labels, threshold);
}

struct TrainResult {
  Model model;
  std::vector<EpochReport> reports;
  std::optional<SimilarityPoint> initial_similarity;
  std::size_t best_epoch = 0;  // 0 = initial parameters
  double threshold = 0.5;
  std::vector<std::vector<std::vector<double>>> snapshots;  // per epoch, when requested
};

struct TrainHooks {
  std::function<void(const EpochReport&)> on_epoch;
  bool keep_snapshots = false;
};

inline TrainResult train(const TrainingContext& ctx, const TrainConfig& config, const TrainHooks& hooks = {}) {
  config.validate();
  const MultiRelationGraph& graph = ctx.graph();
  Model model(config.model_config(graph.feature_dim(), graph.num_relations()));
  TrainResult result{std::move(model), {}, std::nullopt, 0, 0.5, {}};
  Model& m = result.model;

  const bool both = m.semantic() && m.topology();
  if (both && !ctx.probe().empty()) result.initial_similarity = similarity_at(m, ctx, ctx.probe());

  AdamState adam;
  adam.learning_rate = config.lr;
  adam.weight_decay = config.weight_decay;
  Rng shuffle_rng = Rng(Rng::mix(config.seed ^ 0x5afeULL)).fork(21);
  Rng dropout_rng = Rng(Rng::mix(config.seed ^ 0xd20f)).fork(22);

  const auto& split = ctx.split();
  std::vector<NodeId> order = split.train;
  double best_val = -1.0;
  auto best_params = m.params().snapshot();
  std::size_t since_best = 0;

  auto threshold_for = [&](const Model& model) {
    if (config.f1_threshold == "fixed" || split.validation.empty()) return 0.5;
    const auto scores = predict(model, ctx, split.validation, config.eval_batch_size);
    return best_f1_threshold(scores, ctx.labels_for(split.validation));
  };
  auto metrics_on = [&](const std::vector<NodeId>& nodes, double threshold) {
    MetricReport r;
    r.auc = r.ap = r.f1_macro = std::numeric_limits<double>::quiet_NaN();
    r.threshold = threshold;
    if (nodes.empty()) return r;
    const auto scores = predict(m, ctx, nodes, config.eval_batch_size);
    const auto labels = ctx.labels_for(nodes);
    const bool two_classes = std::count(labels.begin(), labels.end(), 1) > 0 &&
                             std::count(labels.begin(), labels.end(), 0) > 0;
    if (!two_classes) return r;
    return compute_metrics(scores, labels, threshold);
  };

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    shuffle_rng.shuffle(std::span<NodeId>(order));
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::span<const NodeId> nodes(order.data() + begin, std::min(config.batch_size, order.size() - begin));
      m.params().zero_grad();
      Tape tape;
      TapeGuard guard(tape);
      Tensor x_sem;
      if (m.semantic()) x_sem = m.semantic_embeddings(ctx.sequences_for(nodes), true, dropout_rng);
      const Tensor x_gcn = m.topology_embeddings(graph, ctx.features(), nodes);
      const Tensor z = m.logits(x_sem, x_gcn);
      const std::vector<int> labels = ctx.labels_for(nodes);
      const Tensor loss = ops::bce_with_logits(z, labels);
      if (!std::isfinite(loss.item())) {
        throw std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch offset " +
                                 std::to_string(begin));
      }
      tape.backward(loss);
      adam_step(m.params(), adam);
      loss_sum += loss.item() * static_cast<double>(nodes.size());
    }

    EpochReport report;
    report.epoch = epoch;
    report.train_loss = order.empty() ? 0.0 : loss_sum / static_cast<double>(order.size());
    const double threshold = threshold_for(m);
    report.validation = metrics_on(split.validation, threshold);
    report.test = metrics_on(split.test, threshold);
    if (both && !ctx.probe().empty()) report.similarity = similarity_at(m, ctx, ctx.probe());
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (hooks.keep_snapshots) result.snapshots.push_back(m.params().snapshot());

    const double val = std::isnan(report.validation.auc) ? -report.train_loss : report.validation.auc;
    if (val > best_val) {
      best_val = val;
      best_params = m.params().snapshot();
      result.best_epoch = epoch;
      result.threshold = threshold;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.reports.push_back(report);
    if (hooks.on_epoch) hooks.on_epoch(report);
    if (config.patience > 0 && since_best >= config.patience) break;
  }
  m.params().restore(best_params);
  return result;
}

inline TrainResult train(const MultiRelationGraph& graph, const TrainConfig& config, const TrainHooks& hooks = {}) {
  TrainingContext ctx(graph, config);
  return train(ctx, config, hooks);
}

// ---------------------------------------------------------------------------
// CSV emission

namespace detail {
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}
}  // namespace detail

/// Per-epoch CSV. Wall time goes in the `seconds` column only when
/// include_wall_time is set; otherwise the column reads 0 so that reruns are
/// byte-identical.
inline std::string epochs_csv(const std::vector<EpochReport>& reports, bool include_wall_time = false) {
  std::ostringstream os;
  os << "epoch,loss,val_auc,val_ap,val_f1,test_auc,test_ap,test_f1,cos_sim,cka,seconds\n";
  for (const auto& r : reports) {
    using detail::fmt;
    const double nan = std::numeric_limits<double>::quiet_NaN();
    os << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.validation.auc) << ',' << fmt(r.validation.ap) << ','
       << fmt(r.validation.f1_macro) << ',' << fmt(r.test.auc) << ',' << fmt(r.test.ap) << ','
       << fmt(r.test.f1_macro) << ',' << fmt(r.similarity ? r.similarity->cosine : nan) << ','
       << fmt(r.similarity ? r.similarity->cka : nan) << ',' << (include_wall_time ? fmt(r.seconds) : "0") << '\n';
  }
  return os.str();
}

inline std::string timing_csv(const std::vector<EpochReport>& reports) {
  std::ostringstream os;
  os << "epoch,seconds\n";
  for (const auto& r : reports) os << r.epoch << ',' << detail::fmt(r.seconds) << '\n';
  return os.str();
}

inline std::string similarity_csv(const std::vector<SimilarityPoint>& points, std::size_t first_epoch = 1) {
  std::ostringstream os;
  os << "epoch,cos_sim,cka,degenerate\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    os << first_epoch + i << ',' << detail::fmt(points[i].cosine) << ',' << detail::fmt(points[i].cka) << ','
       << (points[i].degenerate ? 1 : 0) << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Ablation and sweep drivers

struct ResultRow {
  std::string label;  // scheme name or axis value
  MetricReport test;
  MetricReport validation;
  std::size_t best_epoch = 0;
  std::string note;
};

/// Trains each scheme on the same split and seed.
inline std::vector<ResultRow> ablate(const MultiRelationGraph& graph, const TrainConfig& base,
                                     const std::vector<std::string>& schemes) {
  for (const auto& s : schemes) (void)Variant::parse(s);
  std::vector<ResultRow> rows;
  for (const auto& s : schemes) {
    TrainConfig c = base;
    c.scheme = s;
    TrainingContext ctx(graph, c);
    TrainResult r = train(ctx, c);
    ResultRow row;
    row.label = s;
    row.test = evaluate(r.model, ctx, ctx.split().test, r.threshold, c.eval_batch_size);
    if (!ctx.split().validation.empty()) {
      row.validation = evaluate(r.model, ctx, ctx.split().validation, r.threshold, c.eval_batch_size);
    }
    row.best_epoch = r.best_epoch;
    rows.push_back(row);
  }
  return rows;
}

inline const std::vector<std::string>& sweep_axes() {
  static const std::vector<std::string> axes{"train_ratio", "transformer_layers", "gcn_layers", "d", "max_hop"};
  return axes;
}

/// One training run per axis value, fixed seed.
inline std::vector<ResultRow> sweep(const MultiRelationGraph& graph, const TrainConfig& base, const std::string& axis,
                                    const std::vector<double>& values) {
  if (std::find(sweep_axes().begin(), sweep_axes().end(), axis) == sweep_axes().end()) {
    throw std::invalid_argument("unknown sweep axis: " + axis);
  }
  auto as_count = [&](double v) {
    if (v < 1.0 || v != std::floor(v)) throw std::invalid_argument("sweep value for " + axis + " must be a positive integer");
    return static_cast<std::size_t>(v);
  };
  std::vector<ResultRow> rows;
  for (double v : values) {
    TrainConfig c = base;
    if (axis == "train_ratio") c.train_ratio = v;
    else if (axis == "transformer_layers") c.transformer_layers = as_count(v);
    else if (axis == "gcn_layers") c.gcn_layers = as_count(v);
    else if (axis == "d") c.dim = as_count(v);
    else if (axis == "max_hop") c.max_hop = as_count(v);
    TrainingContext ctx(graph, c);
    TrainResult r = train(ctx, c);
    ResultRow row;
    row.label = detail::fmt(v);
    row.test = evaluate(r.model, ctx, ctx.split().test, r.threshold, c.eval_batch_size);
    row.best_epoch = r.best_epoch;
    rows.push_back(row);
  }
  if (axis == "d") {
    // embedding-width trend: flag small widths that lose > 0.01 AUC vs d = 64
    const auto ref = std::find_if(values.begin(), values.end(), [](double v) { return v == 64.0; });
    if (ref != values.end()) {
      const double ref_auc = rows[static_cast<std::size_t>(ref - values.begin())].test.auc;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (values[i] < 64.0 && rows[i].test.auc < ref_auc - 0.01) rows[i].note = "auc_drop_vs_d64";
      }
    }
  }
  if (axis == "max_hop" && !rows.empty()) {
    double lo = rows.front().test.auc, hi = lo;
    for (const auto& r : rows) {
      lo = std::min(lo, r.test.auc);
      hi = std::max(hi, r.test.auc);
    }
    for (auto& r : rows) r.note = "auc_spread=" + detail::fmt(hi - lo);
  }
  return rows;
}

inline std::string results_csv(const std::string& key, const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << key << ",auc,ap,f1_macro,best_epoch,note\n";
  for (const auto& r : rows) {
    os << r.label << ',' << detail::fmt(r.test.auc) << ',' << detail::fmt(r.test.ap) << ','
       << detail::fmt(r.test.f1_macro) << ',' << r.best_epoch << ',' << r.note << '\n';
  }
  return os.str();
}

}  // namespace ragfuse
