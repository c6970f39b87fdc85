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


// ragfuse command-line driver: dataset generation and conversion, training,
// evaluation, ablations, sweeps, similarity traces and parameter counts.
//
// Run directories hold manifest.json plus the files it lists. The manifest is
// written with status "running" before any long computation and finalized as
// "complete" or "failed".

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ragfuse/ragfuse.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing file: " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("write failed: " + path.string());
  }
  fs::rename(tmp, path);
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Applies "a.b.0=value" overrides. Values parse as JSON when they can and
/// fall back to plain strings. The parent of every key must already exist, so
/// misspelled sections fail here and misspelled leaves fail in the config's
/// own key check.
void apply_overrides(json& j, const std::vector<std::string>& sets) {
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw UsageError("--set expects key=value, got '" + kv + "'");
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    std::string pointer;
    std::stringstream ss(key);
    std::string part;
    while (std::getline(ss, part, '.')) {
      if (part.empty()) throw UsageError("empty segment in --set key '" + key + "'");
      for (std::size_t p = 0; (p = part.find('~', p)) != std::string::npos; p += 2) part.replace(p, 1, "~0");
      for (std::size_t p = 0; (p = part.find('/', p)) != std::string::npos; p += 2) part.replace(p, 1, "~1");
      pointer += "/" + part;
    }
    const json::json_pointer ptr(pointer);
    if (!j.contains(ptr.parent_pointer())) throw std::invalid_argument("unknown config key: " + key);
    const json& parent = j.at(ptr.parent_pointer());
    if (parent.is_array() && !j.contains(ptr)) throw std::invalid_argument("index out of range in --set key: " + key);
    j[ptr] = value;
  }
}

/// Options shared by the commands that take a training config.
struct ConfigFlags {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* app) {
    app->add_option("--config", config, "JSON config file");
    app->add_option("--set", sets, "override key=value (dotted keys, repeatable)");
    app->add_option("--seed", seed, "random seed");
  }

  ragfuse::TrainConfig train_config() const {
    json j = ragfuse::TrainConfig().to_json();
    if (!config.empty()) {
      const json file = read_json_file(config);
      if (!file.is_object()) throw std::invalid_argument("config file must hold a JSON object");
      ragfuse::TrainConfig probe;
      probe.merge(file);  // rejects unknown keys
      for (auto it = file.begin(); it != file.end(); ++it) j[it.key()] = it.value();
    }
    apply_overrides(j, sets);
    if (seed) j["seed"] = *seed;
    ragfuse::TrainConfig c = ragfuse::TrainConfig::from_json(j);
    c.validate();
    return c;
  }

  ragfuse::SyntheticConfig synthetic_config() const {
    json j = ragfuse::SyntheticConfig().to_json();
    if (!config.empty()) {
      const json file = read_json_file(config);
      (void)ragfuse::SyntheticConfig::from_json(file);  // rejects unknown keys
      for (auto it = file.begin(); it != file.end(); ++it) j[it.key()] = it.value();
    }
    apply_overrides(j, sets);
    if (seed) j["seed"] = *seed;
    ragfuse::SyntheticConfig c = ragfuse::SyntheticConfig::from_json(j);
    c.validate();
    return c;
  }
};

/// A run directory with its manifest.
class Run {
 public:
  Run(fs::path dir, std::string command, bool resume) : dir_(std::move(dir)), command_(std::move(command)) {
    const fs::path m = dir_ / "manifest.json";
    if (fs::exists(m)) {
      const json old = read_json_file(m);
      if (old.value("status", "") == "complete") {
        if (!resume) throw std::runtime_error("run in " + dir_.string() + " is complete; refusing to overwrite");
        skipped_ = true;
        previous_ = old;
        return;
      }
      if (!resume) {
        throw std::runtime_error("output directory " + dir_.string() + " holds an unfinished run; pass --resume");
      }
      previous_ = old;
    } else if (fs::exists(dir_) && !fs::is_empty(dir_)) {
      throw std::runtime_error("output directory " + dir_.string() + " is not empty");
    }
    fs::create_directories(dir_);
  }

  bool skipped() const { return skipped_; }
  const fs::path& dir() const { return dir_; }
  json& manifest() { return manifest_; }

  /// Writes the "running" manifest. A resumed run must repeat the recorded
  /// command and configuration.
  void start(const json& config, const fs::path& data, const std::vector<std::pair<std::string, std::string>>& outputs) {
    if (!previous_.is_null()) {
      if (previous_.value("command", "") != command_ || previous_["config"] != config) {
        throw std::runtime_error("--resume: command or config differs from the recorded run");
      }
    }
    manifest_ = json::object();
    manifest_["tool"] = "ragfuse";
    manifest_["version"] = std::string(ragfuse::kVersion);
    manifest_["command"] = command_;
    manifest_["status"] = "running";
    manifest_["config"] = config;
    manifest_["threads"] = ragfuse::max_threads();
    manifest_["dataset"] = {{"path", fs::absolute(data).lexically_normal().string()},
                            {"checksums", ragfuse::dataset_checksums(data)}};
    json files = json::object();
    for (const auto& [key, name] : outputs) files[key] = name;
    manifest_["outputs"] = files;
    outputs_ = outputs;
    flush();
  }

  fs::path output(const std::string& key) const {
    for (const auto& [k, name] : outputs_) {
      if (k == key) return dir_ / name;
    }
    throw std::logic_error("undeclared output " + key);
  }

  void complete(const json& result) {
    manifest_["status"] = "complete";
    manifest_["result"] = result;
    flush();
  }

  /// Marks the run failed and removes partial outputs.
  void fail(const std::string& message) noexcept {
    try {
      if (manifest_.is_null()) return;
      for (const auto& [key, name] : outputs_) {
        std::error_code ec;
        fs::remove(dir_ / name, ec);
      }
      manifest_["status"] = "failed";
      manifest_["error"] = message;
      flush();
    } catch (...) {
    }
  }

 private:
  void flush() { write_file(dir_ / "manifest.json", dump(manifest_)); }

  fs::path dir_;
  std::string command_;
  bool skipped_ = false;
  json previous_;
  json manifest_;
  std::vector<std::pair<std::string, std::string>> outputs_;
};

json metrics_json(const ragfuse::MetricReport& r) {
  auto num = [](double v) -> json { return std::isnan(v) ? json(nullptr) : json(v); };
  return {{"auc", num(r.auc)}, {"ap", num(r.ap)}, {"f1_macro", num(r.f1_macro)}, {"threshold", r.threshold}};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

/// Runs `body` inside a run directory, finalizing the manifest either way.
template <typename Body>
void within(Run& run, Body&& body) {
  if (run.skipped()) {
    std::cout << json({{"status", "complete"}, {"skipped", true}, {"out", run.dir().string()}}).dump() << "\n";
    return;
  }
  try {
    const json result = body();
    run.complete(result);
    std::cout << json({{"status", "complete"}, {"out", run.dir().string()}, {"result", result}}).dump() << "\n";
  } catch (const std::exception& e) {
    run.fail(e.what());
    throw;
  }
}

// ---------------------------------------------------------------------------
// Commands

void cmd_synth(const ConfigFlags& flags, const fs::path& out) {
  const ragfuse::SyntheticConfig c = flags.synthetic_config();
  if (fs::exists(out / "manifest.json")) throw std::runtime_error("dataset already exists in " + out.string());
  const auto graph = ragfuse::generate_synthetic(c);
  ragfuse::save_dataset(graph, out);
  json manifest = read_json_file(out / "manifest.json");
  manifest["generator"] = c.to_json();
  write_file(out / "manifest.json", dump(manifest));
  std::size_t fraud = 0;
  for (int y : graph.labels()) fraud += y == 1 ? 1 : 0;
  std::cout << json({{"status", "complete"},
                     {"out", out.string()},
                     {"num_nodes", graph.num_nodes()},
                     {"num_fraud", fraud},
                     {"num_relations", graph.num_relations()}})
                   .dump()
            << "\n";
}

void cmd_convert(const fs::path& features, const fs::path& labels, const std::vector<std::string>& edges,
                 const std::string& names, const fs::path& out) {
  if (edges.empty()) throw UsageError("convert needs at least one --edges file");
  if (fs::exists(out / "manifest.json")) throw std::runtime_error("dataset already exists in " + out.string());
  std::vector<fs::path> edge_paths(edges.begin(), edges.end());
  const auto graph = ragfuse::convert_csv_dump(features, labels, edge_paths, split_list(names));
  ragfuse::save_dataset(graph, out);
  std::cout << json({{"status", "complete"},
                     {"out", out.string()},
                     {"num_nodes", graph.num_nodes()},
                     {"num_relations", graph.num_relations()},
                     {"feature_dim", graph.feature_dim()}})
                   .dump()
            << "\n";
}

void cmd_train(const ConfigFlags& flags, const fs::path& data, const fs::path& out, bool resume) {
  const ragfuse::TrainConfig c = flags.train_config();
  Run run(out, "train", resume);
  within(run, [&] {
    const bool both = c.variant().has_semantic() && c.variant().has_topology();
    std::vector<std::pair<std::string, std::string>> outputs{
        {"epochs", "epochs.csv"}, {"timing", "timing.csv"}, {"checkpoint", "best.ckpt"}, {"metrics", "metrics.json"}};
    if (both) outputs.emplace_back("similarity", "similarity.csv");
    run.start(c.to_json(), data, outputs);

    const auto graph = ragfuse::load_dataset(data);
    ragfuse::TrainingContext ctx(graph, c);
    ragfuse::TrainResult r = ragfuse::train(ctx, c);

    write_file(run.output("epochs"), ragfuse::epochs_csv(r.reports));
    write_file(run.output("timing"), ragfuse::timing_csv(r.reports));
    ragfuse::save_checkpoint(r.model.params(), run.output("checkpoint"));
    if (both) {
      std::vector<ragfuse::SimilarityPoint> points;
      if (r.initial_similarity) points.push_back(*r.initial_similarity);
      for (const auto& rep : r.reports) points.push_back(rep.similarity.value_or(ragfuse::SimilarityPoint{}));
      write_file(run.output("similarity"), ragfuse::similarity_csv(points, r.initial_similarity ? 0 : 1));
    }
    json metrics;
    metrics["best_epoch"] = r.best_epoch;
    metrics["epochs_run"] = r.reports.size();
    metrics["threshold"] = r.threshold;
    metrics["test"] = metrics_json(ragfuse::evaluate(r.model, ctx, ctx.split().test, r.threshold, c.eval_batch_size));
    if (!ctx.split().validation.empty()) {
      metrics["validation"] =
          metrics_json(ragfuse::evaluate(r.model, ctx, ctx.split().validation, r.threshold, c.eval_batch_size));
    }
    write_file(run.output("metrics"), dump(metrics));
    return metrics;
  });
}

void cmd_eval(const fs::path& ckpt, const fs::path& data, const std::string& split_name, const std::string& out) {
  const fs::path manifest_path = ckpt.parent_path() / "manifest.json";
  const json manifest = read_json_file(manifest_path);
  if (manifest.value("status", "") != "complete") throw std::runtime_error("run in " + ckpt.parent_path().string() + " is not complete");
  const ragfuse::TrainConfig c = ragfuse::TrainConfig::from_json(manifest.at("config"));
  const auto graph = ragfuse::load_dataset(data);
  ragfuse::Model model(c.model_config(graph.feature_dim(), graph.num_relations()));
  ragfuse::load_checkpoint(model.params(), ckpt);
  ragfuse::TrainingContext ctx(graph, c);
  const ragfuse::NodeSplit& s = ctx.split();
  const std::vector<ragfuse::NodeId>* nodes = nullptr;
  if (split_name == "test") nodes = &s.test;
  else if (split_name == "validation") nodes = &s.validation;
  else if (split_name == "train") nodes = &s.train;
  else throw UsageError("--split must be train, validation or test");
  const double threshold = manifest.at("result").value("threshold", 0.5);
  json j;
  j["split"] = split_name;
  j["nodes"] = nodes->size();
  j["scheme"] = c.scheme;
  j["dataset_matches_run"] = manifest.at("dataset").at("checksums") == json(ragfuse::dataset_checksums(data));
  j["metrics"] = metrics_json(ragfuse::evaluate(model, ctx, *nodes, threshold, c.eval_batch_size));
  if (out.empty()) {
    std::cout << dump(j);
  } else {
    write_file(out, dump(j));
  }
}

void cmd_ablate(const ConfigFlags& flags, const fs::path& data, const fs::path& out, const std::string& schemes,
                bool resume) {
  const ragfuse::TrainConfig c = flags.train_config();
  const auto list = split_list(schemes);
  if (list.empty()) throw UsageError("--schemes is empty");
  for (const auto& s : list) (void)ragfuse::Variant::parse(s);
  Run run(out, "ablate", resume);
  within(run, [&] {
    json config = c.to_json();
    config["schemes"] = list;
    run.start(config, data, {{"results", "ablation.csv"}});
    const auto graph = ragfuse::load_dataset(data);
    const auto rows = ragfuse::ablate(graph, c, list);
    write_file(run.output("results"), ragfuse::results_csv("scheme", rows));
    json result = json::object();
    for (const auto& r : rows) result[r.label] = metrics_json(r.test);
    return result;
  });
}

void cmd_sweep(const ConfigFlags& flags, const fs::path& data, const fs::path& out, const std::string& axis,
               const std::string& values, bool resume) {
  const ragfuse::TrainConfig c = flags.train_config();
  std::vector<double> v;
  for (const auto& item : split_list(values)) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("--values holds a non-number: " + item);
    }
  }
  if (v.empty()) throw UsageError("--values is empty");
  const auto& axes = ragfuse::sweep_axes();
  if (std::find(axes.begin(), axes.end(), axis) == axes.end()) throw UsageError("unknown sweep axis: " + axis);
  Run run(out, "sweep", resume);
  within(run, [&] {
    json config = c.to_json();
    config["axis"] = axis;
    config["values"] = v;
    run.start(config, data, {{"results", "sweep.csv"}});
    const auto graph = ragfuse::load_dataset(data);
    const auto rows = ragfuse::sweep(graph, c, axis, v);
    write_file(run.output("results"), ragfuse::results_csv(axis, rows));
    json result = json::array();
    for (const auto& r : rows) result.push_back({{axis, r.label}, {"test", metrics_json(r.test)}, {"note", r.note}});
    return result;
  });
}

void cmd_similarity(const ConfigFlags& flags, const fs::path& data, const fs::path& out, bool resume) {
  const ragfuse::TrainConfig c = flags.train_config();
  if (!c.variant().has_semantic() || !c.variant().has_topology()) {
    throw UsageError("similarity needs a scheme with both encoders, got " + c.scheme);
  }
  Run run(out, "similarity", resume);
  within(run, [&] {
    run.start(c.to_json(), data, {{"similarity", "similarity.csv"}});
    const auto graph = ragfuse::load_dataset(data);
    ragfuse::TrainingContext ctx(graph, c);
    ragfuse::TrainHooks hooks;
    hooks.keep_snapshots = true;
    ragfuse::TrainResult r = ragfuse::train(ctx, c, hooks);
    std::vector<ragfuse::SimilarityPoint> points;
    points.push_back(r.initial_similarity.value_or(ragfuse::SimilarityPoint{}));
    const auto trace = ragfuse::similarity_trace(r.model, r.snapshots, ctx, ctx.probe());
    points.insert(points.end(), trace.begin(), trace.end());
    write_file(run.output("similarity"), ragfuse::similarity_csv(points, 0));
    json result;
    result["probe_size"] = ctx.probe().size();
    result["initial_cka"] = points.front().cka;
    result["final_cka"] = points.back().cka;
    return result;
  });
}

void cmd_params(const ConfigFlags& flags, const std::string& data, std::size_t feature_dim, std::size_t relations) {
  const ragfuse::TrainConfig c = flags.train_config();
  if (!data.empty()) {
    const auto m = ragfuse::read_manifest(data);
    feature_dim = m.feature_dim;
    relations = m.num_relations;
  }
  if (feature_dim == 0 || relations == 0) throw UsageError("--feature-dim and --relations must be positive");
  const ragfuse::Model model(c.model_config(feature_dim, relations));
  json j;
  j["scheme"] = c.scheme;
  j["feature_dim"] = feature_dim;
  j["relations"] = relations;
  j["dim"] = c.dim;
  j["semantic_encoder"] = model.semantic_parameter_count();
  j["topology_encoder"] = model.topology_parameter_count();
  j["fusion"] = model.fusion_parameter_count();
  j["classifier"] = model.classifier_parameter_count();
  j["total"] = model.params().count("");
  std::cout << dump(j);
}

void report_error(const std::string& type, const std::string& message) {
  std::cerr << json({{"error", type}, {"message", message}}).dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Relation-aware fraud detection with fused semantic and topological encoders"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ragfuse::kVersion));

  ConfigFlags flags;
  std::string data, out, ckpt, split = "test", schemes = "semantic_only,topology_only,full", axis, values;
  std::string features_csv, labels_csv, relation_names, eval_out;
  std::vector<std::string> edge_csvs;
  std::size_t feature_dim = 32, relations = 3;
  bool resume = false;

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  flags.attach(synth);
  synth->add_option("--out", out, "dataset directory")->required();

  auto* convert = app.add_subcommand("convert", "convert CSV dumps into a dataset directory");
  convert->add_option("--features", features_csv, "features CSV, one row per node")->required();
  convert->add_option("--labels", labels_csv, "labels CSV, node_id,label")->required();
  convert->add_option("--edges", edge_csvs, "edge CSV per relation (repeatable)")->required();
  convert->add_option("--relation-names", relation_names, "comma-separated relation names");
  convert->add_option("--out", out, "dataset directory")->required();

  auto add_run = [&](const char* name, const char* help) {
    auto* sub = app.add_subcommand(name, help);
    flags.attach(sub);
    sub->add_option("--data", data, "dataset directory")->required();
    sub->add_option("--out", out, "run directory")->required();
    sub->add_flag("--resume", resume, "finish an interrupted run; completed runs are left untouched");
    return sub;
  };
  auto* train = add_run("train", "train one model");
  auto* ablate = add_run("ablate", "train several schemes on one split");
  ablate->add_option("--schemes", schemes, "comma-separated schemes");
  auto* sweep = add_run("sweep", "train once per value of one hyper-parameter");
  sweep->add_option("--axis", axis, "train_ratio, transformer_layers, gcn_layers, d or max_hop")->required();
  sweep->add_option("--values", values, "comma-separated values")->required();
  auto* similarity = add_run("similarity", "per-epoch similarity between the two encoders");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--ckpt", ckpt, "checkpoint inside a completed run directory")->required();
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--split", split, "train, validation or test");
  eval->add_option("--out", eval_out, "write the metrics JSON here instead of stdout");

  auto* params = app.add_subcommand("params", "parameter counts per component");
  flags.attach(params);
  params->add_option("--data", data, "read dimensions from a dataset");
  params->add_option("--feature-dim", feature_dim, "input feature width");
  params->add_option("--relations", relations, "number of relations");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("usage", e.what());
    return 2;
  }

  try {
    if (*synth) cmd_synth(flags, out);
    else if (*convert) cmd_convert(features_csv, labels_csv, edge_csvs, relation_names, out);
    else if (*train) cmd_train(flags, data, out, resume);
    else if (*eval) cmd_eval(ckpt, data, split, eval_out);
    else if (*ablate) cmd_ablate(flags, data, out, schemes, resume);
    else if (*sweep) cmd_sweep(flags, data, out, axis, values, resume);
    else if (*similarity) cmd_similarity(flags, data, out, resume);
    else if (*params) cmd_params(flags, data, feature_dim, relations);
  } catch (const UsageError& e) {
    report_error("usage", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    report_error("invalid_argument", e.what());
    return 2;
  } catch (const std::out_of_range& e) {
    report_error("out_of_range", e.what());
    return 1;
  } catch (const std::exception& e) {
    report_error("runtime_error", e.what());
    return 1;
  }
  return 0;
}
