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


// Drives the ragfuse binary as a subprocess.

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <sys/wait.h>

#include "json.hpp"
#include "ragfuse/dataset.hpp"
#include "test_support.hpp"

namespace ragfuse {
namespace {

using json = nlohmann::json;

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

class Cli : public ::testing::Test {
 protected:
  Result run(const std::string& args) {
    const fs::path out = dir_.path() / "stdout.txt";
    const fs::path err = dir_.path() / "stderr.txt";
    const std::string cmd = "cd '" + dir_.path().string() + "' && '" RAGFUSE_CLI_PATH "' " + args + " > '" +
                            out.string() + "' 2> '" + err.string() + "'";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  fs::path at(const std::string& rel) const { return dir_.path() / rel; }

  // Small dataset plus a short-training flag set shared by most tests.
  void make_data(const std::string& name = "d") {
    const auto r = run("synth --out " + name + " --set num_nodes=240 --set feature_dim=6 --seed 4");
    ASSERT_EQ(r.code, 0) << r.err;
  }
  static std::string quick() { return " --set epochs=2 --set dim=8 --set heads=2 --set transformer_layers=1 "; }

  static void expect_error_line(const Result& r, const std::string& type) {
    EXPECT_NE(r.code, 0);
    ASSERT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
    const json j = json::parse(r.err);
    EXPECT_EQ(j.at("error"), type) << r.err;
    EXPECT_FALSE(j.at("message").get<std::string>().empty());
  }

  testing::TempDir dir_{"cli"};
};

TEST_F(Cli, SynthThenTrainProducesManifestedRun) {
  make_data();
  const auto r = run("train --data d --out r" + quick());
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"manifest.json", "epochs.csv", "best.ckpt"}) EXPECT_TRUE(fs::exists(at("r") / f)) << f;
  const json m = json::parse(slurp(at("r/manifest.json")));
  EXPECT_EQ(m.at("status"), "complete");
  EXPECT_EQ(m.at("command"), "train");
  EXPECT_EQ(m.at("config").at("epochs"), 2);
  EXPECT_EQ(m.at("dataset").at("checksums"), json::parse(dataset_checksums(at("d")).dump()));
  // every file in the run directory is referenced by the manifest
  std::set<std::string> listed{"manifest.json"};
  for (const auto& [key, name] : m.at("outputs").items()) listed.insert(name.get<std::string>());
  std::set<std::string> present;
  for (const auto& e : fs::directory_iterator(at("r"))) present.insert(e.path().filename().string());
  EXPECT_EQ(listed, present);
  const std::string epochs = slurp(at("r/epochs.csv"));
  EXPECT_EQ(std::count(epochs.begin(), epochs.end(), '\n'), 3);
}

TEST_F(Cli, EvalIsByteIdentical) {
  make_data();
  ASSERT_EQ(run("train --data d --out r" + quick()).code, 0);
  const auto a = run("eval --ckpt r/best.ckpt --data d");
  const auto b = run("eval --ckpt r/best.ckpt --data d");
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
  const json j = json::parse(a.out);
  EXPECT_EQ(j.at("split"), "test");
  EXPECT_TRUE(j.at("dataset_matches_run").get<bool>());
  const json metrics = json::parse(slurp(at("r/metrics.json")));
  EXPECT_EQ(j.at("metrics").at("auc"), metrics.at("test").at("auc"));
  ASSERT_EQ(run("eval --ckpt r/best.ckpt --data d --split validation --out v.json").code, 0);
  EXPECT_EQ(json::parse(slurp(at("v.json"))).at("metrics").at("auc"), metrics.at("validation").at("auc"));
  expect_error_line(run("eval --ckpt r/best.ckpt --data d --split everything"), "usage");
  expect_error_line(run("eval --ckpt missing/best.ckpt --data d"), "runtime_error");
}

TEST_F(Cli, IdenticalInvocationsGiveIdenticalArtifacts) {
  make_data();
  ASSERT_EQ(run("train --data d --out a" + quick()).code, 0);
  ASSERT_EQ(run("train --data d --out b" + quick()).code, 0);
  EXPECT_EQ(slurp(at("a/epochs.csv")), slurp(at("b/epochs.csv")));
  EXPECT_EQ(slurp(at("a/best.ckpt")), slurp(at("b/best.ckpt")));
  EXPECT_EQ(slurp(at("a/similarity.csv")), slurp(at("b/similarity.csv")));
  ASSERT_EQ(run("synth --out d2 --set num_nodes=240 --set feature_dim=6 --seed 4").code, 0);
  EXPECT_EQ(dataset_checksums(at("d")), dataset_checksums(at("d2")));
}

TEST_F(Cli, ResumeNeverOverwritesCompletedRun) {
  make_data();
  ASSERT_EQ(run("train --data d --out r" + quick()).code, 0);
  const std::string ckpt = slurp(at("r/best.ckpt"));
  const std::string manifest = slurp(at("r/manifest.json"));
  expect_error_line(run("train --data d --out r" + quick()), "runtime_error");
  const auto resumed = run("train --data d --out r --resume" + quick());
  EXPECT_EQ(resumed.code, 0);
  EXPECT_TRUE(json::parse(resumed.out).at("skipped").get<bool>());
  EXPECT_EQ(slurp(at("r/best.ckpt")), ckpt);
  EXPECT_EQ(slurp(at("r/manifest.json")), manifest);
}

TEST_F(Cli, FailedRunIsMarkedAndPartialOutputsRemoved) {
  // NaN features drive the loss non-finite after the manifest exists.
  Matrix f(20, 2, std::numeric_limits<double>::quiet_NaN());
  std::vector<int> labels(20);
  for (std::size_t i = 0; i < 20; ++i) labels[i] = static_cast<int>(i % 2);
  save_dataset(build_graph({{}}, std::move(f), labels), at("nan"));
  const auto r = run("train --data nan --out r --set scheme=topology_only" + quick());
  expect_error_line(r, "runtime_error");
  const json m = json::parse(slurp(at("r/manifest.json")));
  EXPECT_EQ(m.at("status"), "failed");
  EXPECT_NE(m.at("error").get<std::string>().find("non-finite loss"), std::string::npos);
  for (const auto& e : fs::directory_iterator(at("r"))) EXPECT_EQ(e.path().filename(), "manifest.json");
  // an unfinished run needs --resume, and --resume must repeat the recorded config
  expect_error_line(run("train --data nan --out r --set scheme=topology_only" + quick()), "runtime_error");
  const auto changed = run("train --data nan --out r --resume --set scheme=topology_only --set epochs=5");
  expect_error_line(changed, "runtime_error");
  EXPECT_NE(changed.err.find("differs"), std::string::npos);
  expect_error_line(run("train --data nan --out r --resume --set scheme=topology_only" + quick()), "runtime_error");
}

TEST_F(Cli, ConfigErrorsAreOneLineAndNonzero) {
  make_data();
  expect_error_line(run("train --data d --out r --set epoch=3"), "invalid_argument");
  expect_error_line(run("train --data d --out r --set novalue"), "usage");
  expect_error_line(run("train --data d --out r --set scheme=mean"), "invalid_argument");
  expect_error_line(run("train --data nowhere --out r2"), "runtime_error");
  expect_error_line(run("synth --out s --set relations.3.homophily=0.2"), "invalid_argument");
  expect_error_line(run("synth --out s --set fraud_fraction=2"), "invalid_argument");
  expect_error_line(run("frobnicate"), "usage");
  expect_error_line(run("train --out r"), "usage");
  EXPECT_FALSE(fs::exists(at("r")));
}

TEST_F(Cli, ConfigFileAndOverridesCompose) {
  make_data();
  {
    std::ofstream os(at("c.json"));
    os << R"({"epochs": 1, "dim": 8, "heads": 2, "scheme": "concat"})";
  }
  ASSERT_EQ(run("train --data d --out r --config c.json --set scheme=gated --seed 9").code, 0);
  const json m = json::parse(slurp(at("r/manifest.json")));
  EXPECT_EQ(m.at("config").at("scheme"), "gated");
  EXPECT_EQ(m.at("config").at("epochs"), 1);
  EXPECT_EQ(m.at("config").at("seed"), 9);
  {
    std::ofstream os(at("bad.json"));
    os << R"({"epochs": 1, "learning_rate": 0.1})";
  }
  expect_error_line(run("train --data d --out r3 --config bad.json"), "invalid_argument");
  {
    std::ofstream os(at("s.json"));
    os << R"({"num_nodes": 100, "relations": [{"mean_degree": 2, "homophily": 1.0}]})";
  }
  ASSERT_EQ(run("synth --config s.json --out ds --set relations.0.mean_degree=3").code, 0);
  const json dm = json::parse(slurp(at("ds/manifest.json")));
  EXPECT_EQ(dm.at("num_nodes"), 100);
  EXPECT_EQ(dm.at("generator").at("relations").at(0).at("mean_degree"), 3.0);
}

TEST_F(Cli, ParamsReportsComponentCounts) {
  const auto r = run("params");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_LT(j.at("topology_encoder").get<std::size_t>() * 4, j.at("semantic_encoder").get<std::size_t>());
  EXPECT_EQ(j.at("total").get<std::size_t>(),
            j.at("semantic_encoder").get<std::size_t>() + j.at("topology_encoder").get<std::size_t>() +
                j.at("fusion").get<std::size_t>() + j.at("classifier").get<std::size_t>());
  const json topo = json::parse(run("params --set scheme=topology_only --feature-dim 8 --relations 2").out);
  EXPECT_EQ(topo.at("semantic_encoder"), 0);
  EXPECT_EQ(topo.at("topology_encoder"), 2 * (8 * 64 + 64 * 64));
}

TEST_F(Cli, ConvertBuildsDataset) {
  {
    std::ofstream(at("f.csv")) << "a,b\n1,2\n3,4\n5,6\n";
    std::ofstream(at("l.csv")) << "0,1\n1,0\n2,0\n";
    std::ofstream(at("e0.csv")) << "0,1\n1,2\n";
    std::ofstream(at("e1.csv")) << "2,0\n";
  }
  const auto r = run("convert --features f.csv --labels l.csv --edges e0.csv --edges e1.csv --relation-names u,v --out c");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto g = load_dataset(at("c"));
  EXPECT_EQ(g.num_nodes(), 3u);
  EXPECT_EQ(g.relation_names(), (std::vector<std::string>{"u", "v"}));
  EXPECT_EQ(slurp(at("c/edges_1.csv")), "0,2\n");
  expect_error_line(run("convert --features f.csv --labels l.csv --edges e0.csv --out c"), "runtime_error");
  std::ofstream(at("bad.csv")) << "1,2\n3\n";
  expect_error_line(run("convert --features bad.csv --labels l.csv --edges e0.csv --out c2"), "runtime_error");
}

TEST_F(Cli, AblateSweepAndSimilarityWriteCsv) {
  make_data();
  ASSERT_EQ(run("ablate --data d --out ab --schemes attention_res,add,gated" + quick()).code, 0);
  const std::string ab = slurp(at("ab/ablation.csv"));
  EXPECT_EQ(ab.substr(0, ab.find('\n')), "scheme,auc,ap,f1_macro,best_epoch,note");
  EXPECT_EQ(std::count(ab.begin(), ab.end(), '\n'), 4);

  ASSERT_EQ(run("sweep --data d --out sw --axis max_hop --values 1,2 --set scheme=semantic_only" + quick()).code, 0);
  const std::string sw = slurp(at("sw/sweep.csv"));
  EXPECT_EQ(sw.substr(0, sw.find('\n')), "max_hop,auc,ap,f1_macro,best_epoch,note");
  EXPECT_NE(sw.find("auc_spread="), std::string::npos);
  expect_error_line(run("sweep --data d --out sw2 --axis lr --values 1"), "usage");
  expect_error_line(run("sweep --data d --out sw3 --axis d --values 8,x"), "usage");
  expect_error_line(run("ablate --data d --out ab2 --schemes full,nope"), "invalid_argument");

  ASSERT_EQ(run("similarity --data d --out sim" + quick()).code, 0);
  const std::string sim = slurp(at("sim/similarity.csv"));
  EXPECT_EQ(sim.substr(0, sim.find('\n')), "epoch,cos_sim,cka,degenerate");
  EXPECT_EQ(std::count(sim.begin(), sim.end(), '\n'), 4);  // header, epoch 0, epochs 1-2
  EXPECT_EQ(sim.substr(sim.find('\n') + 1, 2), "0,");
  expect_error_line(run("similarity --data d --out sim2 --set scheme=semantic_only"), "usage");
}

}  // namespace
}  // namespace ragfuse
