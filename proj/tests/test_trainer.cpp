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


#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "ragfuse/checkpoint.hpp"
#include "ragfuse/dataset.hpp"
#include "ragfuse/trainer.hpp"
#include "test_support.hpp"

namespace ragfuse {
namespace {

MultiRelationGraph synth(std::size_t n, double s, double h, std::uint64_t seed, double ff = 0.5) {
  SyntheticConfig c;
  c.num_nodes = n;
  c.feature_dim = 8;
  c.feature_separation = s;
  c.fraud_fraction = ff;
  c.relations = {{3.0, h}, {4.0, 0.5}};
  c.seed = seed;
  return generate_synthetic(c);
}

TrainConfig small(const std::string& scheme, std::size_t epochs, std::uint64_t seed = 1) {
  TrainConfig c;
  c.scheme = scheme;
  c.epochs = epochs;
  c.dim = 8;
  c.heads = 2;
  c.transformer_layers = 1;
  c.batch_size = 64;
  c.lr = 5e-3;
  c.seed = seed;
  return c;
}

std::vector<double> flat_params(const Model& m) {
  std::vector<double> out;
  for (const auto& e : m.params().entries()) out.insert(out.end(), e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

TEST(TrainConfig, DefaultsAndJsonRoundTrip) {
  const TrainConfig c;
  EXPECT_EQ(c.batch_size, 256u);
  EXPECT_EQ(c.lr, 1e-3);
  EXPECT_EQ(c.weight_decay, 1e-4);
  EXPECT_EQ(c.dim, 64u);
  EXPECT_EQ(c.heads, 4u);
  EXPECT_EQ(c.patience, 20u);
  EXPECT_EQ(c.train_ratio, 0.4);
  EXPECT_EQ(c.val_ratio, 0.1);
  EXPECT_EQ(c.probe_size, 512u);
  TrainConfig d = small("gated", 7, 3);
  EXPECT_EQ(TrainConfig::from_json(d.to_json()).to_json(), d.to_json());
}

TEST(TrainConfig, MergeRejectsUnknownKeysAndBadValues) {
  TrainConfig c;
  EXPECT_THROW(c.merge({{"epoch", 3}}), std::invalid_argument);
  EXPECT_THROW(c.merge({{"epochs", "three"}}), std::invalid_argument);
  c.merge({{"epochs", 3}, {"scheme", "concat"}});
  EXPECT_EQ(c.epochs, 3u);
  EXPECT_EQ(c.scheme, "concat");
}

TEST(TrainConfig, Validation) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](auto& c) { c.scheme = "nope"; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.dim = 10; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.batch_size = 0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.max_hop = 0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.dropout = 1.0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.lr = 0.0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.propagation = "sideways"; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.f1_threshold = "tuned"; }).validate(), std::invalid_argument);
  EXPECT_NO_THROW(TrainConfig().validate());
}

TEST(Train, IdenticalSeedsGiveIdenticalRuns) {
  const auto g = synth(240, 1.0, 0.8, 5);
  for (const char* scheme : {"full", "semantic_only", "gated"}) {
    const auto a = train(g, small(scheme, 3));
    const auto b = train(g, small(scheme, 3));
    EXPECT_EQ(epochs_csv(a.reports), epochs_csv(b.reports)) << scheme;
    EXPECT_EQ(flat_params(a.model), flat_params(b.model)) << scheme;
    EXPECT_EQ(encode_checkpoint(a.model.params()), encode_checkpoint(b.model.params()));
  }
  const auto c = train(g, small("full", 3, 2));
  const auto d = train(g, small("full", 3, 1));
  EXPECT_NE(flat_params(c.model), flat_params(d.model));
}

TEST(Train, UntrainedModelIsNearChanceOnNullData) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = synth(600, 0.0, 0.5, 100 + seed);
    TrainConfig c = small("full", 0, seed);
    TrainingContext ctx(g, c);
    const auto r = train(ctx, c);
    EXPECT_TRUE(r.reports.empty());
    EXPECT_EQ(r.best_epoch, 0u);
    const double auc = evaluate(r.model, ctx, ctx.split().test).auc;
    EXPECT_GE(auc, 0.35) << seed;
    EXPECT_LE(auc, 0.65) << seed;
  }
}

TEST(Train, SemanticOnlyLearnsNothingWithoutSignal) {
  // No feature separation and h = 0.5 on a balanced set: trained AUC should
  // sit inside a 95% interval around 0.5 estimated from the seeds themselves.
  std::vector<double> aucs;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto g = synth(400, 0.0, 0.5, 200 + seed);
    TrainConfig c = small("semantic_only", 4, seed);
    TrainingContext ctx(g, c);
    const auto r = train(ctx, c);
    aucs.push_back(evaluate(r.model, ctx, ctx.split().test).auc);
  }
  const double mean = std::accumulate(aucs.begin(), aucs.end(), 0.0) / 10.0;
  double var = 0.0;
  for (double a : aucs) var += (a - mean) * (a - mean);
  const double se = std::sqrt(var / 9.0) / std::sqrt(10.0);
  EXPECT_LE(std::abs(mean - 0.5), 2.262 * se + 0.01) << "mean " << mean << " se " << se;
}

TEST(Train, LossDecreasesOnLearnableData) {
  const auto g = synth(300, 1.5, 0.9, 7);
  TrainConfig c = small("full", 20);
  c.patience = 0;
  const auto r = train(g, c);
  ASSERT_EQ(r.reports.size(), 20u);
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    first += r.reports[i].train_loss;
    last += r.reports[10 + i].train_loss;
  }
  EXPECT_LT(last, first);
  EXPECT_GT(r.reports.back().test.auc, 0.8);
}

TEST(Train, EarlyStoppingRestoresBestValidationParameters) {
  const auto g = synth(300, 1.0, 0.7, 8);
  TrainConfig c = small("topology_only", 30);
  c.patience = 2;
  TrainingContext ctx(g, c);
  std::size_t seen = 0;
  TrainHooks hooks;
  hooks.on_epoch = [&](const EpochReport& r) { EXPECT_EQ(r.epoch, ++seen); };
  const auto r = train(ctx, c, hooks);
  EXPECT_EQ(seen, r.reports.size());
  ASSERT_GE(r.best_epoch, 1u);
  EXPECT_LE(r.reports.size(), r.best_epoch + c.patience);
  const auto val = evaluate(r.model, ctx, ctx.split().validation, r.threshold);
  EXPECT_EQ(val.auc, r.reports[r.best_epoch - 1].validation.auc);
  for (const auto& rep : r.reports) {
    if (rep.epoch != r.best_epoch) {
      EXPECT_LE(rep.validation.auc, r.reports[r.best_epoch - 1].validation.auc);
    }
  }
}

TEST(Train, NonFiniteLossAborts) {
  auto g0 = synth(100, 1.0, 0.7, 9);
  Matrix f = g0.features();
  for (double& v : f.data) v = std::numeric_limits<double>::quiet_NaN();
  std::vector<EdgeList> edges(2);
  const auto g = build_graph(edges, std::move(f), g0.labels());
  try {
    train(g, small("topology_only", 1));
    FAIL() << "expected abort";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite loss at epoch 1"), std::string::npos);
  }
}

TEST(Evaluate, DeterministicAndPropagatesSingleClassError) {
  const auto g = synth(200, 1.0, 0.8, 10);
  TrainConfig c = small("full", 1);
  c.dropout = 0.3;
  TrainingContext ctx(g, c);
  const auto r = train(ctx, c);
  const auto a = evaluate(r.model, ctx, ctx.split().test);
  const auto b = evaluate(r.model, ctx, ctx.split().test);
  EXPECT_EQ(a.auc, b.auc);
  EXPECT_EQ(a.ap, b.ap);
  EXPECT_EQ(a.f1_macro, b.f1_macro);
  // chunking changes only the rounding of the batched products
  const auto whole = predict(r.model, ctx, ctx.split().test);
  const auto chunked = predict(r.model, ctx, ctx.split().test, 5);
  ASSERT_EQ(whole.size(), chunked.size());
  for (std::size_t i = 0; i < whole.size(); ++i) EXPECT_NEAR(whole[i], chunked[i], 1e-12);
  const std::vector<NodeId> one{ctx.split().test.front()};
  try {
    evaluate(r.model, ctx, one);
    FAIL() << "expected an error";
  } catch (const std::invalid_argument& e) {
    EXPECT_STREQ(e.what(), "single-class input");
  }
}

TEST(Leakage, ShufflingTestLabelsChangesNoScore) {
  const auto g = synth(300, 1.0, 0.8, 11);
  TrainConfig c = small("full", 3);
  TrainingContext ctx(g, c);
  const auto r = train(ctx, c);

  std::vector<int> labels = g.labels();
  std::vector<int> test_labels;
  for (NodeId v : ctx.split().test) test_labels.push_back(labels[v]);
  std::mt19937_64 gen(12);
  std::shuffle(test_labels.begin(), test_labels.end(), gen);
  for (std::size_t i = 0; i < test_labels.size(); ++i) labels[ctx.split().test[i]] = 1 - labels[ctx.split().test[i]];
  std::vector<EdgeList> edges(g.num_relations());
  for (std::size_t rel = 0; rel < g.num_relations(); ++rel) {
    for (std::size_t u = 0; u < g.num_nodes(); ++u) {
      for (NodeId v : g.adjacency(rel).neighbors(u)) edges[rel].emplace_back(u, v);
    }
  }
  const auto g2 = build_graph(edges, g.features(), labels);
  TrainingContext ctx2(g2, c, ctx.split());
  EXPECT_EQ(predict(r.model, ctx, ctx.split().test), predict(r.model, ctx2, ctx.split().test));
  EXPECT_EQ(predict(r.model, ctx, ctx.split().train), predict(r.model, ctx2, ctx.split().train));

  // Retraining on the relabeled graph with the same split reaches the same parameters.
  const auto r2 = train(ctx2, c);
  EXPECT_EQ(flat_params(r.model), flat_params(r2.model));
}

TEST(TrainingContext, ExplicitSplitIsValidated) {
  const auto g = synth(50, 1.0, 0.8, 13);
  const TrainConfig c = small("full", 1);
  NodeSplit bad{{0, 50}, {}, {}};
  EXPECT_THROW(TrainingContext(g, c, bad), std::out_of_range);
  NodeSplit unsorted{{3, 1}, {}, {}};
  EXPECT_THROW(TrainingContext(g, c, unsorted), std::invalid_argument);
}

TEST(TrainingContext, ProbeIsSortedSubsetOfTest) {
  const auto g = synth(400, 1.0, 0.8, 14);
  TrainConfig c = small("full", 1);
  c.probe_size = 50;
  TrainingContext ctx(g, c);
  const auto& probe = ctx.probe();
  EXPECT_EQ(probe.size(), 50u);
  EXPECT_TRUE(std::is_sorted(probe.begin(), probe.end()));
  const std::set<NodeId> test(ctx.split().test.begin(), ctx.split().test.end());
  for (NodeId v : probe) EXPECT_TRUE(test.count(v));
  c.probe_size = 10000;
  EXPECT_EQ(TrainingContext(g, c).probe().size(), ctx.split().test.size());
}

TEST(Model, EncoderOnlyModesUseDisjointParameterSubsets) {
  const TrainConfig c;
  const auto full = Model(c.model_config(32, 3));
  TrainConfig s = c;
  s.scheme = "semantic_only";
  TrainConfig t = c;
  t.scheme = "topology_only";
  const auto sem = Model(s.model_config(32, 3));
  const auto topo = Model(t.model_config(32, 3));
  EXPECT_EQ(sem.topology_parameter_count(), 0u);
  EXPECT_EQ(topo.semantic_parameter_count(), 0u);
  EXPECT_EQ(sem.fusion_parameter_count() + topo.fusion_parameter_count(), 0u);
  EXPECT_EQ(sem.semantic_parameter_count(), full.semantic_parameter_count());
  EXPECT_EQ(topo.topology_parameter_count(), full.topology_parameter_count());
  for (const auto& e : sem.params().entries()) EXPECT_TRUE(e.name.starts_with("semantic.") || e.name.starts_with("classifier."));
  for (const auto& e : topo.params().entries()) EXPECT_TRUE(e.name.starts_with("topology.") || e.name.starts_with("classifier."));
  EXPECT_LT(full.topology_parameter_count(), full.semantic_parameter_count());
}

TEST(Similarity, IndependentRandomEncodersAreDissimilar) {
  // Label-free features: a class-mean shift would add a direction shared by
  // both encoders and lift CKA regardless of their independence.
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SyntheticConfig sc;
    sc.num_nodes = 1100;
    sc.feature_dim = 64;
    sc.feature_separation = 0.0;
    sc.relations = {{3.0, 0.7}, {4.0, 0.5}};
    sc.seed = 300 + seed;
    const auto g = generate_synthetic(sc);
    TrainConfig c;
    c.seed = seed;
    c.epochs = 0;
    TrainingContext ctx(g, c);
    ASSERT_EQ(ctx.probe().size(), 512u);
    const auto r = train(ctx, c);
    ASSERT_TRUE(r.initial_similarity.has_value());
    EXPECT_LT(r.initial_similarity->cka, 0.3) << seed;
    EXPECT_FALSE(r.initial_similarity->degenerate);
  }
}

TEST(Similarity, TraceMatchesPerEpochReportsAndSelfCkaIsOne) {
  const auto g = synth(300, 1.0, 0.8, 15);
  TrainConfig c = small("full", 3);
  c.patience = 0;
  TrainingContext ctx(g, c);
  TrainHooks hooks;
  hooks.keep_snapshots = true;
  auto r = train(ctx, c, hooks);
  ASSERT_EQ(r.snapshots.size(), 3u);
  const auto trace = similarity_trace(r.model, r.snapshots, ctx, ctx.probe());
  ASSERT_EQ(trace.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(trace[i].cka, r.reports[i].similarity->cka);
    EXPECT_EQ(trace[i].cosine, r.reports[i].similarity->cosine);
  }
  const auto e = embed_nodes(r.model, ctx, ctx.probe(), 100);
  EXPECT_NEAR(linear_cka(flatten_embeddings(e.semantic), flatten_embeddings(e.semantic)), 1.0, 1e-12);
  const std::string csv = similarity_csv(trace);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,cos_sim,cka,degenerate");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

  Model sem(small("semantic_only", 1).model_config(8, 2));
  EXPECT_THROW(similarity_at(sem, ctx, ctx.probe()), std::invalid_argument);
}

TEST(Reports, EpochCsvLayout) {
  const auto g = synth(200, 1.0, 0.8, 16);
  TrainConfig c = small("full", 2);
  c.patience = 0;
  const auto r = train(g, c);
  const std::string csv = epochs_csv(r.reports);
  std::istringstream is(csv);
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "epoch,loss,val_auc,val_ap,val_f1,test_auc,test_ap,test_f1,cos_sim,cka,seconds");
  std::size_t rows = 0;
  while (std::getline(is, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 10);
    EXPECT_EQ(line.substr(line.rfind(',') + 1), "0");
  }
  EXPECT_EQ(rows, 2u);
  EXPECT_NE(epochs_csv(r.reports, true), csv);
  const std::string timing = timing_csv(r.reports);
  EXPECT_EQ(timing.substr(0, timing.find('\n')), "epoch,seconds");

  const auto topo = train(g, small("topology_only", 1));
  const std::string tcsv = epochs_csv(topo.reports);
  EXPECT_NE(tcsv.find(",nan,nan,0\n"), std::string::npos);
}

TEST(Drivers, AblateProducesOneRowPerScheme) {
  const auto g = synth(200, 1.0, 0.8, 17);
  const std::vector<std::string> schemes{"attention_res", "attention_no_res", "concat", "add", "gated"};
  const auto rows = ablate(g, small("full", 1), schemes);
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(rows[i].label, schemes[i]);
    for (double v : {rows[i].test.auc, rows[i].test.ap, rows[i].test.f1_macro, rows[i].validation.auc}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  const std::string csv = results_csv("scheme", rows);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "scheme,auc,ap,f1_macro,best_epoch,note");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_THROW(ablate(g, small("full", 1), {"full", "wat"}), std::invalid_argument);
}

TEST(Drivers, SweepAxes) {
  const auto g = synth(200, 1.0, 0.8, 18);
  const auto ratios = sweep(g, small("topology_only", 1), "train_ratio", {0.1, 0.2, 0.3, 0.4});
  ASSERT_EQ(ratios.size(), 4u);
  EXPECT_EQ(ratios[0].label, "0.10000000000000001");
  const auto hops = sweep(g, small("semantic_only", 1), "max_hop", {1, 2});
  ASSERT_EQ(hops.size(), 2u);
  EXPECT_EQ(hops[0].note.rfind("auc_spread=", 0), 0u);
  EXPECT_EQ(hops[0].note, hops[1].note);
  const double spread = std::stod(hops[0].note.substr(11));
  EXPECT_NEAR(spread, std::abs(hops[0].test.auc - hops[1].test.auc), 1e-15);
  EXPECT_THROW(sweep(g, small("full", 1), "lr", {0.1}), std::invalid_argument);
  EXPECT_THROW(sweep(g, small("full", 1), "d", {2.5}), std::invalid_argument);
  EXPECT_THROW(sweep(g, small("full", 1), "max_hop", {0}), std::invalid_argument);
}

TEST(Drivers, WidthSweepFlagsLargeDrops) {
  const auto g = synth(200, 1.0, 0.8, 19);
  TrainConfig c = small("topology_only", 2);
  const auto rows = sweep(g, c, "d", {2, 64});
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].note, "");
  EXPECT_EQ(rows[0].note, rows[0].test.auc < rows[1].test.auc - 0.01 ? "auc_drop_vs_d64" : "");
}

}  // namespace
}  // namespace ragfuse
