// Copyright 2026 The Salprune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <random>
#include <set>

#include "salprune/baselines.h"
#include "salprune/errors.h"
#include "salprune/metrics.h"
#include "salprune/pruner.h"
#include "test_util.h"

namespace salprune {
namespace {

// input -> a (conv, width w) -> a.bn -> a.act -> out (head, 6 channels)
ModelGraph Chain(int width) {
  ModelGraph g;
  g.AddNode({"input", NodeKind::kInput, {}, 3, 3, 1, 1, 1, false, false});
  g.AddNode({"a", NodeKind::kConv, {"input"}, 3, width, 3, 1, 1, false, true});
  g.AddNode({"a.bn", NodeKind::kNorm, {"a"}, width, width, 1, 1, 1, false, false});
  g.AddNode({"a.act", NodeKind::kActivation, {"a.bn"}, width, width, 1, 1, 1, false, false});
  g.AddNode({"b", NodeKind::kConv, {"a.act"}, width, width, 1, 1, 1, false, true});
  g.PropagateShapes();
  return g;
}

ImportanceTables Tables(const ModelGraph& g, const std::map<std::string, std::vector<double>>& s) {
  ImportanceTables t;
  for (const auto& [id, scores] : s) t[id] = {id, scores, 1};
  (void)g;
  return t;
}

std::vector<int> RemovedFor(const PruningPlan& plan, const std::string& member) {
  for (const auto& gp : plan.groups) {
    for (const auto& m : gp.members) {
      if (m == member) return gp.removed;
    }
  }
  return {};
}

ImportanceTables RandomTables(const Detector& d, uint64_t seed) {
  ImportanceTables t;
  for (const auto& id : DefaultTapLayers(d.graph())) {
    t[id] = RandomImportance(d.graph().node(id).out_channels, seed + d.graph().IndexOf(id));
    t[id].node_id = id;
  }
  return t;
}

TEST(BuildGroupsTest, ChainGivesSingletons) {
  const auto groups = BuildGroups(Chain(4));
  ASSERT_EQ(groups.size(), 2u);
  EXPECT_EQ(groups[0].members, std::vector<std::string>{"a"});
  EXPECT_EQ(groups[1].members, std::vector<std::string>{"b"});
}

TEST(BuildGroupsTest, ToyDetectorCouplesResidualAndFreezesInterfaces) {
  const Detector d = BuildToyDetector(3, 1.0, 0);
  const auto groups = BuildGroups(d.graph());
  std::set<std::string> seen;
  for (const auto& g : groups) {
    for (const auto& m : g.members) {
      EXPECT_TRUE(seen.insert(m).second) << m;
      EXPECT_EQ(d.graph().node(m).out_channels, g.width);
    }
    const bool has_s3a = std::find(g.members.begin(), g.members.end(), "s3a") != g.members.end();
    if (has_s3a) {
      EXPECT_EQ(g.members, (std::vector<std::string>{"s3a", "s3b"}));
      EXPECT_TRUE(g.prunable);
    }
    for (const auto& m : g.members) {
      if (m == "stem" || m == "pred8" || m == "pred16") EXPECT_FALSE(g.prunable) << m;
    }
  }
}

TEST(MakePlanTest, ZeroRateIsEmpty) {
  const ModelGraph g = Chain(4);
  const auto plan = MakePlan(Tables(g, {{"a", {1, 2, 3, 4}}, {"b", {1, 2, 3, 4}}}), g, 0.0, 8, 8);
  for (const auto& gp : plan.groups) EXPECT_TRUE(gp.removed.empty());
  EXPECT_EQ(plan.params_before, plan.params_after);
  EXPECT_EQ(plan.flops_before, plan.flops_after);
}

TEST(MakePlanTest, AscendingSortRemovesLowest) {
  const ModelGraph g = Chain(10);
  std::vector<double> s;
  for (int k = 0; k < 10; ++k) s.push_back(0.1 * (k + 1));
  const auto plan = MakePlan(Tables(g, {{"a", s}, {"b", s}}), g, 0.3, 8, 8);
  EXPECT_EQ(RemovedFor(plan, "a"), (std::vector<int>{0, 1, 2}));
}

TEST(MakePlanTest, TiesBrokenByLowerIndex) {
  const ModelGraph g = Chain(4);
  const auto plan =
      MakePlan(Tables(g, {{"a", {0.5, 0.5, 0.2, 0.9}}, {"b", {1, 1, 1, 1}}}), g, 0.5, 8, 8);
  EXPECT_EQ(RemovedFor(plan, "a"), (std::vector<int>{2, 0}));
  EXPECT_EQ(RemovedFor(plan, "b"), (std::vector<int>{0, 1}));
}

TEST(MakePlanTest, KeepsAtLeastOneChannel) {
  const ModelGraph g = Chain(1);
  const auto plan = MakePlan(Tables(g, {{"a", {0.5}}, {"b", {0.5}}}), g, 0.99, 8, 8);
  for (const auto& gp : plan.groups) EXPECT_EQ(gp.keep, 1);
}

TEST(MakePlanTest, Errors) {
  const ModelGraph g = Chain(4);
  const auto t = Tables(g, {{"a", {1, 2, 3, 4}}, {"b", {1, 2, 3, 4}}});
  EXPECT_THROW(MakePlan(t, g, 1.0, 8, 8), ConfigError);
  EXPECT_THROW(MakePlan(t, g, -0.1, 8, 8), ConfigError);
  try {
    MakePlan(Tables(g, {{"a", {1, 2, 3, 4}}}), g, 0.5, 8, 8);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("b"), std::string::npos);
  }
}

TEST(MakePlanTest, ScaleInvariantAndByteDeterministic) {
  const Detector d = BuildToyDetector(3, 0.5, 0);
  const ImportanceTables t = RandomTables(d, 3);
  ImportanceTables scaled = t;
  for (auto& [id, table] : scaled) {
    for (double& s : table.scores) s *= 7.5;
  }
  const auto a = MakePlan(t, d.graph(), 0.4, 64, 64);
  const auto b = MakePlan(scaled, d.graph(), 0.4, 64, 64);
  const auto c = MakePlan(t, d.graph(), 0.4, 64, 64);
  ASSERT_EQ(a.groups.size(), b.groups.size());
  for (size_t i = 0; i < a.groups.size(); ++i) EXPECT_EQ(a.groups[i].removed, b.groups[i].removed);
  EXPECT_EQ(PlanToJson(a).dump(), PlanToJson(c).dump());
}

TEST(MakePlanTest, JsonRoundTrip) {
  const Detector d = BuildToyDetector(3, 0.5, 0);
  const auto plan = MakePlan(RandomTables(d, 1), d.graph(), 0.3, 64, 64, {{"k", "v"}});
  EXPECT_EQ(PlanToJson(PlanFromJson(PlanToJson(plan))).dump(), PlanToJson(plan).dump());
}

TEST(ApplyPlanTest, EmptyPlanIsBitwiseIdentity) {
  const Detector d = BuildToyDetector(3, 0.5, 2);
  const auto plan = MakePlan(RandomTables(d, 1), d.graph(), 0.0, 64, 64);
  const Detector p = ApplyPlan(d, plan);
  EXPECT_EQ(p, d);
}

TEST(ApplyPlanTest, CostsMatchPlanAndDecreaseWithRate) {
  const Detector d = BuildToyDetector(3, 1.0, 2);
  const auto tables = RandomTables(d, 5);
  int64_t last_params = d.ParamCount() + 1;
  int64_t last_flops = CountFlops(d.graph(), 128, 128) + 1;
  for (double r : {0.1, 0.3, 0.5, 0.7}) {
    const auto plan = MakePlan(tables, d.graph(), r, 128, 128);
    const Detector p = ApplyPlan(d, plan);
    EXPECT_NO_THROW(p.graph().Validate());
    EXPECT_EQ(p.ParamCount(), plan.params_after) << r;
    EXPECT_EQ(CountParams(p.graph()), plan.params_after) << r;
    EXPECT_EQ(CountFlops(p.graph(), 128, 128), plan.flops_after) << r;
    EXPECT_LT(plan.params_after, last_params);
    EXPECT_LT(plan.flops_after, last_flops);
    last_params = plan.params_after;
    last_flops = plan.flops_after;
    const Tensor image(3, 64, 64, 0.4);
    const auto pred = p.PredictionFor(p.Forward(std::span<const Tensor>(&image, 1), Mode::kEval), 0);
    EXPECT_EQ(pred.heads()[0].raw.channels(), HeadChannels(3));
  }
}

TEST(ApplyPlanTest, DoesNotMutateInputAndRejectsMismatch) {
  const Detector d = BuildToyDetector(3, 0.5, 2);
  const Detector copy = d;
  auto plan = MakePlan(RandomTables(d, 1), d.graph(), 0.5, 64, 64);
  ApplyPlan(d, plan);
  EXPECT_EQ(d, copy);
  plan.groups[0].removed.push_back(10000);
  EXPECT_THROW(ApplyPlan(d, plan), std::exception);
  EXPECT_EQ(d, copy);
}

TEST(ApplyPlanTest, RemovingZeroedChannelsPreservesOutputs) {
  Detector d = BuildToyDetector(3, 0.5, 4);
  // make running statistics non-trivial
  const Dataset data = testing::TinyDataset(4, 64, 2, 3);
  std::vector<Tensor> images;
  for (const auto& s : data.samples) images.push_back(s.image);
  d.UpdateRunningStats(d.Forward(images, Mode::kTrain));

  std::mt19937_64 rng(8);
  const auto groups = BuildGroups(d.graph());
  PruningPlan plan;
  plan.rate = 0.3;
  plan.input_h = plan.input_w = 64;
  for (const auto& g : groups) {
    if (!g.prunable) continue;
    std::vector<int> idx(g.width);
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    const int k = static_cast<int>(0.3 * g.width);
    idx.resize(k);
    ZeroGroupChannels(d, g, idx);
    GroupPlan gp;
    gp.group = g.id;
    gp.members = g.members;
    gp.width = g.width;
    gp.removed = idx;
    gp.keep = g.width - k;
    plan.groups.push_back(gp);
  }
  plan.params_before = CountParams(d.graph());
  plan.flops_before = CountFlops(d.graph(), 64, 64);
  const ModelGraph pg = PrunedGraph(d.graph(), plan);
  plan.params_after = CountParams(pg);
  plan.flops_after = CountFlops(pg, 64, 64);
  const Detector p = ApplyPlan(d, plan);
  std::mt19937_64 img_rng(1);
  for (int t = 0; t < 3; ++t) {
    Tensor image(3, 64, 64);
    for (double& v : image.values()) v = std::uniform_real_distribution<double>(0, 1)(img_rng);
    const auto a = d.PredictionFor(d.Forward(std::span<const Tensor>(&image, 1), Mode::kEval), 0);
    const auto b = p.PredictionFor(p.Forward(std::span<const Tensor>(&image, 1), Mode::kEval), 0);
    for (size_t h = 0; h < a.heads().size(); ++h) {
      const auto& va = a.heads()[h].raw.values();
      const auto& vb = b.heads()[h].raw.values();
      ASSERT_EQ(va.size(), vb.size());
      for (size_t i = 0; i < va.size(); ++i) ASSERT_NEAR(va[i], vb[i], 1e-5);
    }
  }
}

TEST(L1ImportanceTest, HandValuesAndOracle) {
  EXPECT_EQ(L1Importance(std::vector<double>(18, 0.0), 1).scores[0], 0.0);
  EXPECT_EQ(L1Importance(std::vector<double>(18, 1.0), 1).scores[0], 18.0);
  std::mt19937_64 rng(3);
  const auto w = testing::RandomVector(rng, 4 * 3 * 9);
  const auto t = L1Importance(w, 4);
  for (int k = 0; k < 4; ++k) {
    double s = 0;
    for (int i = 0; i < 27; ++i) s += std::abs(w[k * 27 + i]);
    EXPECT_NEAR(t.scores[k], s, 1e-9);
  }
}

TEST(L1ImportanceTest, InvariantToInputChannelPermutation) {
  std::mt19937_64 rng(4);
  const auto w = testing::RandomVector(rng, 2 * 3 * 9);
  std::vector<double> p(w.size());
  const int perm[3] = {2, 0, 1};
  for (int k = 0; k < 2; ++k) {
    for (int c = 0; c < 3; ++c) {
      for (int i = 0; i < 9; ++i) p[(k * 3 + perm[c]) * 9 + i] = w[(k * 3 + c) * 9 + i];
    }
  }
  const auto a = L1Importance(w, 2), b = L1Importance(p, 2);
  for (int k = 0; k < 2; ++k) EXPECT_NEAR(a.scores[k], b.scores[k], 1e-12);
}

TEST(RandomImportanceTest, DeterministicAndInRange) {
  EXPECT_EQ(RandomImportance(5, 1).scores, RandomImportance(5, 1).scores);
  const auto t = RandomImportance(5, 2);
  ASSERT_EQ(t.scores.size(), 5u);
  for (double s : t.scores) {
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
  std::set<std::vector<double>> distinct;
  for (uint64_t seed = 0; seed < 10; ++seed) distinct.insert(RandomImportance(8, seed).scores);
  EXPECT_EQ(distinct.size(), 10u);
}

TEST(CriterionTest, AllCriteriaShareSchema) {
  const Detector d = testing::TinyDetector();
  const Dataset data = testing::TinyDataset(2);
  for (auto kind : {CriterionKind::kSaliency, CriterionKind::kL1, CriterionKind::kRandom}) {
    const auto r = ComputeCriterion(d, data.samples, {kind, 3}, {});
    const auto j = ImportanceToJson(r.tables, {{"criterion", CriterionName(kind)}});
    ASSERT_TRUE(j.contains("layers"));
    const auto back = ImportanceFromJson(j);
    EXPECT_EQ(back.size(), DefaultTapLayers(d.graph()).size());
    EXPECT_NO_THROW(MakePlan(back, d.graph(), 0.5, 32, 32));
    EXPECT_EQ(CriterionFromName(CriterionName(kind)), kind);
  }
  EXPECT_THROW(CriterionFromName("taylor"), ConfigError);
}

}  // namespace
}  // namespace salprune
