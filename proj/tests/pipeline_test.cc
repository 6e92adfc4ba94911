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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "salprune/errors.h"
#include "salprune/pipeline.h"
#include "test_util.h"

namespace salprune {
namespace {

namespace fs = std::filesystem;

fs::path Scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("salprune_pipeline_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string Slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig TinyConfig() {
  RunConfig c;
  c.n_classes = 2;
  c.width = 0.125;
  c.n_samples = 4;
  c.train.epochs = 1;
  c.train.batch_size = 4;
  c.finetune.epochs = 1;
  c.finetune.batch_size = 4;
  return c;
}

class PipelineTest : public ::testing::Test {
 protected:
  Dataset train_ = testing::TinyDataset(8, 32, 5, 2, "train");
  Dataset val_ = testing::TinyDataset(4, 32, 6, 2, "val");
  Detector model_ = testing::TinyDetector();
};

TEST(RunConfigTest, JsonRoundTripAndFingerprint) {
  RunConfig c = TinyConfig();
  c.saliency.reweight.decay.kind = DecayKind::kExponential;
  c.saliency.extent = ImportanceExtent::kFull;
  c.criterion.kind = CriterionKind::kL1;
  c.saliency.taps = {"s2", "n8"};
  const RunConfig back = RunConfigFromJson(RunConfigToJson(c));
  EXPECT_EQ(RunConfigToJson(back), RunConfigToJson(c));
  EXPECT_EQ(ConfigFingerprint(back), ConfigFingerprint(c));
  RunConfig d = c;
  d.rate = 0.31;
  EXPECT_NE(ConfigFingerprint(d), ConfigFingerprint(c));
  EXPECT_EQ(ConfigFingerprint(c).size(), 16u);
}

TEST(RunConfigTest, PartialJsonKeepsDefaults) {
  const RunConfig c = RunConfigFromJson({{"rate", 0.5}, {"finetune", {{"epochs", 3}}}});
  EXPECT_EQ(c.rate, 0.5);
  EXPECT_EQ(c.finetune.epochs, 3);
  EXPECT_EQ(c.finetune.lr, RunConfig{}.finetune.lr);
  EXPECT_EQ(c.finetune.momentum, 0.9);
  EXPECT_EQ(c.finetune.weight_decay, 5e-4);
  EXPECT_EQ(c.n_samples, 50);
}

TEST(RunConfigTest, ValidationRejectsBadValues) {
  RunConfig c;
  c.rate = 1.0;
  EXPECT_THROW(ValidateRunConfig(c), ConfigError);
  c = {};
  c.n_samples = 0;
  EXPECT_THROW(ValidateRunConfig(c), ConfigError);
  EXPECT_THROW(RunConfigFromJson({{"criterion", {{"kind", "magic"}}}}), ConfigError);
  EXPECT_THROW(RunConfigFromJson(nlohmann::json::array()), ConfigError);
}

TEST(OutputRootTest, EnvironmentOverridesFallback) {
  ::unsetenv("SALPRUNE_OUT");
  EXPECT_EQ(OutputRoot("runs"), "runs");
  ::setenv("SALPRUNE_OUT", "/tmp/elsewhere", 1);
  EXPECT_EQ(OutputRoot("runs"), "/tmp/elsewhere");
  ::unsetenv("SALPRUNE_OUT");
}

TEST(ResultTableTest, StandardColumns) {
  ResultRow r;
  r.rate = 0.3;
  r.flops = 2'000'000'000;
  r.params = 1'500'000;
  r.eval.map = 0.891;
  r.eval.ap_small = 0.5;
  const std::string t = FormatResultTable({r});
  for (const char* col : {"Pruning Rate", "Flops (G)", "Params (M)", "AP-s", "AP-m", "AP-l", "mAP"}) {
    EXPECT_NE(t.find(col), std::string::npos) << col;
  }
  EXPECT_NE(t.find("89.1"), std::string::npos);
  EXPECT_NE(t.find("2.0000"), std::string::npos);
}

TEST_F(PipelineTest, TrainBaselineWritesArtifactsAndResumes) {
  const fs::path dir = Scratch("train");
  RunConfig c = TinyConfig();
  c.train.epochs = 2;
  const TrainOutcome first = TrainBaseline(c, train_, val_, dir.string());
  EXPECT_EQ(first.epochs_done, 2);
  EXPECT_TRUE(fs::exists(dir / "model.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "report.json"));
  EXPECT_TRUE(fs::exists(dir / "report.txt"));
  EXPECT_TRUE(fs::exists(dir / "config.json"));
  c.train.epochs = 1;
  c.train.total_epochs = 3;
  const fs::path dir2 = Scratch("train_resume");
  const TrainOutcome resumed =
      TrainBaseline(c, train_, val_, dir2.string(), (dir / "model.ckpt").string());
  EXPECT_EQ(resumed.epochs_done, 3);
  ASSERT_EQ(resumed.history.size(), 1u);
  EXPECT_EQ(resumed.history[0].epoch, 2);
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_F(PipelineTest, DivergenceAborts) {
  RunConfig c = TinyConfig();
  c.train.lr = 1e300;
  c.train.epochs = 3;
  EXPECT_THROW(TrainBaseline(c, train_, val_, ""), TrainingDiverged);
}

TEST_F(PipelineTest, ZeroRateReproducesBaselineExactly) {
  RunConfig c = TinyConfig();
  c.rate = 0.0;
  c.finetune.epochs = 0;
  const PipelineOutcome o = RunPipeline(c, model_, train_, val_, "");
  const ResultRow base = EvaluateRow(model_, val_, c.eval, 0.0, "baseline");
  EXPECT_EQ(EvalReportToJson(o.row.eval).dump(), EvalReportToJson(base.eval).dump());
  EXPECT_EQ(o.pruned, model_);
  // No channel is removed, so fine-tuning is skipped even with a budget.
  c.finetune.epochs = 2;
  const PipelineOutcome o2 = RunPipeline(c, model_, train_, val_, "");
  EXPECT_EQ(EvalReportToJson(o2.row.eval).dump(), EvalReportToJson(base.eval).dump());
}

TEST_F(PipelineTest, EmitsArtifactsAndReproducesPlans) {
  RunConfig c = TinyConfig();
  c.rate = 0.3;
  const fs::path a = Scratch("pipe_a"), b = Scratch("pipe_b");
  const PipelineOutcome oa = RunPipeline(c, model_, train_, val_, a.string());
  const PipelineOutcome ob = RunPipeline(c, model_, train_, val_, b.string());
  for (const char* f : {"config.json", "importance.json", "plan.json", "pruned.ckpt",
                        "detections.json", "report.json", "report.txt"}) {
    EXPECT_TRUE(fs::exists(a / f)) << f;
  }
  EXPECT_EQ(oa.fingerprint, ob.fingerprint);
  EXPECT_EQ(Slurp(a / "plan.json"), Slurp(b / "plan.json"));
  const auto report = ReadJson((a / "report.json").string());
  EXPECT_EQ(report.at("fingerprint"), oa.fingerprint);
  EXPECT_LT(oa.row.params, CountParams(model_.graph()));
  const Detector reloaded = LoadCheckpoint((a / "pruned.ckpt").string());
  EXPECT_EQ(reloaded, oa.pruned);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_F(PipelineTest, VizEmitsPairsWithIdenticalOffRegionPixels) {
  const fs::path dir = Scratch("viz");
  Dataset big = testing::TinyDataset(2, 64, 9);
  const DetectionSample& s = big.samples[0];
  ASSERT_FALSE(s.boxes.empty());
  VizOptions o;
  o.layer = "n8";
  o.channels = {0, 1};
  const auto images = RenderSaliencyOverlays(model_, s, o, dir.string());
  ASSERT_EQ(images.size(), 4u);
  for (const auto& img : images) EXPECT_TRUE(fs::exists(img.path));
  for (size_t i = 0; i < images.size(); i += 2) {
    const auto& plain = images[i];
    const auto& rew = images[i + 1];
    EXPECT_FALSE(plain.reweighted);
    EXPECT_TRUE(rew.reweighted);
    for (size_t p = 0; p < plain.region.size(); ++p) {
      if (plain.region[p]) continue;
      for (int k = 0; k < 3; ++k) {
        ASSERT_EQ(plain.overlay.pixels[p * 3 + k], rew.overlay.pixels[p * 3 + k]);
      }
    }
  }
  // Box outlines are drawn in green.
  const BBox& b = s.boxes[0];
  const size_t corner = static_cast<size_t>(std::floor(b.y_min)) * 64 +
                        static_cast<size_t>(std::floor(b.x_min));
  EXPECT_EQ(images[0].overlay.pixels[corner * 3 + 1], 255);
  EXPECT_THROW(([&] {
                 VizOptions bad = o;
                 bad.channels = {1000};
                 RenderSaliencyOverlays(model_, s, bad, "");
               }()),
               ConfigError);
  fs::remove_all(dir);
}

TEST_F(PipelineTest, VizOnBoxFreeSampleGivesZeroReweightedMap) {
  DetectionSample s = train_.samples[0];
  s.boxes.clear();
  VizOptions o;
  o.layer = "s3a";
  o.channels = {0};
  const auto images = RenderSaliencyOverlays(model_, s, o, "");
  ASSERT_EQ(images.size(), 2u);
  for (double v : images[1].heat) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(images[0].overlay.pixels, images[1].overlay.pixels);
}

TEST(AblationTest, ArmCounts) {
  const RunConfig c;
  EXPECT_EQ(AblationArms(AblationStudy::kComponents, c).size(), 4u);
  EXPECT_EQ(AblationArms(AblationStudy::kDecay, c).size(), 4u);
  EXPECT_EQ(AblationArms(AblationStudy::kSampleSize, c).size(), 5u);
  EXPECT_THROW(AblationStudyFromName("pruning"), ConfigError);
  const auto comps = AblationArms(AblationStudy::kComponents, c);
  EXPECT_FALSE(comps[0].gradients || comps[0].gt_box || comps[0].context);
  EXPECT_TRUE(comps[1].gradients && !comps[1].gt_box && !comps[1].context);
  EXPECT_TRUE(comps[2].gradients && comps[2].gt_box && !comps[2].context);
  EXPECT_TRUE(comps[3].gradients && comps[3].gt_box && comps[3].context);
}

TEST_F(PipelineTest, AblationWritesCsvAndPlot) {
  RunConfig c = TinyConfig();
  c.rate = 0.3;
  c.finetune.epochs = 0;
  const fs::path dir = Scratch("ablate");
  const auto arms =
      RunAblation(AblationStudy::kSampleSize, c, model_, train_, val_, dir.string(), {2, 4});
  ASSERT_EQ(arms.size(), 2u);
  const std::string csv = Slurp(dir / "ablation.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(Slurp(dir / "ablation.svg").find("<svg"), std::string::npos);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace salprune
