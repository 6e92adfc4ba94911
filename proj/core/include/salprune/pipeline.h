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

#ifndef SALPRUNE_PIPELINE_H_
#define SALPRUNE_PIPELINE_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "salprune/baselines.h"
#include "salprune/data.h"
#include "salprune/detector.h"
#include "salprune/evaluate.h"
#include "salprune/metrics.h"
#include "salprune/png_io.h"
#include "salprune/pruner.h"
#include "salprune/saliency.h"
#include "salprune/train.h"

namespace salprune {

// Everything a pipeline run depends on. Serialized beside every artifact.
struct RunConfig {
  std::string train_dir;
  std::string val_dir;
  std::string checkpoint;  // baseline model
  int n_classes = 3;
  double width = 1.0;
  uint64_t model_seed = 0;
  CriterionSpec criterion;
  SaliencyConfig saliency;
  double rate = 0.3;
  int n_samples = 50;
  TrainConfig train = DefaultBaselineTraining();
  TrainConfig finetune = DefaultFinetuning();
  EvalOptions eval;
  uint64_t seed = 0;

  static TrainConfig DefaultBaselineTraining();
  static TrainConfig DefaultFinetuning();
};

nlohmann::json RunConfigToJson(const RunConfig& config);
// Missing keys keep the values of `defaults`.
RunConfig RunConfigFromJson(const nlohmann::json& j, const RunConfig& defaults = {});
// Throws ConfigError on out-of-range values.
void ValidateRunConfig(const RunConfig& config);
// Stable 16-hex-digit hash of the canonical config JSON.
std::string ConfigFingerprint(const RunConfig& config);
std::string Fnv1aHex(const std::string& text);

// $SALPRUNE_OUT when set, otherwise `fallback`.
std::string OutputRoot(const std::string& fallback);

void WriteJson(const std::string& path, const nlohmann::json& j);
nlohmann::json ReadJson(const std::string& path);

// One row of a results table: pruning rate, cost and accuracy.
struct ResultRow {
  std::string label;
  double rate = 0.0;
  int64_t flops = 0;
  int64_t params = 0;
  EvalReport eval;
};

nlohmann::json ResultRowToJson(const ResultRow& row);
// Fixed-width text table: Pruning Rate | Flops (G) | Params (M) | AP-s |
// AP-m | AP-l | mAP, accuracies in percent.
std::string FormatResultTable(const std::vector<ResultRow>& rows);

struct TrainOutcome {
  Detector model;
  std::vector<EpochStats> history;
  EvalReport eval;
  int epochs_done = 0;
};

// Trains the toy detector from scratch (or continues `resume_from`) and
// evaluates it. Writes model.ckpt, report.json, report.txt and config.json
// into `out_dir` when it is non-empty.
TrainOutcome TrainBaseline(const RunConfig& config, const Dataset& train,
                           const Dataset& val, const std::string& out_dir,
                           const std::string& resume_from = "");

struct PipelineOutcome {
  Detector pruned;
  PruningPlan plan;
  ImportanceResult importance;
  std::vector<std::string> sample_ids;
  std::vector<EpochStats> finetune_history;
  ResultRow row;
  std::string fingerprint;
};

// select_class_balanced -> importance -> plan -> apply -> fine-tune ->
// evaluate. Fine-tuning is skipped when the plan removes nothing. Writes
// config.json, importance.json, plan.json, pruned.ckpt, detections.json,
// report.json and report.txt into `out_dir` when it is non-empty.
PipelineOutcome RunPipeline(const RunConfig& config, const Detector& baseline,
                            const Dataset& train, const Dataset& val,
                            const std::string& out_dir);

ResultRow EvaluateRow(const Detector& model, const Dataset& val,
                      const EvalOptions& options, double rate,
                      const std::string& label,
                      std::vector<Detection>* detections = nullptr);

// Saliency overlays of one layer's channels for a single sample.
struct VizImage {
  int channel = 0;
  bool reweighted = false;
  std::string path;
  Raster overlay;
  std::vector<uint8_t> region;  // image-resolution relaxed region
  std::vector<double> heat;     // feature-resolution heat in [0,1]
};

struct VizOptions {
  std::string layer;
  std::vector<int> channels;
  ReweightConfig reweight;
  LossWeights loss;
};

// For each channel, renders heat = norm(relu(w * A)) without reweighting
// (w from plain positive gradients, normalized over the whole map) and with
// reweighting (w from beta-weighted gradients, normalized inside the
// relaxed region). Heat is drawn inside the relaxed region
// and ground-truth boxes are outlined; pixels off the region show the
// dimmed input in both renderings.
std::vector<VizImage> RenderSaliencyOverlays(const Detector& model,
                                             const DetectionSample& sample,
                                             const VizOptions& options,
                                             const std::string& out_dir);

enum class AblationStudy { kComponents, kDecay, kSampleSize };
AblationStudy AblationStudyFromName(const std::string& name);
const char* AblationStudyName(AblationStudy study);

struct AblationArm {
  std::string name;
  bool gradients = true;
  bool gt_box = true;
  bool context = true;
  bool prune = true;
  DecayKind decay = DecayKind::kPower;
  int n_samples = 0;
  ResultRow row;
};

// Arms of a study, with configs derived from `base`.
std::vector<AblationArm> AblationArms(AblationStudy study, const RunConfig& base,
                                      const std::vector<int>& sample_sizes = {8, 16, 32, 64, 128});

// Runs every arm and writes ablation.csv and ablation.svg into `out_dir`.
std::vector<AblationArm> RunAblation(AblationStudy study, const RunConfig& base,
                                     const Detector& baseline, const Dataset& train,
                                     const Dataset& val, const std::string& out_dir,
                                     const std::vector<int>& sample_sizes = {8, 16, 32, 64, 128});

std::string AblationCsv(AblationStudy study, const std::vector<AblationArm>& arms);
std::string AblationSvg(AblationStudy study, const std::vector<AblationArm>& arms);

}  // namespace salprune

#endif  // SALPRUNE_PIPELINE_H_
