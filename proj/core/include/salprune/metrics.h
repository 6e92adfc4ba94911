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

#ifndef SALPRUNE_METRICS_H_
#define SALPRUNE_METRICS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "salprune/bbox.h"
#include "salprune/data.h"
#include "salprune/graph.h"

namespace salprune {

struct Detection {
  std::string sample_id;
  BBox box;
  int class_id = 0;
  double confidence = 0.0;
};

// Intersection over union; 0 for disjoint boxes.
double Iou(const BBox& a, const BBox& b);

// Ranking order for matching: higher confidence first, ties broken by
// sample id and box coordinates so input order never matters.
bool RanksBefore(const Detection& a, const Detection& b);

enum class ApInterpolation { k101Point, k11Point };

// Ground-truth area interval [min, max) in pixels.
struct AreaRange {
  double min = 0.0;
  double max = 1e30;
};
AreaRange AllAreas();
AreaRange SmallAreas(const AreaBuckets& b);
AreaRange MediumAreas(const AreaBuckets& b);
AreaRange LargeAreas(const AreaBuckets& b);

// Greedy matching in descending confidence (stable by input position) to
// unmatched ground truths with IoU >= iou_threshold. Ground truths outside
// `range` are ignored, as are detections matched to them and unmatched
// detections whose own area is outside `range`. nullopt when no ground
// truth of the class falls in range.
std::optional<double> AveragePrecision(
    std::span<const Detection> detections, const Annotations& ground_truth,
    int class_id, double iou_threshold = 0.5, AreaRange range = AllAreas(),
    ApInterpolation interpolation = ApInterpolation::k101Point);

// Interpolated AP from a precision/recall sequence (in detection order).
double InterpolatedAp(std::span<const double> precision,
                      std::span<const double> recall,
                      ApInterpolation interpolation);

// Unweighted mean over defined values; nullopt if none is defined.
std::optional<double> MeanAp(std::span<const std::optional<double>> aps);

struct EvalReport {
  std::optional<double> map;
  std::optional<double> ap_small;
  std::optional<double> ap_medium;
  std::optional<double> ap_large;
  std::vector<std::optional<double>> per_class;
  int n_ground_truth = 0;
  int n_detections = 0;
};

EvalReport EvaluateDetections(std::span<const Detection> detections,
                              const Annotations& ground_truth, int n_classes,
                              const AreaBuckets& buckets,
                              ApInterpolation interpolation = ApInterpolation::k101Point,
                              double iou_threshold = 0.5);

nlohmann::json EvalReportToJson(const EvalReport& report);
EvalReport EvalReportFromJson(const nlohmann::json& j);

nlohmann::json DetectionsToJson(std::span<const Detection> detections);
std::vector<Detection> DetectionsFromJson(const nlohmann::json& j);

// Cost accounting. conv/head params = C_o*C_i*K^2 (+C_o bias), norm params
// = 2*C_o; conv/head FLOPs = 2*C_o*C_i*K^2*H_out*W_out. Norm, activation,
// add and concat cost no FLOPs.
struct LayerCost {
  std::string node_id;
  int64_t params = 0;
  int64_t flops = 0;
};

struct CostReport {
  int64_t params = 0;
  int64_t flops = 0;
  std::vector<LayerCost> layers;
};

CostReport CountCost(const ModelGraph& graph, int input_h, int input_w);
int64_t CountParams(const ModelGraph& graph);
int64_t CountFlops(const ModelGraph& graph, int input_h, int input_w);

nlohmann::json CostReportToJson(const CostReport& report);

}  // namespace salprune

#endif  // SALPRUNE_METRICS_H_
