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

#ifndef SALPRUNE_EVALUATE_H_
#define SALPRUNE_EVALUATE_H_

#include <span>
#include <vector>

#include "salprune/data.h"
#include "salprune/detector.h"
#include "salprune/metrics.h"

namespace salprune {

struct DetectOptions {
  double score_threshold = 0.05;
  double nms_iou = 0.5;
  int max_detections = 100;
};

// Decodes every head cell (score = objectness x best class probability),
// then runs per-class greedy NMS.
std::vector<Detection> DecodeDetections(const Prediction& prediction,
                                        const std::string& sample_id,
                                        int image_h, int image_w,
                                        const DetectOptions& options = {});

std::vector<Detection> Detect(const Detector& model,
                              std::span<const DetectionSample> samples,
                              const DetectOptions& options = {});

struct EvalOptions {
  DetectOptions detect;
  ApInterpolation interpolation = ApInterpolation::k101Point;
  double iou_threshold = 0.5;
};

// Runs the model over the dataset and scores it. Area buckets follow the
// dataset's image size.
EvalReport EvaluateModel(const Detector& model, const Dataset& dataset,
                         const EvalOptions& options = {},
                         std::vector<Detection>* detections = nullptr);

}  // namespace salprune

#endif  // SALPRUNE_EVALUATE_H_
