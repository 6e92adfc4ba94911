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

#include "salprune/evaluate.h"

#include <algorithm>

namespace salprune {

std::vector<Detection> DecodeDetections(const Prediction& prediction,
                                        const std::string& sample_id,
                                        int image_h, int image_w,
                                        const DetectOptions& options) {
  std::vector<Detection> candidates;
  for (size_t h = 0; h < prediction.heads().size(); ++h) {
    const Tensor& raw = prediction.heads()[h].raw;
    for (int y = 0; y < raw.height(); ++y) {
      for (int x = 0; x < raw.width(); ++x) {
        const double obj = prediction.Objectness(static_cast<int>(h), y, x);
        if (obj < options.score_threshold) continue;
        const std::vector<double> cls = prediction.ClassScores(static_cast<int>(h), y, x);
        const int best = static_cast<int>(std::max_element(cls.begin(), cls.end()) - cls.begin());
        const double score = obj * cls[best];
        if (score < options.score_threshold) continue;
        BBox box = ClampToImage(prediction.DecodeBox(static_cast<int>(h), y, x), image_w, image_h);
        if (!box.valid()) continue;
        box.class_id = best;
        candidates.push_back({sample_id, box, best, score});
      }
    }
  }
  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Detection& a, const Detection& b) { return a.confidence > b.confidence; });
  std::vector<Detection> kept;
  for (const Detection& d : candidates) {
    bool suppressed = false;
    for (const Detection& k : kept) {
      if (k.class_id == d.class_id && Iou(k.box, d.box) > options.nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
    if (static_cast<int>(kept.size()) >= options.max_detections) break;
  }
  return kept;
}

std::vector<Detection> Detect(const Detector& model,
                              std::span<const DetectionSample> samples,
                              const DetectOptions& options) {
  std::vector<Detection> out;
  for (const DetectionSample& s : samples) {
    const ForwardCache cache = model.Forward(std::span<const Tensor>(&s.image, 1), Mode::kEval);
    const auto dets = DecodeDetections(model.PredictionFor(cache, 0), s.sample_id,
                                       s.image.height(), s.image.width(), options);
    out.insert(out.end(), dets.begin(), dets.end());
  }
  return out;
}

EvalReport EvaluateModel(const Detector& model, const Dataset& dataset,
                         const EvalOptions& options,
                         std::vector<Detection>* detections) {
  std::vector<Detection> dets = Detect(model, dataset.samples, options.detect);
  EvalReport report = EvaluateDetections(dets, dataset.annotations, model.num_classes(),
                                         AreaBucketsForImageSize(dataset.manifest.image_size),
                                         options.interpolation, options.iou_threshold);
  if (detections != nullptr) *detections = std::move(dets);
  return report;
}

}  // namespace salprune
