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

#ifndef SALPRUNE_SALIENCY_H_
#define SALPRUNE_SALIENCY_H_

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "salprune/data.h"
#include "salprune/detector.h"
#include "salprune/reweight.h"

namespace salprune {

// Cells over which channel importance is normalized and summed.
enum class ImportanceExtent { kRegion, kFull };

struct SaliencyConfig {
  ReweightConfig reweight;
  ImportanceExtent extent = ImportanceExtent::kRegion;
  LossWeights loss;
  // Multiplies the detection loss before differentiation.
  double loss_scale = 1.0;
  // Conv layers to score; empty means DefaultTapLayers().
  std::vector<std::string> taps;
};

// Per-channel scores of one layer: single-sample S or the mean over
// `n_samples` samples.
struct ImportanceTable {
  std::string node_id;
  std::vector<double> scores;
  int n_samples = 1;

  bool operator==(const ImportanceTable&) const = default;
};

using ImportanceTables = std::map<std::string, ImportanceTable>;

// w = sum_ij beta_ij * relu(grad_ij) over one channel's gradient map.
// Throws ContractError when the map and mask sizes differ.
double ChannelSaliency(std::span<const double> grad_map, const ReweightMask& mask);

struct ChannelScore {
  double value = 0.0;
  bool empty_region = false;
};

// S = sum over region cells of min-max-normalized relu(w * A), with the
// min/max taken over the same cells. Constant responses (including w = 0)
// score 0; an empty region scores 0 and is flagged.
ChannelScore ChannelImportance(double w, std::span<const double> act_map,
                               std::span<const uint8_t> region);

// Single-sample tables from captured taps.
ImportanceTables SampleImportance(std::span<const FeatureTap> taps,
                                  std::span<const BBox> boxes,
                                  const SaliencyConfig& config);

struct ImportanceResult {
  ImportanceTables tables;
  int n_used = 0;
  int n_skipped = 0;  // box-free samples
};

// Mean of the per-sample tables over samples with at least one box, summed
// in sample order with compensated accumulation. Throws ConfigError when no
// sample has a box.
ImportanceResult ComputeImportance(const Detector& model,
                                   std::span<const DetectionSample> samples,
                                   const SaliencyConfig& config);

// {"metadata": {...}, "layers": {layer_id: {channel_index: score}}}
nlohmann::json ImportanceToJson(const ImportanceTables& tables,
                                const nlohmann::json& metadata);
ImportanceTables ImportanceFromJson(const nlohmann::json& j,
                                    nlohmann::json* metadata = nullptr);

nlohmann::json SaliencyConfigToJson(const SaliencyConfig& config);

}  // namespace salprune

#endif  // SALPRUNE_SALIENCY_H_
