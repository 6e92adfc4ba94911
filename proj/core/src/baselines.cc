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

#include "salprune/baselines.h"

#include <cmath>
#include <random>

#include "salprune/errors.h"

namespace salprune {

const char* CriterionName(CriterionKind kind) {
  switch (kind) {
    case CriterionKind::kSaliency: return "saliency";
    case CriterionKind::kL1: return "l1";
    case CriterionKind::kRandom: return "random";
  }
  return "?";
}

CriterionKind CriterionFromName(const std::string& name) {
  if (name == "saliency") return CriterionKind::kSaliency;
  if (name == "l1") return CriterionKind::kL1;
  if (name == "random") return CriterionKind::kRandom;
  throw ConfigError("unknown criterion: " + name);
}

ImportanceTable L1Importance(std::span<const double> weights, int out_channels) {
  if (out_channels <= 0 || weights.size() % out_channels != 0) {
    throw ContractError("weights are not divisible into filters");
  }
  const size_t filter = weights.size() / out_channels;
  ImportanceTable table;
  table.scores.assign(out_channels, 0.0);
  for (int k = 0; k < out_channels; ++k) {
    double sum = 0.0;
    for (size_t i = 0; i < filter; ++i) sum += std::abs(weights[k * filter + i]);
    table.scores[k] = sum;
  }
  return table;
}

ImportanceTable RandomImportance(int width, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  ImportanceTable table;
  table.scores.resize(width);
  for (double& s : table.scores) {
    do {
      s = dist(rng);
    } while (s <= 0.0);
  }
  return table;
}

ImportanceResult ComputeCriterion(const Detector& model,
                                  std::span<const DetectionSample> samples,
                                  const CriterionSpec& criterion,
                                  const SaliencyConfig& config) {
  if (criterion.kind == CriterionKind::kSaliency) {
    return ComputeImportance(model, samples, config);
  }
  const std::vector<std::string> taps =
      config.taps.empty() ? DefaultTapLayers(model.graph()) : config.taps;
  ImportanceResult result;
  for (size_t t = 0; t < taps.size(); ++t) {
    const GraphNode& node = model.graph().node(taps[t]);
    ImportanceTable table =
        criterion.kind == CriterionKind::kL1
            ? L1Importance(model.params(taps[t]).weight, node.out_channels)
            : RandomImportance(node.out_channels,
                               criterion.seed * 1000003ULL + model.graph().IndexOf(taps[t]));
    table.node_id = taps[t];
    table.n_samples = 0;
    result.tables[taps[t]] = std::move(table);
  }
  return result;
}

}  // namespace salprune
