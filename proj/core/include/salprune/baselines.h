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

#ifndef SALPRUNE_BASELINES_H_
#define SALPRUNE_BASELINES_H_

#include <cstdint>
#include <span>
#include <string>

#include "salprune/detector.h"
#include "salprune/saliency.h"

namespace salprune {

enum class CriterionKind { kSaliency, kL1, kRandom };

const char* CriterionName(CriterionKind kind);
CriterionKind CriterionFromName(const std::string& name);

struct CriterionSpec {
  CriterionKind kind = CriterionKind::kSaliency;
  uint64_t seed = 0;  // random only
};

// Score of filter k = sum of |w| over its C_in x K x K weights.
ImportanceTable L1Importance(std::span<const double> weights, int out_channels);

// Deterministic uniform (0,1) scores.
ImportanceTable RandomImportance(int width, uint64_t seed);

// Tables for every tap layer of `model` under the chosen criterion. Only the
// saliency criterion looks at `samples`.
ImportanceResult ComputeCriterion(const Detector& model,
                                  std::span<const DetectionSample> samples,
                                  const CriterionSpec& criterion,
                                  const SaliencyConfig& config);

}  // namespace salprune

#endif  // SALPRUNE_BASELINES_H_
