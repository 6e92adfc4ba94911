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

#ifndef SALPRUNE_TRAIN_H_
#define SALPRUNE_TRAIN_H_

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "salprune/data.h"
#include "salprune/detector.h"

namespace salprune {

// SGD with momentum and L2 weight decay on conv weights, cosine learning
// rate decay over `total_epochs` after a linear warmup.
struct TrainConfig {
  int epochs = 20;
  int batch_size = 8;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool cosine = true;
  int warmup_epochs = 0;
  // Epoch index to start from (resume) and the schedule length; 0 means
  // start_epoch + epochs.
  int start_epoch = 0;
  int total_epochs = 0;
  bool hflip = true;
  uint64_t seed = 0;
  LossWeights loss;
};

nlohmann::json TrainConfigToJson(const TrainConfig& config);
TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig defaults = {});

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double cls = 0.0;
  double box = 0.0;
};

class TrainingDiverged : public std::runtime_error {
 public:
  explicit TrainingDiverged(const std::string& what) : std::runtime_error(what) {}
};

double LearningRateAt(const TrainConfig& config, int epoch, double progress_in_epoch);

// Trains in place. Throws TrainingDiverged when the loss becomes non-finite.
std::vector<EpochStats> Train(Detector& model,
                              std::span<const DetectionSample> samples,
                              const TrainConfig& config,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

// Horizontally mirrored copy of a sample.
DetectionSample FlipHorizontal(const DetectionSample& sample);

}  // namespace salprune

#endif  // SALPRUNE_TRAIN_H_
