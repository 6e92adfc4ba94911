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

#ifndef SALPRUNE_DETECTOR_H_
#define SALPRUNE_DETECTOR_H_

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "salprune/data.h"
#include "salprune/graph.h"
#include "salprune/loss.h"
#include "salprune/tensor.h"

namespace salprune {

// Learnable and running state of one graph node. Conv/head nodes use
// `weight` (C_out x C_in x K x K) and optionally `bias`; norm nodes use the
// other four arrays. Unused arrays stay empty.
struct NodeParams {
  std::vector<double> weight;
  std::vector<double> bias;
  std::vector<double> gamma;
  std::vector<double> beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;

  bool operator==(const NodeParams&) const = default;
};

// Gradients matching the learnable arrays of NodeParams.
struct NodeGrads {
  std::vector<double> weight;
  std::vector<double> bias;
  std::vector<double> gamma;
  std::vector<double> beta;
};

enum class Mode { kTrain, kEval };

// Called after a node output has been computed; may modify it in place.
using ActivationHook =
    std::function<void(const std::string& node_id, int sample, Tensor& output)>;

// Everything the backward pass needs from a forward pass.
struct ForwardCache {
  Mode mode = Mode::kEval;
  std::vector<std::vector<Tensor>> outputs;  // [node][sample]
  // Batch statistics of norm nodes (train mode only), indexed by node.
  std::vector<std::vector<double>> batch_mean;
  std::vector<std::vector<double>> batch_var;
  int batch_size() const { return outputs.empty() ? 0 : static_cast<int>(outputs[0].size()); }
};

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kNormMomentum = 0.1;

class Detector {
 public:
  Detector() = default;
  Detector(ModelGraph graph, int num_classes);

  const ModelGraph& graph() const { return graph_; }
  int num_classes() const { return num_classes_; }

  std::vector<NodeParams>& params() { return params_; }
  const std::vector<NodeParams>& params() const { return params_; }
  NodeParams& params(const std::string& id) { return params_[graph_.IndexOf(id)]; }
  const NodeParams& params(const std::string& id) const { return params_[graph_.IndexOf(id)]; }

  // He-normal convs, unit-scale norms, low-prior objectness bias.
  void InitializeParams(uint64_t seed);

  // Head node ids ordered by ascending stride.
  std::vector<std::string> HeadIds() const;
  std::vector<HeadGeometry> HeadGeometries(int image_h, int image_w) const;

  // Forward over a batch of 3 x H x W images. Train mode normalizes with
  // batch statistics (and does not touch the running ones).
  ForwardCache Forward(std::span<const Tensor> images, Mode mode,
                       const ActivationHook* hook = nullptr) const;

  // Folds the batch statistics of a train-mode pass into the running ones.
  void UpdateRunningStats(const ForwardCache& cache);

  Prediction PredictionFor(const ForwardCache& cache, int sample) const;

  // Backpropagates head gradients, `head_grads[h][sample]` in HeadIds()
  // order. Parameter gradients are accumulated into `param_grads` (resized
  // on first use) and per-node output gradients are stored into
  // `node_grads` when requested. Either pointer may be null.
  void Backward(const ForwardCache& cache,
                const std::vector<std::vector<Tensor>>& head_grads,
                std::vector<NodeGrads>* param_grads,
                std::vector<std::vector<Tensor>>* node_grads) const;

  // Number of stored learnable parameters (weights, biases, norm affine).
  int64_t ParamCount() const;

  bool operator==(const Detector&) const = default;

 private:
  ModelGraph graph_;
  int num_classes_ = 0;
  std::vector<NodeParams> params_;
};

// Small single-stage anchor-free detector: four backbone stages at strides
// 2/4/8/16 (with a residual add at stride 8), a concat neck at stride 8 and
// dense heads at strides 8 and 16.
Detector BuildToyDetector(int num_classes, double width_multiplier, uint64_t seed);

// Base widths of the toy detector at width multiplier 1.0, keyed by conv id.
std::vector<std::pair<std::string, int>> ToyDetectorBaseWidths();

// Default tap layers: every conv in the backbone and neck.
std::vector<std::string> DefaultTapLayers(const ModelGraph& graph);

// Activation and loss gradient captured at one conv's post-activation map.
struct FeatureTap {
  std::string node_id;  // the conv layer
  int stride = 1;
  Tensor activation;
  Tensor gradient;
};

struct TapResult {
  Prediction prediction;
  LossBreakdown loss;
  std::vector<FeatureTap> taps;
};

// One eval-mode forward pass and, when taps are requested, one backward
// pass of `loss_scale * L_det`. Taps name conv layers followed by norm and
// activation; anything else is a ConfigError.
TapResult ForwardWithTaps(const Detector& model, const DetectionSample& sample,
                          std::span<const std::string> tap_ids,
                          const LossWeights& weights = {},
                          double loss_scale = 1.0,
                          const ActivationHook* hook = nullptr);

// Eval-mode loss of one sample; the optional hook may perturb activations.
LossBreakdown SampleLoss(const Detector& model, const DetectionSample& sample,
                         const LossWeights& weights = {},
                         const ActivationHook* hook = nullptr);

// Binary checkpoint: header, JSON metadata (graph, classes, user fields) and
// the raw parameter arrays. The graph also goes to a sidecar JSON export.
void SaveCheckpoint(const std::string& path, const Detector& model,
                    const nlohmann::json& metadata = nlohmann::json::object());
Detector LoadCheckpoint(const std::string& path, nlohmann::json* metadata = nullptr);

}  // namespace salprune

#endif  // SALPRUNE_DETECTOR_H_
