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

#include "salprune/train.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "salprune/errors.h"

namespace salprune {

nlohmann::json TrainConfigToJson(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"schedule", c.cosine ? "cosine" : "constant"},
          {"warmup_epochs", c.warmup_epochs},
          {"start_epoch", c.start_epoch},
          {"total_epochs", c.total_epochs},
          {"hflip", c.hflip},
          {"seed", c.seed},
          {"lambda_cls", c.loss.cls},
          {"lambda_box", c.loss.box}};
}

TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  if (j.contains("schedule")) c.cosine = j.at("schedule").get<std::string>() == "cosine";
  c.warmup_epochs = j.value("warmup_epochs", c.warmup_epochs);
  c.start_epoch = j.value("start_epoch", c.start_epoch);
  c.total_epochs = j.value("total_epochs", c.total_epochs);
  c.hflip = j.value("hflip", c.hflip);
  c.seed = j.value("seed", c.seed);
  c.loss.cls = j.value("lambda_cls", c.loss.cls);
  c.loss.box = j.value("lambda_box", c.loss.box);
  return c;
}

double LearningRateAt(const TrainConfig& c, int epoch, double progress) {
  const double t = epoch + progress;
  if (t < c.warmup_epochs) return c.lr * (t + 1e-3) / c.warmup_epochs;
  if (!c.cosine) return c.lr;
  const int total = c.total_epochs > 0 ? c.total_epochs : c.start_epoch + c.epochs;
  const double span = std::max(1e-9, static_cast<double>(total - c.warmup_epochs));
  const double u = std::clamp((t - c.warmup_epochs) / span, 0.0, 1.0);
  const double floor = 0.01 * c.lr;
  return floor + (c.lr - floor) * 0.5 * (1.0 + std::cos(M_PI * u));
}

DetectionSample FlipHorizontal(const DetectionSample& sample) {
  DetectionSample out;
  out.sample_id = sample.sample_id;
  const Tensor& img = sample.image;
  out.image = Tensor(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        out.image.at(c, y, img.width() - 1 - x) = img.at(c, y, x);
      }
    }
  }
  for (BBox b : sample.boxes) {
    const double x0 = img.width() - b.x_max;
    const double x1 = img.width() - b.x_min;
    b.x_min = x0;
    b.x_max = x1;
    out.boxes.push_back(b);
  }
  return out;
}

std::vector<EpochStats> Train(Detector& model, std::span<const DetectionSample> samples,
                              const TrainConfig& config,
                              const std::function<void(const EpochStats&)>& on_epoch) {
  if (samples.empty()) throw ConfigError("training needs at least one sample");
  if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (config.epochs < 0) throw ConfigError("epochs must be >= 0");
  const ModelGraph& graph = model.graph();
  const int n = static_cast<int>(samples.size());
  const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;

  std::vector<NodeGrads> velocity(graph.nodes().size());
  for (size_t i = 0; i < velocity.size(); ++i) {
    const NodeParams& p = model.params()[i];
    velocity[i].weight.assign(p.weight.size(), 0.0);
    velocity[i].bias.assign(p.bias.size(), 0.0);
    velocity[i].gamma.assign(p.gamma.size(), 0.0);
    velocity[i].beta.assign(p.beta.size(), 0.0);
  }

  std::vector<EpochStats> history;
  for (int epoch = config.start_epoch; epoch < config.start_epoch + config.epochs; ++epoch) {
    std::seed_seq seq{static_cast<uint32_t>(config.seed), static_cast<uint32_t>(config.seed >> 32),
                      static_cast<uint32_t>(epoch)};
    std::mt19937_64 rng(seq);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::bernoulli_distribution flip(0.5);

    EpochStats stats;
    stats.epoch = epoch;
    for (int step = 0; step < steps_per_epoch; ++step) {
      const int begin = step * config.batch_size;
      const int end = std::min(n, begin + config.batch_size);
      std::vector<Tensor> images;
      std::vector<std::vector<BBox>> boxes;
      for (int k = begin; k < end; ++k) {
        const DetectionSample& s = samples[order[k]];
        if (config.hflip && flip(rng)) {
          DetectionSample f = FlipHorizontal(s);
          images.push_back(std::move(f.image));
          boxes.push_back(std::move(f.boxes));
        } else {
          images.push_back(s.image);
          boxes.push_back(s.boxes);
        }
      }
      const int batch = static_cast<int>(images.size());
      ForwardCache cache = model.Forward(images, Mode::kTrain);
      const std::vector<std::string> heads = model.HeadIds();
      std::vector<std::vector<Tensor>> head_grads(heads.size(), std::vector<Tensor>(batch));
      for (int s = 0; s < batch; ++s) {
        const auto geometry = model.HeadGeometries(images[s].height(), images[s].width());
        const TargetMap targets = AssignTargets(boxes[s], geometry);
        std::vector<Tensor> grads;
        const LossBreakdown loss = DetectionLoss(model.PredictionFor(cache, s), targets,
                                                 config.loss, &grads, 1.0 / batch);
        if (!std::isfinite(loss.total)) {
          throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) +
                                 " step " + std::to_string(step));
        }
        stats.loss += loss.total / n;
        stats.cls += loss.cls / n;
        stats.box += loss.box / n;
        for (size_t h = 0; h < heads.size(); ++h) head_grads[h][s] = std::move(grads[h]);
      }
      std::vector<NodeGrads> grads;
      model.Backward(cache, head_grads, &grads, nullptr);
      model.UpdateRunningStats(cache);

      const double lr = LearningRateAt(config, epoch, static_cast<double>(step) / steps_per_epoch);
      stats.lr = lr;
      for (size_t i = 0; i < grads.size(); ++i) {
        NodeParams& p = model.params()[i];
        NodeGrads& v = velocity[i];
        auto sgd = [&](std::vector<double>& w, const std::vector<double>& g,
                       std::vector<double>& vel, double decay) {
          for (size_t k = 0; k < w.size(); ++k) {
            const double gk = g[k] + decay * w[k];
            vel[k] = config.momentum * vel[k] + gk;
            w[k] -= lr * vel[k];
          }
        };
        sgd(p.weight, grads[i].weight, v.weight, config.weight_decay);
        sgd(p.bias, grads[i].bias, v.bias, 0.0);
        sgd(p.gamma, grads[i].gamma, v.gamma, 0.0);
        sgd(p.beta, grads[i].beta, v.beta, 0.0);
      }
    }
    history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

}  // namespace salprune
