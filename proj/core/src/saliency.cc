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

#include "salprune/saliency.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "salprune/errors.h"
#include "spdlog/spdlog.h"

namespace salprune {
namespace {

// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void Add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace

double ChannelSaliency(std::span<const double> grad_map, const ReweightMask& mask) {
  if (grad_map.size() != mask.beta.size()) {
    throw ContractError("gradient map and reweight mask differ in size");
  }
  double w = 0.0;
  for (size_t i = 0; i < grad_map.size(); ++i) {
    if (grad_map[i] > 0) w += mask.beta[i] * grad_map[i];
  }
  return w;
}

ChannelScore ChannelImportance(double w, std::span<const double> act_map,
                               std::span<const uint8_t> region) {
  if (act_map.size() != region.size()) {
    throw ContractError("activation map and region differ in size");
  }
  ChannelScore score;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  size_t count = 0;
  for (size_t i = 0; i < act_map.size(); ++i) {
    if (!region[i]) continue;
    const double m = std::max(0.0, w * act_map[i]);
    lo = std::min(lo, m);
    hi = std::max(hi, m);
    ++count;
  }
  if (count == 0) {
    score.empty_region = true;
    return score;
  }
  if (!(hi > lo)) return score;
  const double range = hi - lo;
  double sum = 0.0;
  for (size_t i = 0; i < act_map.size(); ++i) {
    if (!region[i]) continue;
    sum += (std::max(0.0, w * act_map[i]) - lo) / range;
  }
  score.value = sum;
  return score;
}

ImportanceTables SampleImportance(std::span<const FeatureTap> taps,
                                  std::span<const BBox> boxes,
                                  const SaliencyConfig& config) {
  ImportanceTables tables;
  for (const FeatureTap& tap : taps) {
    if (!tap.activation.SameShape(tap.gradient)) {
      throw ContractError("tap activation and gradient shapes differ at " + tap.node_id);
    }
    ReweightMask mask = BuildReweightMask(boxes, tap.activation.height(),
                                          tap.activation.width(), tap.stride,
                                          config.reweight);
    mask.node_id = tap.node_id;
    std::vector<uint8_t> full;
    std::span<const uint8_t> region = mask.region;
    if (config.extent == ImportanceExtent::kFull) {
      full.assign(mask.region.size(), 1);
      region = full;
    }
    ImportanceTable table;
    table.node_id = tap.node_id;
    table.scores.resize(tap.activation.channels());
    for (int k = 0; k < tap.activation.channels(); ++k) {
      const double w = ChannelSaliency(tap.gradient.channel(k), mask);
      table.scores[k] = ChannelImportance(w, tap.activation.channel(k), region).value;
    }
    tables[tap.node_id] = std::move(table);
  }
  return tables;
}

ImportanceResult ComputeImportance(const Detector& model,
                                   std::span<const DetectionSample> samples,
                                   const SaliencyConfig& config) {
  if (samples.empty()) throw ConfigError("ComputeImportance needs at least one sample");
  const std::vector<std::string> taps =
      config.taps.empty() ? DefaultTapLayers(model.graph()) : config.taps;

  ImportanceResult result;
  std::map<std::string, std::vector<CompensatedSum>> sums;
  for (const DetectionSample& sample : samples) {
    if (sample.boxes.empty() && config.reweight.mode != ReweightMode::kUniform) {
      ++result.n_skipped;
      continue;
    }
    const TapResult tr = ForwardWithTaps(model, sample, taps, config.loss, config.loss_scale);
    const ImportanceTables tables = SampleImportance(tr.taps, sample.boxes, config);
    for (const auto& [id, table] : tables) {
      auto& acc = sums[id];
      acc.resize(table.scores.size());
      for (size_t k = 0; k < table.scores.size(); ++k) acc[k].Add(table.scores[k]);
    }
    ++result.n_used;
  }
  if (result.n_used == 0) {
    throw ConfigError("all samples are box-free; no saliency signal exists");
  }
  if (result.n_skipped > 0) {
    spdlog::warn("skipped {} box-free sample(s) when averaging importance", result.n_skipped);
  }
  for (auto& [id, acc] : sums) {
    ImportanceTable table;
    table.node_id = id;
    table.n_samples = result.n_used;
    table.scores.resize(acc.size());
    for (size_t k = 0; k < acc.size(); ++k) table.scores[k] = acc[k].value() / result.n_used;
    result.tables[id] = std::move(table);
  }
  return result;
}

nlohmann::json ImportanceToJson(const ImportanceTables& tables,
                                const nlohmann::json& metadata) {
  nlohmann::json layers = nlohmann::json::object();
  int n = 0;
  for (const auto& [id, table] : tables) {
    nlohmann::json scores = nlohmann::json::object();
    for (size_t k = 0; k < table.scores.size(); ++k) scores[std::to_string(k)] = table.scores[k];
    layers[id] = std::move(scores);
    n = table.n_samples;
  }
  nlohmann::json meta = metadata.is_null() ? nlohmann::json::object() : metadata;
  if (!meta.contains("N")) meta["N"] = n;
  return {{"metadata", meta}, {"layers", layers}};
}

ImportanceTables ImportanceFromJson(const nlohmann::json& j, nlohmann::json* metadata) {
  if (!j.contains("layers") || !j.at("layers").is_object()) {
    throw IoError("importance JSON must contain a \"layers\" object");
  }
  const nlohmann::json meta = j.value("metadata", nlohmann::json::object());
  ImportanceTables tables;
  for (const auto& [id, scores] : j.at("layers").items()) {
    ImportanceTable table;
    table.node_id = id;
    table.n_samples = meta.value("N", 1);
    table.scores.assign(scores.size(), 0.0);
    for (const auto& [key, value] : scores.items()) {
      size_t pos = 0;
      const int k = std::stoi(key, &pos);
      if (pos != key.size() || k < 0 || k >= static_cast<int>(scores.size())) {
        throw IoError("bad channel index '" + key + "' in layer " + id);
      }
      table.scores[k] = value.get<double>();
    }
    tables[id] = std::move(table);
  }
  if (metadata != nullptr) *metadata = meta;
  return tables;
}

nlohmann::json SaliencyConfigToJson(const SaliencyConfig& c) {
  const char* mode = c.reweight.mode == ReweightMode::kBoxWithContext ? "box_context"
                     : c.reweight.mode == ReweightMode::kBoxOnly      ? "box_only"
                                                                      : "uniform";
  return {
      {"decay",
       {{"kind", DecayKindName(c.reweight.decay.kind)},
        {"s", c.reweight.decay.s},
        {"tau_ratio", c.reweight.decay.tau_ratio},
        {"sigma_ratio", c.reweight.decay.sigma_ratio}}},
      {"margin", c.reweight.margin_ratio},
      {"reweight_mode", mode},
      {"importance_extent", c.extent == ImportanceExtent::kRegion ? "region" : "full"},
      {"lambda_cls", c.loss.cls},
      {"lambda_box", c.loss.box},
      {"taps", c.taps},
  };
}

}  // namespace salprune
