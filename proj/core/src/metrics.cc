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

#include "salprune/metrics.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "salprune/errors.h"

namespace salprune {

double Iou(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

AreaRange AllAreas() { return {0.0, 1e30}; }
AreaRange SmallAreas(const AreaBuckets& b) { return {0.0, b.small_max}; }
AreaRange MediumAreas(const AreaBuckets& b) { return {b.small_max, b.medium_max}; }
AreaRange LargeAreas(const AreaBuckets& b) { return {b.medium_max, 1e30}; }

namespace {

bool InRange(double area, const AreaRange& r) { return area >= r.min && area < r.max; }

}  // namespace

bool RanksBefore(const Detection& a, const Detection& b) {
  if (a.confidence != b.confidence) return a.confidence > b.confidence;
  return std::tie(a.sample_id, a.box.x_min, a.box.y_min, a.box.x_max, a.box.y_max) <
         std::tie(b.sample_id, b.box.x_min, b.box.y_min, b.box.x_max, b.box.y_max);
}

namespace {

}  // namespace

double InterpolatedAp(std::span<const double> precision, std::span<const double> recall,
                      ApInterpolation interpolation) {
  const size_t n = precision.size();
  std::vector<double> envelope(precision.begin(), precision.end());
  for (size_t i = n; i-- > 1;) envelope[i - 1] = std::max(envelope[i - 1], envelope[i]);
  const int points = interpolation == ApInterpolation::k101Point ? 101 : 11;
  double sum = 0.0;
  for (int t = 0; t < points; ++t) {
    const double thr = static_cast<double>(t) / (points - 1);
    // first detection index whose recall reaches the threshold
    const auto it = std::lower_bound(recall.begin(), recall.end(), thr);
    if (it != recall.end()) sum += envelope[it - recall.begin()];
  }
  return sum / points;
}

std::optional<double> AveragePrecision(std::span<const Detection> detections,
                                       const Annotations& ground_truth, int class_id,
                                       double iou_threshold, AreaRange range,
                                       ApInterpolation interpolation) {
  struct Gt {
    const BBox* box;
    bool ignore;
    bool matched = false;
  };
  std::map<std::string, std::vector<Gt>> gts;
  int n_positive = 0;
  for (const auto& [id, boxes] : ground_truth) {
    for (const BBox& b : boxes) {
      if (b.class_id != class_id) continue;
      const bool ignore = !InRange(b.area(), range);
      gts[id].push_back({&b, ignore});
      if (!ignore) ++n_positive;
    }
  }
  if (n_positive == 0) return std::nullopt;

  std::vector<size_t> order;
  for (size_t i = 0; i < detections.size(); ++i) {
    if (detections[i].class_id == class_id) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return RanksBefore(detections[a], detections[b]);
  });

  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (size_t i : order) {
    const Detection& d = detections[i];
    auto it = gts.find(d.sample_id);
    int best = -1;
    double best_iou = iou_threshold;
    bool best_ignored = true;
    if (it != gts.end()) {
      for (size_t g = 0; g < it->second.size(); ++g) {
        Gt& gt = it->second[g];
        if (gt.matched) continue;
        // a real match always beats an ignored one
        if (best >= 0 && !best_ignored && gt.ignore) continue;
        const double v = Iou(d.box, *gt.box);
        if (v < iou_threshold) continue;
        if (best < 0 || (best_ignored && !gt.ignore) || v > best_iou) {
          best = static_cast<int>(g);
          best_iou = v;
          best_ignored = gt.ignore;
        }
      }
    }
    if (best >= 0) {
      it->second[best].matched = true;
      if (best_ignored) continue;
      ++tp;
    } else {
      if (!InRange(d.box.area(), range)) continue;
      ++fp;
    }
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / n_positive);
  }
  if (precision.empty()) return 0.0;
  return InterpolatedAp(precision, recall, interpolation);
}

std::optional<double> MeanAp(std::span<const std::optional<double>> aps) {
  double sum = 0.0;
  int n = 0;
  for (const auto& ap : aps) {
    if (ap) {
      sum += *ap;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

EvalReport EvaluateDetections(std::span<const Detection> detections,
                              const Annotations& ground_truth, int n_classes,
                              const AreaBuckets& buckets,
                              ApInterpolation interpolation, double iou_threshold) {
  EvalReport report;
  report.n_detections = static_cast<int>(detections.size());
  for (const auto& [id, boxes] : ground_truth) report.n_ground_truth += static_cast<int>(boxes.size());
  std::vector<std::optional<double>> small, medium, large;
  for (int c = 0; c < n_classes; ++c) {
    report.per_class.push_back(AveragePrecision(detections, ground_truth, c, iou_threshold,
                                                AllAreas(), interpolation));
    small.push_back(AveragePrecision(detections, ground_truth, c, iou_threshold,
                                     SmallAreas(buckets), interpolation));
    medium.push_back(AveragePrecision(detections, ground_truth, c, iou_threshold,
                                      MediumAreas(buckets), interpolation));
    large.push_back(AveragePrecision(detections, ground_truth, c, iou_threshold,
                                     LargeAreas(buckets), interpolation));
  }
  report.map = MeanAp(report.per_class);
  report.ap_small = MeanAp(small);
  report.ap_medium = MeanAp(medium);
  report.ap_large = MeanAp(large);
  return report;
}

namespace {

nlohmann::json OptionalToJson(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> OptionalFromJson(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace

nlohmann::json EvalReportToJson(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& ap : r.per_class) per_class.push_back(OptionalToJson(ap));
  return {
      {"mAP", OptionalToJson(r.map)},
      {"AP_s", OptionalToJson(r.ap_small)},
      {"AP_m", OptionalToJson(r.ap_medium)},
      {"AP_l", OptionalToJson(r.ap_large)},
      {"per_class_AP", per_class},
      {"n_ground_truth", r.n_ground_truth},
      {"n_detections", r.n_detections},
  };
}

EvalReport EvalReportFromJson(const nlohmann::json& j) {
  EvalReport r;
  r.map = OptionalFromJson(j.at("mAP"));
  r.ap_small = OptionalFromJson(j.at("AP_s"));
  r.ap_medium = OptionalFromJson(j.at("AP_m"));
  r.ap_large = OptionalFromJson(j.at("AP_l"));
  for (const auto& v : j.at("per_class_AP")) r.per_class.push_back(OptionalFromJson(v));
  r.n_ground_truth = j.value("n_ground_truth", 0);
  r.n_detections = j.value("n_detections", 0);
  return r;
}

nlohmann::json DetectionsToJson(std::span<const Detection> detections) {
  nlohmann::json out = nlohmann::json::array();
  for (const Detection& d : detections) {
    out.push_back({{"sample_id", d.sample_id},
                   {"box", {d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max}},
                   {"class", d.class_id},
                   {"confidence", d.confidence}});
  }
  return out;
}

std::vector<Detection> DetectionsFromJson(const nlohmann::json& j) {
  std::vector<Detection> out;
  for (const auto& e : j) {
    Detection d;
    d.sample_id = e.at("sample_id").get<std::string>();
    const auto& b = e.at("box");
    d.class_id = e.at("class").get<int>();
    d.box = BBox{b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(),
                 b.at(3).get<double>(), d.class_id};
    d.confidence = e.at("confidence").get<double>();
    if (!std::isfinite(d.confidence) || !d.box.valid()) {
      throw IoError("invalid detection for sample " + d.sample_id);
    }
    out.push_back(d);
  }
  return out;
}

CostReport CountCost(const ModelGraph& graph, int input_h, int input_w) {
  graph.Validate();
  CostReport report;
  std::vector<std::pair<int64_t, int64_t>> hw(graph.nodes().size());
  for (size_t i = 0; i < graph.nodes().size(); ++i) {
    const GraphNode& n = graph.nodes()[i];
    LayerCost cost;
    cost.node_id = n.id;
    switch (n.kind) {
      case NodeKind::kInput:
        hw[i] = {input_h, input_w};
        break;
      case NodeKind::kConv:
      case NodeKind::kHead: {
        const auto in = hw[graph.IndexOf(n.inputs[0])];
        const int pad = n.kernel / 2;
        const int64_t ho = (in.first + 2 * pad - n.kernel) / n.stride + 1;
        const int64_t wo = (in.second + 2 * pad - n.kernel) / n.stride + 1;
        hw[i] = {ho, wo};
        const int64_t macs_per_pixel =
            static_cast<int64_t>(n.out_channels) * n.in_channels * n.kernel * n.kernel;
        cost.params = macs_per_pixel + (n.bias ? n.out_channels : 0);
        cost.flops = 2 * macs_per_pixel * ho * wo;
        break;
      }
      case NodeKind::kNorm:
        hw[i] = hw[graph.IndexOf(n.inputs[0])];
        cost.params = 2 * static_cast<int64_t>(n.out_channels);
        break;
      case NodeKind::kActivation:
      case NodeKind::kAdd:
      case NodeKind::kConcat:
        hw[i] = hw[graph.IndexOf(n.inputs[0])];
        break;
      default:
        throw ContractError("cannot count cost of node kind at " + n.id);
    }
    report.params += cost.params;
    report.flops += cost.flops;
    report.layers.push_back(cost);
  }
  return report;
}

int64_t CountParams(const ModelGraph& graph) { return CountCost(graph, 1, 1).params; }

int64_t CountFlops(const ModelGraph& graph, int input_h, int input_w) {
  return CountCost(graph, input_h, input_w).flops;
}

nlohmann::json CostReportToJson(const CostReport& r) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerCost& l : r.layers) {
    if (l.params == 0 && l.flops == 0) continue;
    layers.push_back({{"node", l.node_id}, {"params", l.params}, {"flops", l.flops}});
  }
  return {{"params", r.params},
          {"flops", r.flops},
          {"flops_convention", "2 x multiply-accumulates of conv/head layers; norm and activation ignored"},
          {"layers", layers}};
}

}  // namespace salprune
