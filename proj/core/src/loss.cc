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

#include "salprune/loss.h"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "salprune/errors.h"

namespace salprune {
namespace {

double Sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + exp(x)) without overflow.
double Softplus(double x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double SmoothL1Grad(double x) {
  if (x > 1.0) return 1.0;
  if (x < -1.0) return -1.0;
  return x;
}

}  // namespace

double SmoothL1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * a * a : a - 0.5;
}

double Prediction::Objectness(int head, int y, int x) const {
  return Sigmoid(heads_[head].raw.at(0, y, x));
}

std::vector<double> Prediction::ClassScores(int head, int y, int x) const {
  const Tensor& raw = heads_[head].raw;
  std::vector<double> p(num_classes_);
  double hi = raw.at(1, y, x);
  for (int k = 1; k < num_classes_; ++k) hi = std::max(hi, raw.at(1 + k, y, x));
  double sum = 0;
  for (int k = 0; k < num_classes_; ++k) {
    p[k] = std::exp(raw.at(1 + k, y, x) - hi);
    sum += p[k];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::array<double, 4> Prediction::BoxOffsets(int head, int y, int x) const {
  const Tensor& raw = heads_[head].raw;
  std::array<double, 4> o;
  for (int k = 0; k < 4; ++k) o[k] = raw.at(BoxChannel(num_classes_, k), y, x);
  return o;
}

BBox Prediction::DecodeBox(int head, int y, int x) const {
  const double s = heads_[head].stride;
  const auto o = BoxOffsets(head, y, x);
  const double cx = (x + o[0]) * s;
  const double cy = (y + o[1]) * s;
  const double w = std::exp(std::clamp(o[2], -10.0, 10.0)) * s;
  const double h = std::exp(std::clamp(o[3], -10.0, 10.0)) * s;
  return BBox{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h, 0};
}

std::array<double, 4> EncodeBox(const BBox& box, int stride, int gx, int gy) {
  const double s = stride;
  return {box.center_x() / s - gx, box.center_y() / s - gy,
          std::log(box.width() / s), std::log(box.height() / s)};
}

TargetMap AssignTargets(std::span<const BBox> boxes,
                        std::span<const HeadGeometry> heads) {
  TargetMap targets;
  if (heads.empty()) throw ContractError("AssignTargets: no heads");
  size_t finest = 0;
  for (size_t h = 0; h < heads.size(); ++h) {
    HeadTargets ht;
    ht.geometry = heads[h];
    ht.cells.resize(static_cast<size_t>(heads[h].height) * heads[h].width);
    targets.heads.push_back(std::move(ht));
    if (heads[h].stride < heads[finest].stride) finest = h;
  }
  HeadTargets& head = targets.heads[finest];
  const int s = head.geometry.stride;
  // Box identity used for collisions; the full tuple makes the outcome
  // independent of input order.
  auto key = [](const BBox& b) {
    return std::make_tuple(-b.area(), b.class_id, b.x_min, b.y_min, b.x_max, b.y_max);
  };
  std::vector<const BBox*> owner(head.cells.size(), nullptr);
  for (const BBox& b : boxes) {
    const int gx = std::clamp(static_cast<int>(std::floor(b.center_x() / s)), 0,
                              head.geometry.width - 1);
    const int gy = std::clamp(static_cast<int>(std::floor(b.center_y() / s)), 0,
                              head.geometry.height - 1);
    const size_t idx = static_cast<size_t>(gy) * head.geometry.width + gx;
    if (owner[idx] == nullptr || key(b) < key(*owner[idx])) {
      owner[idx] = &b;
      CellTarget& cell = head.cells[idx];
      cell.class_id = b.class_id;
      cell.box = EncodeBox(b, s, gx, gy);
      cell.area = b.area();
    }
  }
  for (const BBox* b : owner) {
    if (b != nullptr) ++targets.n_positives;
  }
  return targets;
}

LossBreakdown DetectionLoss(const Prediction& pred, const TargetMap& targets,
                            const LossWeights& weights,
                            std::vector<Tensor>* raw_grads, double scale) {
  if (weights.cls < 0 || weights.box < 0) {
    throw ConfigError("loss weights must be nonnegative");
  }
  if (pred.heads().size() != targets.heads.size()) {
    throw ContractError("prediction and targets disagree on head count");
  }
  const int C = pred.num_classes();
  LossBreakdown out;
  out.n_positives = targets.n_positives;
  out.no_positives = targets.n_positives == 0;
  const double norm = 1.0 / std::max(1, targets.n_positives);

  if (raw_grads != nullptr) {
    raw_grads->clear();
    for (const HeadOutput& h : pred.heads()) {
      raw_grads->emplace_back(h.raw.channels(), h.raw.height(), h.raw.width());
    }
  }
  double cls_sum = 0.0;
  double box_sum = 0.0;
  for (size_t h = 0; h < pred.heads().size(); ++h) {
    const Tensor& raw = pred.heads()[h].raw;
    const HeadTargets& ht = targets.heads[h];
    if (raw.height() != ht.geometry.height || raw.width() != ht.geometry.width ||
        raw.channels() != HeadChannels(C)) {
      throw ContractError("prediction and target geometry mismatch");
    }
    Tensor* g = raw_grads ? &(*raw_grads)[h] : nullptr;
    const double cls_scale = scale * weights.cls * norm;
    const double box_scale = scale * weights.box * norm;
    for (int y = 0; y < raw.height(); ++y) {
      for (int x = 0; x < raw.width(); ++x) {
        const CellTarget& t = ht.at(y, x);
        const double o = raw.at(0, y, x);
        if (!t.positive()) {
          cls_sum += Softplus(o);  // BCE with target 0
          if (g) g->at(0, y, x) = cls_scale * Sigmoid(o);
          continue;
        }
        cls_sum += Softplus(-o);  // BCE with target 1
        if (g) g->at(0, y, x) = cls_scale * (Sigmoid(o) - 1.0);
        // softmax cross-entropy
        double hi = raw.at(1, y, x);
        for (int k = 1; k < C; ++k) hi = std::max(hi, raw.at(1 + k, y, x));
        double sum = 0.0;
        for (int k = 0; k < C; ++k) sum += std::exp(raw.at(1 + k, y, x) - hi);
        const double log_z = hi + std::log(sum);
        cls_sum += log_z - raw.at(1 + t.class_id, y, x);
        if (g) {
          for (int k = 0; k < C; ++k) {
            const double p = std::exp(raw.at(1 + k, y, x) - log_z);
            g->at(1 + k, y, x) = cls_scale * (p - (k == t.class_id ? 1.0 : 0.0));
          }
        }
        for (int k = 0; k < 4; ++k) {
          const double d = raw.at(BoxChannel(C, k), y, x) - t.box[k];
          box_sum += SmoothL1(d);
          if (g) g->at(BoxChannel(C, k), y, x) = box_scale * SmoothL1Grad(d);
        }
      }
    }
  }
  out.cls = cls_sum * norm;
  out.box = box_sum * norm;
  out.total = weights.cls * out.cls + weights.box * out.box;
  return out;
}

}  // namespace salprune
