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

#ifndef SALPRUNE_LOSS_H_
#define SALPRUNE_LOSS_H_

#include <array>
#include <span>
#include <vector>

#include "salprune/bbox.h"
#include "salprune/tensor.h"

namespace salprune {

// Loss-term weights. The defaults follow common single-stage detector
// practice and are configurable everywhere.
struct LossWeights {
  double cls = 1.0;
  double box = 5.0;
};

struct HeadGeometry {
  int stride = 8;
  int height = 0;
  int width = 0;
};

// Raw head channel layout: [objectness, class logits..., tx, ty, tw, th].
inline int HeadChannels(int num_classes) { return 5 + num_classes; }
inline int BoxChannel(int num_classes, int k) { return 1 + num_classes + k; }

// Raw outputs of one detection head.
struct HeadOutput {
  int stride = 8;
  Tensor raw;
  bool operator==(const HeadOutput&) const = default;
};

// Per-cell outputs of every head, ordered by ascending stride.
class Prediction {
 public:
  Prediction() = default;
  Prediction(std::vector<HeadOutput> heads, int num_classes)
      : heads_(std::move(heads)), num_classes_(num_classes) {}

  const std::vector<HeadOutput>& heads() const { return heads_; }
  int num_classes() const { return num_classes_; }

  // sigmoid(objectness logit), in [0,1].
  double Objectness(int head, int y, int x) const;
  // softmax over the class logits of one cell, each in [0,1].
  std::vector<double> ClassScores(int head, int y, int x) const;
  std::array<double, 4> BoxOffsets(int head, int y, int x) const;
  // Box in image pixels; width and height are always positive.
  BBox DecodeBox(int head, int y, int x) const;

  bool operator==(const Prediction&) const = default;

 private:
  std::vector<HeadOutput> heads_;
  int num_classes_ = 0;
};

// Stride-normalized regression target of a ground-truth box relative to
// cell (gx, gy): (cx/s - gx, cy/s - gy, log(w/s), log(h/s)).
std::array<double, 4> EncodeBox(const BBox& box, int stride, int gx, int gy);

struct CellTarget {
  int class_id = -1;  // -1: negative cell
  std::array<double, 4> box{};
  double area = 0.0;
  bool positive() const { return class_id >= 0; }
};

struct HeadTargets {
  HeadGeometry geometry;
  std::vector<CellTarget> cells;  // row-major H x W
  const CellTarget& at(int y, int x) const { return cells[y * geometry.width + x]; }
};

struct TargetMap {
  std::vector<HeadTargets> heads;  // same order as the geometry passed in
  int n_positives = 0;
};

// Center-cell assignment: each box becomes the positive of the cell holding
// its center at the finest head stride. Collisions keep the larger box, then
// the lower class id.
TargetMap AssignTargets(std::span<const BBox> boxes,
                        std::span<const HeadGeometry> heads);

struct LossBreakdown {
  double total = 0.0;
  double cls = 0.0;
  double box = 0.0;
  int n_positives = 0;
  // Set when there are no positives: box is 0 and cls holds only the
  // negative objectness term.
  bool no_positives = false;
};

// Objectness BCE on every cell plus class cross-entropy and smooth-L1 box
// regression on positives, each normalized by max(1, n_positives):
//   total = w.cls * cls + w.box * box.
// When `raw_grads` is non-null it receives d(scale * total)/d(raw) per head.
LossBreakdown DetectionLoss(const Prediction& pred, const TargetMap& targets,
                            const LossWeights& weights,
                            std::vector<Tensor>* raw_grads = nullptr,
                            double scale = 1.0);

double SmoothL1(double x);

}  // namespace salprune

#endif  // SALPRUNE_LOSS_H_
