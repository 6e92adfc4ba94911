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

#ifndef SALPRUNE_REWEIGHT_H_
#define SALPRUNE_REWEIGHT_H_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "salprune/bbox.h"

namespace salprune {

enum class DecayKind { kPower, kExponential, kFlatTopGaussian, kNone };

const char* DecayKindName(DecayKind kind);
// Accepts "power", "exp"/"exponential", "ftg"/"flat_top_gaussian", "none".
DecayKind DecayKindFromName(const std::string& name);

// Ring weighting profile. `s` is the power exponent; the exponential and
// flat-top Gaussian scales are fractions of the box's edge distance r0.
struct DecaySpec {
  DecayKind kind = DecayKind::kPower;
  double s = 1.0;
  double tau_ratio = 0.5;
  double sigma_ratio = 0.5;
};

// Which cells carry weight: the full method, ground-truth boxes only, or the
// whole feature map (no box information at all).
enum class ReweightMode { kBoxWithContext, kBoxOnly, kUniform };

struct ReweightConfig {
  DecaySpec decay;
  double margin_ratio = 0.25;
  ReweightMode mode = ReweightMode::kBoxWithContext;
};

// min(1, a * sq_dist^-s). Throws DomainError for sq_dist <= 0.
double DecayPower(double sq_dist, double a, double s);
// exp(-(r - r0) / tau) for r > r0, else 1.
double DecayExponential(double r, double r0, double tau);
// exp(-(r - r0)^2 / (2 sigma^2)) for r > r0, else 1.
double DecayFlatTopGaussian(double r, double r0, double sigma);

// Ring coefficient at squared distance `sq_dist` from a box center whose
// nearest edge midpoint lies at squared distance `edge_sq_dist`. Equals 1 at
// the edge and is non-increasing beyond it.
double DecayCoefficient(const DecaySpec& spec, double sq_dist, double edge_sq_dist);

// Feature-grid footprint of one box along both axes. Cell ranges are
// half-open; [x0, x1) is the box proper and [rx0, rx1) includes the margin.
struct FeatureFootprint {
  int x0 = 0, x1 = 0, y0 = 0, y1 = 0;
  int rx0 = 0, rx1 = 0, ry0 = 0, ry1 = 0;
  double center_x = 0.0, center_y = 0.0;  // feature units
  double edge_sq_dist = 0.0;              // r0^2
};

// Maps an image-space box onto a feature grid: floor/ceil outward, margin of
// margin_ratio x side on each side (cells whose centers fall inside the
// enlarged box), sub-cell axes snapped to the cell holding the center with a
// one-cell ring.
FeatureFootprint MapBoxToFeatures(const BBox& box, int feature_h, int feature_w,
                                  int stride, double margin_ratio);

struct ReweightMask {
  std::string node_id;
  int height = 0;
  int width = 0;
  std::vector<double> beta;      // row-major H x W, values in [0,1]
  std::vector<uint8_t> region;   // relaxed region (boxes plus margins)
  std::vector<uint8_t> in_box;   // cells covered by a box proper
  bool empty = false;            // built from zero boxes

  double at(int y, int x) const { return beta[static_cast<size_t>(y) * width + x]; }
  bool in_region(int y, int x) const { return region[static_cast<size_t>(y) * width + x] != 0; }
};

ReweightMask BuildReweightMask(std::span<const BBox> boxes, int feature_h,
                               int feature_w, int stride,
                               const ReweightConfig& config);

inline ReweightMask BuildReweightMask(std::span<const BBox> boxes, int feature_h,
                                      int feature_w, int stride,
                                      double margin_ratio, const DecaySpec& decay) {
  return BuildReweightMask(boxes, feature_h, feature_w, stride,
                           ReweightConfig{decay, margin_ratio, ReweightMode::kBoxWithContext});
}

// Grayscale PNG of the beta map.
void WriteMaskPng(const ReweightMask& mask, const std::string& path);

}  // namespace salprune

#endif  // SALPRUNE_REWEIGHT_H_
