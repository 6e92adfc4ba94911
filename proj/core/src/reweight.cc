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

#include "salprune/reweight.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "salprune/errors.h"
#include "salprune/png_io.h"

namespace salprune {

const char* DecayKindName(DecayKind kind) {
  switch (kind) {
    case DecayKind::kPower: return "power";
    case DecayKind::kExponential: return "exp";
    case DecayKind::kFlatTopGaussian: return "ftg";
    case DecayKind::kNone: return "none";
  }
  return "?";
}

DecayKind DecayKindFromName(const std::string& name) {
  if (name == "power") return DecayKind::kPower;
  if (name == "exp" || name == "exponential") return DecayKind::kExponential;
  if (name == "ftg" || name == "flat_top_gaussian") return DecayKind::kFlatTopGaussian;
  if (name == "none") return DecayKind::kNone;
  throw ConfigError("unknown decay kind: " + name);
}

double DecayPower(double sq_dist, double a, double s) {
  if (!(sq_dist > 0)) throw DomainError("power decay is singular at the box center");
  return std::min(1.0, a * std::pow(sq_dist, -s));
}

double DecayExponential(double r, double r0, double tau) {
  if (r <= r0) return 1.0;
  return std::exp(-(r - r0) / tau);
}

double DecayFlatTopGaussian(double r, double r0, double sigma) {
  if (r <= r0) return 1.0;
  const double d = r - r0;
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

double DecayCoefficient(const DecaySpec& spec, double sq_dist, double edge_sq_dist) {
  const double r0 = std::sqrt(edge_sq_dist);
  switch (spec.kind) {
    case DecayKind::kPower:
      if (sq_dist <= edge_sq_dist) return 1.0;
      // a chosen so that the coefficient is exactly 1 at the box edge
      return DecayPower(sq_dist, std::pow(edge_sq_dist, spec.s), spec.s);
    case DecayKind::kExponential:
      return DecayExponential(std::sqrt(sq_dist), r0, std::max(spec.tau_ratio * r0, 1e-6));
    case DecayKind::kFlatTopGaussian:
      return DecayFlatTopGaussian(std::sqrt(sq_dist), r0, std::max(spec.sigma_ratio * r0, 1e-6));
    case DecayKind::kNone:
      return 1.0;
  }
  return 0.0;
}

namespace {

struct AxisFootprint {
  int lo = 0, hi = 0;    // box cells [lo, hi)
  int rlo = 0, rhi = 0;  // relaxed cells [rlo, rhi)
  double center = 0.0;
  double half = 0.0;
};

AxisFootprint MapAxis(double min_px, double max_px, int size, int stride,
                      double margin_ratio) {
  AxisFootprint a;
  const double lo = min_px / stride;
  const double hi = max_px / stride;
  if (hi - lo < 1.0) {
    const int c = std::clamp(static_cast<int>(std::floor(0.5 * (lo + hi))), 0, size - 1);
    a.lo = c;
    a.hi = c + 1;
    const int ring = margin_ratio > 0 ? 1 : 0;
    a.rlo = std::max(0, c - ring);
    a.rhi = std::min(size, c + 1 + ring);
  } else {
    a.lo = std::clamp(static_cast<int>(std::floor(lo)), 0, size);
    a.hi = std::clamp(static_cast<int>(std::ceil(hi)), 0, size);
    if (a.hi <= a.lo) {  // box entirely off the map edge
      a.lo = std::min(a.lo, size - 1);
      a.hi = a.lo + 1;
    }
    const double m = margin_ratio * (a.hi - a.lo);
    // cells whose centers lie strictly inside the enlarged extent
    a.rlo = std::max(0, static_cast<int>(std::floor(a.lo - m - 0.5)) + 1);
    a.rhi = std::min(size, static_cast<int>(std::ceil(a.hi + m - 0.5)));
    a.rlo = std::min(a.rlo, a.lo);
    a.rhi = std::max(a.rhi, a.hi);
  }
  a.center = 0.5 * (a.lo + a.hi);
  a.half = 0.5 * (a.hi - a.lo);
  return a;
}

}  // namespace

FeatureFootprint MapBoxToFeatures(const BBox& box, int feature_h, int feature_w,
                                  int stride, double margin_ratio) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (margin_ratio < 0) throw ConfigError("margin_ratio must be >= 0");
  const AxisFootprint ax = MapAxis(box.x_min, box.x_max, feature_w, stride, margin_ratio);
  const AxisFootprint ay = MapAxis(box.y_min, box.y_max, feature_h, stride, margin_ratio);
  FeatureFootprint f;
  f.x0 = ax.lo;
  f.x1 = ax.hi;
  f.y0 = ay.lo;
  f.y1 = ay.hi;
  f.rx0 = ax.rlo;
  f.rx1 = ax.rhi;
  f.ry0 = ay.rlo;
  f.ry1 = ay.rhi;
  f.center_x = ax.center;
  f.center_y = ay.center;
  const double r0 = std::min(ax.half, ay.half);
  f.edge_sq_dist = r0 * r0;
  return f;
}

ReweightMask BuildReweightMask(std::span<const BBox> boxes, int feature_h,
                               int feature_w, int stride,
                               const ReweightConfig& config) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (config.margin_ratio < 0) throw ConfigError("margin_ratio must be >= 0");
  if (config.decay.kind == DecayKind::kPower && !(config.decay.s > 0)) {
    throw ConfigError("power decay exponent must be > 0");
  }
  ReweightMask mask;
  mask.height = feature_h;
  mask.width = feature_w;
  const size_t cells = static_cast<size_t>(feature_h) * feature_w;
  mask.beta.assign(cells, 0.0);
  mask.region.assign(cells, 0);
  mask.in_box.assign(cells, 0);
  mask.empty = boxes.empty();
  if (config.mode == ReweightMode::kUniform) {
    std::fill(mask.beta.begin(), mask.beta.end(), 1.0);
    std::fill(mask.region.begin(), mask.region.end(), 1);
    return mask;
  }
  const double margin = config.mode == ReweightMode::kBoxOnly ? 0.0 : config.margin_ratio;
  for (const BBox& box : boxes) {
    const FeatureFootprint f = MapBoxToFeatures(box, feature_h, feature_w, stride, margin);
    const int rx0 = config.mode == ReweightMode::kBoxOnly ? f.x0 : f.rx0;
    const int rx1 = config.mode == ReweightMode::kBoxOnly ? f.x1 : f.rx1;
    const int ry0 = config.mode == ReweightMode::kBoxOnly ? f.y0 : f.ry0;
    const int ry1 = config.mode == ReweightMode::kBoxOnly ? f.y1 : f.ry1;
    for (int y = ry0; y < ry1; ++y) {
      for (int x = rx0; x < rx1; ++x) {
        const size_t idx = static_cast<size_t>(y) * feature_w + x;
        mask.region[idx] = 1;
        double beta = 1.0;
        if (x >= f.x0 && x < f.x1 && y >= f.y0 && y < f.y1) {
          mask.in_box[idx] = 1;
        } else {
          const double dx = x + 0.5 - f.center_x;
          const double dy = y + 0.5 - f.center_y;
          // Far ring cells of thin boxes can underflow; they stay in (0, 1].
          beta = std::max(DecayCoefficient(config.decay, dx * dx + dy * dy, f.edge_sq_dist),
                          std::numeric_limits<double>::min());
        }
        mask.beta[idx] = std::max(mask.beta[idx], beta);
      }
    }
  }
  return mask;
}

void WriteMaskPng(const ReweightMask& mask, const std::string& path) {
  Raster r;
  r.width = mask.width;
  r.height = mask.height;
  r.channels = 1;
  r.pixels.resize(mask.beta.size());
  for (size_t i = 0; i < mask.beta.size(); ++i) {
    r.pixels[i] = static_cast<uint8_t>(std::lround(std::clamp(mask.beta[i], 0.0, 1.0) * 255.0));
  }
  WritePng(path, r);
}

}  // namespace salprune
