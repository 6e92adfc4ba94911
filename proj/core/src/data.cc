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

#include "salprune/data.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "salprune/errors.h"
#include "salprune/png_io.h"
#include "spdlog/spdlog.h"

namespace salprune {
namespace fs = std::filesystem;

namespace {

enum class ShapeKind { kSquare, kDisk, kTriangle, kRing, kCross, kDiamond };

constexpr std::array<ShapeKind, 6> kShapes = {
    ShapeKind::kSquare, ShapeKind::kDisk,  ShapeKind::kTriangle,
    ShapeKind::kRing,   ShapeKind::kCross, ShapeKind::kDiamond};

constexpr std::array<std::array<double, 3>, 8> kPalette = {{
    {0.90, 0.15, 0.10},
    {0.10, 0.80, 0.20},
    {0.15, 0.30, 0.95},
    {0.95, 0.85, 0.10},
    {0.85, 0.15, 0.85},
    {0.10, 0.85, 0.85},
    {0.98, 0.55, 0.05},
    {0.98, 0.98, 0.98},
}};

std::mt19937_64 ImageRng(uint64_t seed, int index) {
  std::seed_seq seq{static_cast<uint32_t>(seed), static_cast<uint32_t>(seed >> 32),
                    static_cast<uint32_t>(index), 0x5a11e9u};
  return std::mt19937_64(seq);
}

// Coverage test in box-normalized coordinates u, v in [0,1].
bool ShapeCovers(ShapeKind kind, double u, double v) {
  const double du = u - 0.5;
  const double dv = v - 0.5;
  switch (kind) {
    case ShapeKind::kSquare:
      return true;
    case ShapeKind::kDisk:
      return du * du + dv * dv <= 0.25;
    case ShapeKind::kTriangle:
      // apex at top center, base along the bottom edge
      return std::abs(du) <= 0.5 * v;
    case ShapeKind::kRing: {
      const double r2 = du * du + dv * dv;
      return r2 <= 0.25 && r2 >= 0.04;
    }
    case ShapeKind::kCross:
      return std::abs(du) <= 0.18 || std::abs(dv) <= 0.18;
    case ShapeKind::kDiamond:
      return std::abs(du) + std::abs(dv) <= 0.5;
  }
  return false;
}

struct ClassStyle {
  ShapeKind shape;
  std::array<double, 3> color;
  bool striped;
};

ClassStyle StyleFor(int class_id) {
  ClassStyle style;
  style.shape = kShapes[class_id % kShapes.size()];
  style.color = kPalette[class_id % kPalette.size()];
  style.striped = (class_id / static_cast<int>(kShapes.size())) % 2 == 1;
  return style;
}

void PaintBackground(Tensor& image, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.03);
  const int h = image.height();
  const int w = image.width();
  std::array<double, 3> base;
  const double gray = 0.30 + 0.25 * uni(rng);
  for (double& b : base) b = gray + 0.08 * (uni(rng) - 0.5);
  const double gx = 0.15 * (uni(rng) - 0.5);
  const double gy = 0.15 * (uni(rng) - 0.5);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        image.at(c, y, x) = base[c] + gx * (x / double(w) - 0.5) +
                            gy * (y / double(h) - 0.5);
      }
    }
  }
  // clutter: low-saturation blobs and thin lines
  const int blobs = 3 + static_cast<int>(uni(rng) * 5);
  for (int k = 0; k < blobs; ++k) {
    const double cx = uni(rng) * w;
    const double cy = uni(rng) * h;
    const double r = (0.03 + 0.10 * uni(rng)) * w;
    const double shade = 0.20 * (uni(rng) - 0.5);
    for (int y = std::max(0, int(cy - r)); y < std::min(h, int(cy + r) + 1); ++y) {
      for (int x = std::max(0, int(cx - r)); x < std::min(w, int(cx + r) + 1); ++x) {
        const double d2 = (x + 0.5 - cx) * (x + 0.5 - cx) + (y + 0.5 - cy) * (y + 0.5 - cy);
        if (d2 <= r * r) {
          for (int c = 0; c < 3; ++c) image.at(c, y, x) += shade;
        }
      }
    }
  }
  const int lines = 2 + static_cast<int>(uni(rng) * 4);
  for (int k = 0; k < lines; ++k) {
    const double x0 = uni(rng) * w, y0 = uni(rng) * h;
    const double angle = uni(rng) * M_PI;
    const double shade = 0.25 * (uni(rng) - 0.5);
    const int steps = 2 * std::max(w, h);
    for (int t = 0; t < steps; ++t) {
      const double s = t - steps / 2.0;
      const int x = static_cast<int>(x0 + s * std::cos(angle));
      const int y = static_cast<int>(y0 + s * std::sin(angle));
      if (x < 0 || y < 0 || x >= w || y >= h) continue;
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = base[c] + shade;
    }
  }
  for (double& v : image.values()) v += noise(rng);
}

void PaintObject(Tensor& image, const BBox& box, const ClassStyle& style,
                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> jitter(-0.08, 0.08);
  std::array<double, 3> color;
  for (int c = 0; c < 3; ++c) color[c] = std::clamp(style.color[c] + jitter(rng), 0.0, 1.0);
  const int x_lo = std::max(0, static_cast<int>(std::floor(box.x_min)));
  const int y_lo = std::max(0, static_cast<int>(std::floor(box.y_min)));
  const int x_hi = std::min(image.width(), static_cast<int>(std::ceil(box.x_max)));
  const int y_hi = std::min(image.height(), static_cast<int>(std::ceil(box.y_max)));
  for (int y = y_lo; y < y_hi; ++y) {
    for (int x = x_lo; x < x_hi; ++x) {
      const double u = (x + 0.5 - box.x_min) / box.width();
      const double v = (y + 0.5 - box.y_min) / box.height();
      if (u < 0 || u > 1 || v < 0 || v > 1) continue;
      if (!ShapeCovers(style.shape, u, v)) continue;
      double shade = 1.0;
      if (style.striped && (static_cast<int>(v * 4) % 2 == 1)) shade = 0.55;
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = color[c] * shade;
    }
  }
}

double IntersectionOverUnion(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
  const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
  if (iw <= 0 || ih <= 0) return 0.0;
  const double inter = iw * ih;
  return inter / (a.area() + b.area() - inter);
}

// Object area range (pixels) for a bucket at the given image size.
std::pair<double, double> AreaRange(SizeBucket bucket, int image_size) {
  const AreaBuckets b = AreaBucketsForImageSize(image_size);
  const double min_small = std::min(16.0, 0.5 * b.small_max);
  const double max_large = 0.2 * image_size * image_size;
  switch (bucket) {
    case SizeBucket::kSmall:
      return {min_small, 0.95 * b.small_max};
    case SizeBucket::kMedium:
      return {1.05 * b.small_max, 0.95 * b.medium_max};
    case SizeBucket::kLarge:
      return {1.05 * b.medium_max, std::max(1.1 * b.medium_max, max_large)};
  }
  return {min_small, b.small_max};
}

int PickClass(SizeBucket bucket, int n_classes, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  // class 0 is the small-object class
  const double p0 = bucket == SizeBucket::kSmall ? 0.5 : 0.1;
  if (uni(rng) < p0) return 0;
  std::uniform_int_distribution<int> rest(1, n_classes - 1);
  return rest(rng);
}

}  // namespace

AreaBuckets AreaBucketsForImageSize(int image_size) {
  const double scale = image_size / 640.0;
  AreaBuckets b;
  b.small_max = 32.0 * 32.0 * scale * scale;
  b.medium_max = 96.0 * 96.0 * scale * scale;
  return b;
}

SizeBucket BucketOf(double area, const AreaBuckets& buckets) {
  if (area < buckets.small_max) return SizeBucket::kSmall;
  if (area < buckets.medium_max) return SizeBucket::kMedium;
  return SizeBucket::kLarge;
}

void ValidateShapesOptions(const ShapesOptions& o) {
  if (o.n_images < 1) throw ConfigError("n_images must be >= 1");
  if (o.n_classes < 2) throw ConfigError("n_classes must be >= 2");
  if (o.image_size < 16) throw ConfigError("image_size must be >= 16");
  const SizeMix& m = o.size_mix;
  if (m.small < 0 || m.medium < 0 || m.large < 0 ||
      std::abs(m.small + m.medium + m.large - 1.0) > 1e-6) {
    throw ConfigError("size_mix fractions must be nonnegative and sum to 1");
  }
  if (o.min_objects < 0 || o.max_objects < o.min_objects) {
    throw ConfigError("invalid object count range");
  }
}

DetectionSample RenderShapesSample(const ShapesOptions& options, int index) {
  std::mt19937_64 rng = ImageRng(options.seed, index);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const int size = options.image_size;

  DetectionSample sample;
  char id[64];
  std::snprintf(id, sizeof(id), "%s_%06d", options.split.c_str(), index);
  sample.sample_id = id;
  sample.image = Tensor(3, size, size);
  PaintBackground(sample.image, rng);

  std::uniform_int_distribution<int> count_dist(options.min_objects, options.max_objects);
  const int n_objects = count_dist(rng);
  for (int k = 0; k < n_objects; ++k) {
    const double r = uni(rng);
    const SizeBucket bucket = r < options.size_mix.small ? SizeBucket::kSmall
                              : r < options.size_mix.small + options.size_mix.medium
                                  ? SizeBucket::kMedium
                                  : SizeBucket::kLarge;
    const int class_id = PickClass(bucket, options.n_classes, rng);
    const auto [lo, hi] = AreaRange(bucket, size);
    for (int attempt = 0; attempt < 20; ++attempt) {
      const double area = lo + (hi - lo) * uni(rng);
      const double aspect = std::exp(std::log(0.75) + (std::log(1.333) - std::log(0.75)) * uni(rng));
      const double w = std::min(std::sqrt(area * aspect), size - 2.0);
      const double h = std::min(area / w, size - 2.0);
      BBox box;
      box.x_min = 1.0 + uni(rng) * (size - 2.0 - w);
      box.y_min = 1.0 + uni(rng) * (size - 2.0 - h);
      box.x_max = box.x_min + w;
      box.y_max = box.y_min + h;
      box.class_id = class_id;
      if (box.area() >= hi * 1.0000001 || box.area() < lo * 0.9999999) continue;
      bool overlaps = false;
      for (const BBox& other : sample.boxes) {
        if (IntersectionOverUnion(box, other) > 0.0) overlaps = true;
      }
      if (overlaps) continue;
      PaintObject(sample.image, box, StyleFor(class_id), rng);
      sample.boxes.push_back(box);
      break;
    }
  }
  for (double& v : sample.image.values()) v = std::clamp(v, 0.0, 1.0);
  QuantizeToBytes(sample.image);
  return sample;
}

Dataset MakeShapesDataset(const ShapesOptions& options) {
  ValidateShapesOptions(options);
  Dataset dataset;
  DatasetManifest& m = dataset.manifest;
  m.split = options.split;
  m.image_count = options.n_images;
  m.image_size = options.image_size;
  m.n_classes = options.n_classes;
  m.seed = options.seed;
  m.size_mix = options.size_mix;
  m.class_counts.assign(options.n_classes, 0);
  for (int i = 0; i < options.n_images; ++i) {
    DetectionSample sample = RenderShapesSample(options, i);
    for (const BBox& b : sample.boxes) ++m.class_counts[b.class_id];
    m.total_instances += static_cast<int>(sample.boxes.size());
    m.sample_ids.push_back(sample.sample_id);
    dataset.annotations[sample.sample_id] = sample.boxes;
    dataset.samples.push_back(std::move(sample));
  }
  return dataset;
}

DatasetManifest GenerateShapesDataset(const ShapesOptions& options,
                                      const std::string& out_dir) {
  Dataset dataset = MakeShapesDataset(options);
  fs::create_directories(fs::path(out_dir) / "images");
  for (const DetectionSample& s : dataset.samples) {
    WritePng((fs::path(out_dir) / "images" / (s.sample_id + ".png")).string(),
             TensorToRaster(s.image));
  }
  std::ofstream ann(fs::path(out_dir) / "annotations.json");
  ann << AnnotationsToJson(dataset.annotations).dump(1) << "\n";
  std::ofstream man(fs::path(out_dir) / "manifest.json");
  man << ManifestToJson(dataset.manifest).dump(2) << "\n";
  if (!ann || !man) throw IoError("failed to write dataset files in " + out_dir);
  return dataset.manifest;
}

Dataset LoadDataset(const std::string& split_dir, bool load_images) {
  const fs::path dir(split_dir);
  std::ifstream man(dir / "manifest.json");
  std::ifstream ann(dir / "annotations.json");
  if (!man || !ann) throw IoError("not a dataset split directory: " + split_dir);
  Dataset dataset;
  dataset.manifest = ManifestFromJson(nlohmann::json::parse(man));
  dataset.annotations = AnnotationsFromJson(nlohmann::json::parse(ann));
  if (load_images) {
    for (const std::string& id : dataset.manifest.sample_ids) {
      DetectionSample s;
      s.sample_id = id;
      s.image = RasterToTensor(ReadPng((dir / "images" / (id + ".png")).string()));
      s.boxes = dataset.annotations.at(id);
      dataset.samples.push_back(std::move(s));
    }
  }
  return dataset;
}

std::vector<int> CountInstances(const Annotations& annotations,
                                const std::vector<std::string>& ids,
                                int n_classes) {
  std::vector<int> counts(n_classes, 0);
  for (const std::string& id : ids) {
    auto it = annotations.find(id);
    if (it == annotations.end()) continue;
    for (const BBox& b : it->second) {
      if (b.class_id >= 0 && b.class_id < n_classes) ++counts[b.class_id];
    }
  }
  return counts;
}

namespace {

std::vector<int> PresentClasses(const Dataset& dataset) {
  const std::vector<int> totals = CountInstances(
      dataset.annotations, dataset.manifest.sample_ids, dataset.manifest.n_classes);
  std::vector<int> present;
  for (int c = 0; c < static_cast<int>(totals.size()); ++c) {
    if (totals[c] > 0) present.push_back(c);
  }
  return present;
}

}  // namespace

double ImbalanceRatio(const Dataset& dataset, const std::vector<std::string>& ids) {
  const std::vector<int> counts =
      CountInstances(dataset.annotations, ids, dataset.manifest.n_classes);
  int lo = std::numeric_limits<int>::max();
  int hi = 0;
  for (int c : PresentClasses(dataset)) {
    lo = std::min(lo, counts[c]);
    hi = std::max(hi, counts[c]);
  }
  if (hi == 0) return 1.0;
  if (lo == 0) return std::numeric_limits<double>::infinity();
  return static_cast<double>(hi) / lo;
}

std::vector<std::string> SelectClassBalanced(const Dataset& dataset,
                                             int n_samples, uint64_t seed) {
  const auto& ids = dataset.manifest.sample_ids;
  const int n = static_cast<int>(ids.size());
  if (n_samples < 0 || n_samples > n) {
    throw ConfigError("n_samples must be within [0, dataset size]");
  }
  const int n_classes = dataset.manifest.n_classes;
  const std::vector<int> present = PresentClasses(dataset);
  if (static_cast<int>(present.size()) < n_classes) {
    for (int c = 0; c < n_classes; ++c) {
      if (std::find(present.begin(), present.end(), c) == present.end()) {
        spdlog::warn("class {} has no instances; excluded from balancing", c);
      }
    }
  }

  // per-image class histograms
  std::vector<std::vector<int>> hist(n, std::vector<int>(n_classes, 0));
  for (int i = 0; i < n; ++i) {
    auto it = dataset.annotations.find(ids[i]);
    if (it == dataset.annotations.end()) continue;
    for (const BBox& b : it->second) {
      if (b.class_id >= 0 && b.class_id < n_classes) ++hist[i][b.class_id];
    }
  }

  // candidate scan order; ties go to the earliest candidate in this order
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<int> counts(n_classes, 0);
  std::vector<bool> taken(n, false);
  std::vector<int> chosen;
  chosen.reserve(n_samples);
  for (int step = 0; step < n_samples; ++step) {
    int best = -1;
    double best_ratio = 0, best_min = 0, best_total = 0;
    for (int i : order) {
      if (taken[i]) continue;
      int lo = std::numeric_limits<int>::max(), hi = 0, total = 0;
      for (int c : present) {
        const int v = counts[c] + hist[i][c];
        lo = std::min(lo, v);
        hi = std::max(hi, v);
        total += hist[i][c];
      }
      if (present.empty()) lo = hi = 0;
      // smoothed max/min, then larger minimum, then more instances
      const double ratio = (hi + 1.0) / (lo + 1.0);
      const bool better =
          best < 0 || ratio < best_ratio ||
          (ratio == best_ratio &&
           (lo > best_min || (lo == best_min && total > best_total)));
      if (better) {
        best = i;
        best_ratio = ratio;
        best_min = lo;
        best_total = total;
      }
    }
    taken[best] = true;
    chosen.push_back(best);
    for (int c = 0; c < n_classes; ++c) counts[c] += hist[best][c];
  }
  std::sort(chosen.begin(), chosen.end());
  std::vector<std::string> out;
  out.reserve(chosen.size());
  for (int i : chosen) out.push_back(ids[i]);
  return out;
}

nlohmann::json AnnotationsToJson(const Annotations& annotations) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [id, boxes] : annotations) {
    nlohmann::json list = nlohmann::json::array();
    for (const BBox& b : boxes) {
      list.push_back({b.x_min, b.y_min, b.x_max, b.y_max, b.class_id});
    }
    j[id] = std::move(list);
  }
  return j;
}

Annotations AnnotationsFromJson(const nlohmann::json& j) {
  Annotations annotations;
  for (const auto& [id, list] : j.items()) {
    std::vector<BBox>& boxes = annotations[id];
    for (const auto& e : list) {
      if (!e.is_array() || e.size() != 5) {
        throw IoError("annotation entries must be [x_min,y_min,x_max,y_max,class_id]");
      }
      BBox b{e[0].get<double>(), e[1].get<double>(), e[2].get<double>(),
             e[3].get<double>(), e[4].get<int>()};
      if (!b.valid()) throw IoError("degenerate box in annotations for " + id);
      boxes.push_back(b);
    }
  }
  return annotations;
}

nlohmann::json ManifestToJson(const DatasetManifest& m) {
  return {
      {"split", m.split},
      {"image_count", m.image_count},
      {"image_size", m.image_size},
      {"n_classes", m.n_classes},
      {"seed", m.seed},
      {"size_mix",
       {{"small", m.size_mix.small}, {"medium", m.size_mix.medium}, {"large", m.size_mix.large}}},
      {"class_counts", m.class_counts},
      {"total_instances", m.total_instances},
      {"sample_ids", m.sample_ids},
  };
}

DatasetManifest ManifestFromJson(const nlohmann::json& j) {
  DatasetManifest m;
  m.split = j.at("split").get<std::string>();
  m.image_count = j.at("image_count").get<int>();
  m.image_size = j.at("image_size").get<int>();
  m.n_classes = j.at("n_classes").get<int>();
  m.seed = j.at("seed").get<uint64_t>();
  m.size_mix.small = j.at("size_mix").at("small").get<double>();
  m.size_mix.medium = j.at("size_mix").at("medium").get<double>();
  m.size_mix.large = j.at("size_mix").at("large").get<double>();
  m.class_counts = j.at("class_counts").get<std::vector<int>>();
  m.total_instances = j.at("total_instances").get<int>();
  m.sample_ids = j.at("sample_ids").get<std::vector<std::string>>();
  int sum = 0;
  for (int c : m.class_counts) sum += c;
  if (sum != m.total_instances) {
    throw IoError("manifest class counts do not sum to total_instances");
  }
  return m;
}

}  // namespace salprune
