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

#ifndef SALPRUNE_DATA_H_
#define SALPRUNE_DATA_H_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "salprune/bbox.h"
#include "salprune/tensor.h"

namespace salprune {

// Fractions of generated objects per area bucket. Must sum to 1.
struct SizeMix {
  double small = 0.35;
  double medium = 0.45;
  double large = 0.20;
};

// Object area thresholds in pixels. The reference thresholds (32^2 and 96^2)
// are defined for 640-pixel images and scale with the square of the image
// side for other resolutions.
struct AreaBuckets {
  double small_max = 32.0 * 32.0;
  double medium_max = 96.0 * 96.0;
};
AreaBuckets AreaBucketsForImageSize(int image_size);

enum class SizeBucket { kSmall, kMedium, kLarge };
SizeBucket BucketOf(double area, const AreaBuckets& buckets);

struct DetectionSample {
  std::string sample_id;
  Tensor image;  // 3 x H x W, values in [0,1]
  std::vector<BBox> boxes;
};

struct DatasetManifest {
  std::string split;
  int image_count = 0;
  int image_size = 0;
  int n_classes = 0;
  uint64_t seed = 0;
  SizeMix size_mix;
  std::vector<int> class_counts;
  int total_instances = 0;
  std::vector<std::string> sample_ids;
};

// sample_id -> boxes. Ordered so that serialization is deterministic.
using Annotations = std::map<std::string, std::vector<BBox>>;

struct Dataset {
  DatasetManifest manifest;
  Annotations annotations;
  std::vector<DetectionSample> samples;  // manifest order; may be empty
};

struct ShapesOptions {
  std::string split = "train";
  int n_images = 100;
  int image_size = 128;
  int n_classes = 3;
  uint64_t seed = 0;
  SizeMix size_mix;
  int min_objects = 1;
  int max_objects = 4;
};

// Throws ConfigError on invalid options.
void ValidateShapesOptions(const ShapesOptions& options);

// Renders image `index` of the dataset described by `options`. Each image
// draws from its own generator seeded by (seed, index).
DetectionSample RenderShapesSample(const ShapesOptions& options, int index);

// Renders the whole split in memory.
Dataset MakeShapesDataset(const ShapesOptions& options);

// Renders the split and writes <out_dir>/images/*.png, annotations.json and
// manifest.json. Returns the manifest.
DatasetManifest GenerateShapesDataset(const ShapesOptions& options,
                                      const std::string& out_dir);

// Loads a split directory written by GenerateShapesDataset. Images are read
// only when `load_images` is set.
Dataset LoadDataset(const std::string& split_dir, bool load_images = true);

// Greedy instance-count balancing. Returns exactly n_samples distinct ids in
// manifest order.
std::vector<std::string> SelectClassBalanced(const Dataset& dataset,
                                             int n_samples, uint64_t seed);

// max/min of per-class instance counts over the given ids, ignoring classes
// absent from the whole dataset. Infinity when a present class is missing.
double ImbalanceRatio(const Dataset& dataset,
                      const std::vector<std::string>& ids);

std::vector<int> CountInstances(const Annotations& annotations,
                                const std::vector<std::string>& ids,
                                int n_classes);

nlohmann::json AnnotationsToJson(const Annotations& annotations);
Annotations AnnotationsFromJson(const nlohmann::json& j);
nlohmann::json ManifestToJson(const DatasetManifest& manifest);
DatasetManifest ManifestFromJson(const nlohmann::json& j);

}  // namespace salprune

#endif  // SALPRUNE_DATA_H_
