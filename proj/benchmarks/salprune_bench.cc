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


#include <benchmark/benchmark.h>

#include <random>
#include <string>
#include <vector>

#include "salprune/baselines.h"
#include "salprune/data.h"
#include "salprune/detector.h"
#include "salprune/metrics.h"
#include "salprune/pruner.h"
#include "salprune/reweight.h"
#include "salprune/saliency.h"

namespace salprune {
namespace {

DetectionSample Sample(int size) {
  ShapesOptions o;
  o.n_images = 1;
  o.image_size = size;
  return RenderShapesSample(o, 0);
}

void BM_ForwardEval(benchmark::State& state) {
  const Detector d = BuildToyDetector(3, 1.0, 0);
  const DetectionSample s = Sample(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(d.Forward(std::span<const Tensor>(&s.image, 1), Mode::kEval));
  }
}
BENCHMARK(BM_ForwardEval)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

// Forward plus backward to every default tap, as used per saliency sample.
void BM_ForwardWithTaps(benchmark::State& state) {
  const Detector d = BuildToyDetector(3, 1.0, 0);
  const DetectionSample s = Sample(128);
  const auto taps = DefaultTapLayers(d.graph());
  for (auto _ : state) benchmark::DoNotOptimize(ForwardWithTaps(d, s, taps));
}
BENCHMARK(BM_ForwardWithTaps)->Unit(benchmark::kMillisecond);

void BM_ReweightMask(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const std::vector<BBox> boxes = {{10, 12, 40, 30, 0}, {60, 60, 110, 120, 1}, {0, 90, 20, 110, 2}};
  for (auto _ : state) {
    benchmark::DoNotOptimize(BuildReweightMask(boxes, n, n, 128 / n, 0.25, DecaySpec{}));
  }
}
BENCHMARK(BM_ReweightMask)->Arg(8)->Arg(16)->Arg(32);

void BM_AveragePrecision(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> pos(0, 100), conf(0, 1);
  Annotations gt;
  std::vector<Detection> dets;
  for (int im = 0; im < 100; ++im) {
    const std::string id = std::to_string(im);
    for (int k = 0; k < 4; ++k) {
      const double x = pos(rng), y = pos(rng);
      gt[id].push_back({x, y, x + 20, y + 20, 0});
    }
    for (int k = 0; k < state.range(0) / 100; ++k) {
      const double x = pos(rng), y = pos(rng);
      dets.push_back({id, {x, y, x + 20, y + 20, 0}, 0, conf(rng)});
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(AveragePrecision(dets, gt, 0));
}
BENCHMARK(BM_AveragePrecision)->Arg(1000)->Arg(10000)->Unit(benchmark::kMicrosecond);

void BM_MakeAndApplyPlan(benchmark::State& state) {
  const Detector d = BuildToyDetector(3, 1.0, 0);
  ImportanceTables tables;
  for (const auto& id : DefaultTapLayers(d.graph())) {
    tables[id] = RandomImportance(d.graph().node(id).out_channels, 7);
    tables[id].node_id = id;
  }
  for (auto _ : state) {
    const PruningPlan plan = MakePlan(tables, d.graph(), 0.5, 128, 128);
    benchmark::DoNotOptimize(ApplyPlan(d, plan));
  }
}
BENCHMARK(BM_MakeAndApplyPlan)->Unit(benchmark::kMicrosecond);

}  // namespace
}  // namespace salprune

BENCHMARK_MAIN();
