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


// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any fails. `salprune_acceptance 3 7` runs a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "oracles.h"
#include "salprune/baselines.h"
#include "salprune/data.h"
#include "salprune/detector.h"
#include "salprune/metrics.h"
#include "salprune/pipeline.h"
#include "salprune/pruner.h"
#include "salprune/reweight.h"
#include "salprune/saliency.h"

namespace salprune {
namespace {

namespace fs = std::filesystem;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double Seconds(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Dataset Shapes(int n, int size, uint64_t seed, int classes, const std::string& split,
               int max_objects = 3) {
  ShapesOptions o;
  o.split = split;
  o.n_images = n;
  o.image_size = size;
  o.n_classes = classes;
  o.seed = seed;
  o.max_objects = max_objects;
  return MakeShapesDataset(o);
}

std::vector<BBox> RandomBoxes(std::mt19937_64& rng, int fh, int fw, int stride) {
  std::vector<BBox> boxes(std::uniform_int_distribution<int>(1, 3)(rng));
  const double img_w = fw * stride, img_h = fh * stride;
  for (BBox& b : boxes) {
    const double w = std::uniform_real_distribution<double>(
        stride, std::max<double>(stride, 0.6 * img_w))(rng);
    const double h = std::uniform_real_distribution<double>(
        stride, std::max<double>(stride, 0.6 * img_h))(rng);
    b.x_min = std::uniform_real_distribution<double>(0, img_w - w)(rng);
    b.y_min = std::uniform_real_distribution<double>(0, img_h - h)(rng);
    b.x_max = b.x_min + w;
    b.y_max = b.y_min + h;
  }
  return boxes;
}

DecaySpec RandomDecay(std::mt19937_64& rng) {
  DecaySpec d;
  d.kind = static_cast<DecayKind>(std::uniform_int_distribution<int>(0, 3)(rng));
  d.s = std::uniform_real_distribution<double>(0.25, 3.0)(rng);
  d.tau_ratio = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
  d.sigma_ratio = std::uniform_real_distribution<double>(0.2, 2.0)(rng);
  return d;
}

std::vector<double> Uniform(std::mt19937_64& rng, size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

Verdict GradientOracle() {
  const auto t0 = std::chrono::steady_clock::now();
  const Detector d = BuildToyDetector(2, 0.125, 11);
  const Dataset data = Shapes(1, 32, 3, 2, "train");
  const DetectionSample& s = data.samples[0];
  const TapResult tr = ForwardWithTaps(d, s, DefaultTapLayers(d.graph()));
  std::mt19937_64 rng(5);
  int checked = 0, bad = 0;
  double worst = 0.0;
  while (checked < 40) {
    const FeatureTap& tap = tr.taps[rng() % tr.taps.size()];
    const int c = rng() % tap.activation.channels();
    const int y = rng() % tap.activation.height();
    const int x = rng() % tap.activation.width();
    const double g = tap.gradient.at(c, y, x);
    // Relative error is meaningless at exact zeros (dead SiLU regions are
    // not exact zeros, so this is rare); sample another coordinate.
    if (std::abs(g) < 1e-8) continue;
    const std::string node = d.graph().TapNodeFor(tap.node_id);
    auto loss = [&](double delta) {
      ActivationHook hook = [&](const std::string& id, int, Tensor& out) {
        if (id == node) out.at(c, y, x) += delta;
      };
      return SampleLoss(d, s, {}, &hook).total;
    };
    const double eps = 1e-5;
    const double fd = (loss(eps) - loss(-eps)) / (2 * eps);
    const double rel = std::abs(fd - g) / std::abs(g);
    worst = std::max(worst, rel);
    bad += rel >= 1e-3;
    ++checked;
  }
  const double secs = Seconds(t0);
  return {d.ParamCount() <= 10000 && bad == 0 && secs < 60,
          fmt::format("{} params, {} coordinates, max rel err {:.2e}, {:.1f}s", d.ParamCount(),
                      checked, worst, secs)};
}

Verdict FormulaEquivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int fh = std::uniform_int_distribution<int>(2, 32)(rng);
    const int fw = std::uniform_int_distribution<int>(2, 32)(rng);
    const int stride = 1 << std::uniform_int_distribution<int>(0, 4)(rng);
    const double margin = std::uniform_real_distribution<double>(0.0, 0.6)(rng);
    const auto boxes = RandomBoxes(rng, fh, fw, stride);
    const DecaySpec decay = RandomDecay(rng);
    std::vector<int> region;
    const auto beta = oracle::Beta(boxes, fh, fw, stride, margin, decay, &region);
    const ReweightMask m = BuildReweightMask(boxes, fh, fw, stride, margin, decay);
    for (size_t i = 0; i < beta.size(); ++i) {
      worst = std::max(worst, std::abs(m.beta[i] - beta[i]));
      if ((m.region[i] != 0) != (region[i] != 0)) worst = 1.0;
    }
    const auto grad = Uniform(rng, beta.size());
    const auto act = Uniform(rng, beta.size());
    const double w = ChannelSaliency(grad, m);
    worst = std::max(worst, std::abs(w - oracle::W(grad, beta)));
    const double s = ChannelImportance(w, act, m.region).value;
    worst = std::max(worst, std::abs(s - oracle::S(w, act, region)));
  }
  const double secs = Seconds(t0);
  return {worst < 1e-9 && secs < 60,
          fmt::format("100 configurations, max abs diff {:.2e}, {:.1f}s", worst, secs)};
}

Verdict MaskPartition() {
  std::mt19937_64 rng(11);
  int violations = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int fh = std::uniform_int_distribution<int>(4, 32)(rng);
    const int fw = std::uniform_int_distribution<int>(4, 32)(rng);
    const int stride = 8;
    const double margin = std::uniform_real_distribution<double>(0.05, 0.6)(rng);
    std::vector<BBox> boxes = RandomBoxes(rng, fh, fw, stride);
    boxes.resize(1);
    const DecaySpec decay = RandomDecay(rng);
    const ReweightMask m = BuildReweightMask(boxes, fh, fw, stride, margin, decay);
    const FeatureFootprint f = MapBoxToFeatures(boxes[0], fh, fw, stride, margin);
    for (int y = 0; y < fh; ++y) {
      for (int x = 0; x < fw; ++x) {
        const double b = m.at(y, x);
        if (m.in_box[y * fw + x]) {
          violations += b != 1.0;
        } else if (m.in_region(y, x)) {
          violations += !(b > 0.0 && b <= 1.0);
        } else {
          violations += b != 0.0;
        }
      }
    }
    // Every ray from the center outward, along rows and columns through it.
    const int cy = std::clamp(static_cast<int>(f.center_y), 0, fh - 1);
    const int cx = std::clamp(static_cast<int>(f.center_x), 0, fw - 1);
    for (int x = cx; x + 1 < fw; ++x) violations += m.at(cy, x) < m.at(cy, x + 1);
    for (int x = cx; x - 1 >= 0; --x) violations += m.at(cy, x) < m.at(cy, x - 1);
    for (int y = cy; y + 1 < fh; ++y) violations += m.at(y, cx) < m.at(y + 1, cx);
    for (int y = cy; y - 1 >= 0; --y) violations += m.at(y, cx) < m.at(y - 1, cx);
  }
  return {violations == 0, fmt::format("200 masks, {} violations", violations)};
}

std::set<std::pair<int, int>> RemovedSet(const PruningPlan& plan) {
  std::set<std::pair<int, int>> out;
  for (const auto& g : plan.groups) {
    for (int c : g.removed) out.insert({g.group, c});
  }
  return out;
}

Verdict RankingInvariance() {
  int mismatches = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const Detector d = BuildToyDetector(2, 0.25, 100 + trial);
    const Dataset data = Shapes(3, 64, 200 + trial, 2, "train");
    const double rate = 0.1 + 0.05 * (trial % 10);
    SaliencyConfig config;
    config.loss_scale = 1.0;
    const auto base = MakePlan(ComputeImportance(d, data.samples, config).tables, d.graph(),
                               rate, 64, 64);
    for (double c : {0.1, 10.0}) {
      config.loss_scale = c;
      const auto scaled = MakePlan(ComputeImportance(d, data.samples, config).tables, d.graph(),
                                   rate, 64, 64);
      mismatches += RemovedSet(scaled) != RemovedSet(base);
    }
  }
  return {mismatches == 0, fmt::format("20 trials x 2 scales, {} mismatched plans", mismatches)};
}

Verdict ZeroChannelExactness() {
  double worst = 0.0;
  int trials = 0;
  for (double frac : {0.1, 0.2, 0.3}) {
    Detector d = BuildToyDetector(3, 0.5, 40 + trials);
    const Dataset data = Shapes(4, 64, 2, 3, "train");
    std::vector<Tensor> images;
    for (const auto& s : data.samples) images.push_back(s.image);
    d.UpdateRunningStats(d.Forward(images, Mode::kTrain));
    std::mt19937_64 rng(8 + trials);
    PruningPlan plan;
    plan.rate = frac;
    plan.input_h = plan.input_w = 64;
    for (const auto& g : BuildGroups(d.graph())) {
      if (!g.prunable) continue;
      std::vector<int> idx(g.width);
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), rng);
      const int k = static_cast<int>(frac * g.width);
      idx.resize(k);
      ZeroGroupChannels(d, g, idx);
      plan.groups.push_back({g.id, g.members, g.width, idx, g.width - k});
    }
    plan.params_before = CountParams(d.graph());
    plan.flops_before = CountFlops(d.graph(), 64, 64);
    const ModelGraph pg = PrunedGraph(d.graph(), plan);
    plan.params_after = CountParams(pg);
    plan.flops_after = CountFlops(pg, 64, 64);
    const Detector p = ApplyPlan(d, plan);
    std::mt19937_64 img_rng(1);
    for (int t = 0; t < 10; ++t) {
      Tensor image(3, 64, 64);
      for (double& v : image.values()) v = std::uniform_real_distribution<double>(0, 1)(img_rng);
      const auto a = d.PredictionFor(d.Forward(std::span<const Tensor>(&image, 1), Mode::kEval), 0);
      const auto b = p.PredictionFor(p.Forward(std::span<const Tensor>(&image, 1), Mode::kEval), 0);
      for (size_t h = 0; h < a.heads().size(); ++h) {
        const auto& va = a.heads()[h].raw.values();
        const auto& vb = b.heads()[h].raw.values();
        if (va.size() != vb.size()) return {false, "head shape changed"};
        for (size_t i = 0; i < va.size(); ++i) worst = std::max(worst, std::abs(va[i] - vb[i]));
      }
    }
    ++trials;
  }
  return {worst < 1e-5,
          fmt::format("k in {{10,20,30}}% of each group, 10 inputs each, max abs diff {:.2e}",
                      worst)};
}

Verdict CostAccounting() {
  const Detector d = BuildToyDetector(3, 1.0, 2);
  const Dataset data = Shapes(4, 128, 9, 3, "train");
  const auto tables = ComputeImportance(d, data.samples, {}).tables;
  int64_t last_p = CountParams(d.graph()) + 1, last_f = CountFlops(d.graph(), 128, 128) + 1;
  bool ok = true;
  std::string detail;
  for (double r : {0.1, 0.3, 0.5, 0.7}) {
    const auto plan = MakePlan(tables, d.graph(), r, 128, 128);
    const Detector p = ApplyPlan(d, plan);
    const int64_t params = p.ParamCount(), flops = CountFlops(p.graph(), 128, 128);
    ok = ok && params == plan.params_after && CountParams(p.graph()) == plan.params_after &&
         flops == plan.flops_after && params < last_p && flops < last_f;
    last_p = params;
    last_f = flops;
    detail += fmt::format("r={} {}p/{}f; ", r, params, flops);
  }
  return {ok, detail};
}

Detection Det(const std::string& id, BBox b, int cls, double conf) {
  Detection d;
  d.sample_id = id;
  d.box = b;
  d.class_id = cls;
  d.confidence = conf;
  return d;
}

Verdict ApOracle() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> pos(0, 80), side(4, 30), jitter(-6, 6), conf(0, 1);
  double worst = 0.0;
  for (int scene = 0; scene < 50; ++scene) {
    Annotations gt;
    std::vector<Detection> dets;
    const int images = 1 + rng() % 3;
    for (int im = 0; im < images; ++im) {
      const std::string id = "im" + std::to_string(im);
      auto& boxes = gt[id];
      const int n = 1 + rng() % 4;
      for (int k = 0; k < n; ++k) {
        const double x = pos(rng), y = pos(rng);
        const BBox b{x, y, x + side(rng), y + side(rng), static_cast<int>(rng() % 2)};
        boxes.push_back(b);
        if (rng() % 4 != 0) {
          BBox d{b.x_min + jitter(rng), b.y_min + jitter(rng), 0, 0, b.class_id};
          d.x_max = d.x_min + b.width() + jitter(rng);
          d.y_max = d.y_min + b.height() + jitter(rng);
          if (d.valid()) dets.push_back(Det(id, d, b.class_id, conf(rng)));
        }
      }
      for (int k = 0, fps = rng() % 3; k < fps; ++k) {
        const double x = pos(rng), y = pos(rng);
        const int cls = rng() % 2;
        dets.push_back(Det(id, {x, y, x + side(rng), y + side(rng), cls}, cls, conf(rng)));
      }
    }
    for (int cls = 0; cls < 2; ++cls) {
      const auto ap = AveragePrecision(dets, gt, cls);
      if (!ap) continue;
      worst = std::max(worst, std::abs(*ap - oracle::Ap(dets, gt, cls, 0.5, 101)));
    }
  }
  // TP 0.9, FP 0.8, TP 0.7 over two ground truths.
  Annotations gt = {{"a", {{0, 0, 10, 10, 0}, {20, 20, 30, 30, 0}}}};
  const std::vector<Detection> dets = {Det("a", {0, 0, 10, 10, 0}, 0, 0.9),
                                       Det("a", {50, 50, 60, 60, 0}, 0, 0.8),
                                       Det("a", {20, 20, 30, 30, 0}, 0, 0.7)};
  const double hand = (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
  const double got = *AveragePrecision(dets, gt, 0);
  return {worst < 1e-6 && std::abs(got - hand) < 1e-12,
          fmt::format("50 scenes max diff {:.2e}; hand example {:.10f} vs {:.10f}", worst, got,
                      hand)};
}

// Comparative experiment. Every arm prunes the same baseline at r = 0.5
// and fine-tunes with the same budget; seeds vary the random scores and
// the fine-tuning shuffle.
Verdict ComparativeExperiment() {
  const auto t0 = std::chrono::steady_clock::now();
  ShapesOptions to;
  to.n_images = 400;
  to.seed = 1;
  to.split = "train";
  ShapesOptions vo = to;
  vo.n_images = 150;
  vo.seed = 2;
  vo.split = "val";
  const Dataset train = MakeShapesDataset(to), val = MakeShapesDataset(vo);
  RunConfig rc;
  rc.rate = 0.5;
  rc.finetune.epochs = 20;
  const Detector base = TrainBaseline(rc, train, val, "").model;
  const ResultRow b = EvaluateRow(base, val, rc.eval, 0.0, "baseline");
  std::printf("  baseline: mAP %.4f AP-s %.4f (%.0fs)\n", *b.eval.map, *b.eval.ap_small,
              Seconds(t0));
  const std::vector<CriterionKind> kinds = {CriterionKind::kSaliency, CriterionKind::kL1,
                                            CriterionKind::kRandom};
  std::map<CriterionKind, std::vector<double>> map, aps;
  for (int seed = 0; seed < 3; ++seed) {
    for (CriterionKind k : kinds) {
      RunConfig c = rc;
      c.seed = seed;
      c.criterion.kind = k;
      c.criterion.seed = seed;
      c.finetune.seed = seed;
      const auto o = RunPipeline(c, base, train, val, "");
      map[k].push_back(*o.row.eval.map);
      aps[k].push_back(o.row.eval.ap_small.value_or(0.0));
      std::printf("  seed %d %-8s mAP %.4f AP-s %.4f\n", seed, CriterionName(k), map[k].back(),
                  aps[k].back());
      std::fflush(stdout);
    }
  }
  auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  };
  const double sal = mean(map[CriterionKind::kSaliency]);
  const double l1 = mean(map[CriterionKind::kL1]);
  const double rnd = mean(map[CriterionKind::kRandom]);
  int aps_ok = 0;
  for (int seed = 0; seed < 3; ++seed) {
    aps_ok += (*b.eval.ap_small - aps[CriterionKind::kSaliency][seed]) <=
              (*b.eval.ap_small - aps[CriterionKind::kRandom][seed]);
  }
  const bool pass = sal >= l1 && (sal - rnd) * 100.0 >= 2.0 && aps_ok == 3;
  return {pass, fmt::format("mean mAP saliency {:.4f}, l1 {:.4f}, random {:.4f} (margin {:.2f} "
                            "pts); AP-s deficit <= random in {}/3 seeds; {:.0f}s",
                            sal, l1, rnd, (sal - rnd) * 100.0, aps_ok, Seconds(t0))};
}

Verdict AblationHarness() {
  const fs::path dir = fs::temp_directory_path() / "salprune_acceptance_ablation";
  fs::remove_all(dir);
  const Detector d = BuildToyDetector(2, 0.125, 3);
  const Dataset train = Shapes(140, 32, 5, 2, "train"), val = Shapes(8, 32, 6, 2, "val");
  RunConfig c;
  c.n_classes = 2;
  c.width = 0.125;
  c.n_samples = 8;
  c.finetune.epochs = 0;
  std::string detail;
  bool ok = true;
  const std::vector<std::pair<AblationStudy, size_t>> studies = {
      {AblationStudy::kComponents, 4}, {AblationStudy::kDecay, 4}, {AblationStudy::kSampleSize, 5}};
  for (const auto& [study, want] : studies) {
    const fs::path out = dir / AblationStudyName(study);
    const auto arms = RunAblation(study, c, d, train, val, out.string());
    bool mapped = arms.size() == want && fs::exists(out / "ablation.csv") &&
                  fs::exists(out / "ablation.svg");
    for (const auto& a : arms) mapped = mapped && a.row.eval.map.has_value();
    if (study == AblationStudy::kComponents && arms.size() == 4) {
      // Component grid: nothing, gradients, +box, +context.
      const bool grid[4][3] = {{false, false, false}, {true, false, false}, {true, true, false},
                               {true, true, true}};
      for (int i = 0; i < 4; ++i) {
        mapped = mapped && arms[i].gradients == grid[i][0] && arms[i].gt_box == grid[i][1] &&
                 arms[i].context == grid[i][2];
      }
    }
    if (study == AblationStudy::kDecay && arms.size() == 4) {
      std::set<DecayKind> kinds;
      for (const auto& a : arms) kinds.insert(a.decay);
      mapped = mapped && kinds.size() == 4;
    }
    if (study == AblationStudy::kSampleSize && arms.size() == 5) {
      for (size_t i = 1; i < arms.size(); ++i) mapped = mapped && arms[i].n_samples > arms[i - 1].n_samples;
    }
    ok = ok && mapped;
    detail += fmt::format("{}: {} arms{}; ", AblationStudyName(study), arms.size(),
                          mapped ? "" : " (bad)");
  }
  fs::remove_all(dir);
  return {ok, detail};
}

Verdict VizLocality() {
  const fs::path dir = fs::temp_directory_path() / "salprune_acceptance_viz";
  fs::remove_all(dir);
  const Detector d = BuildToyDetector(3, 0.5, 7);
  const Dataset data = Shapes(3, 128, 13, 3, "val");
  VizOptions o;
  o.layer = "n8";
  o.channels = {0, 5, 9};
  int files = 0, diffs = 0, off = 0;
  for (const auto& s : data.samples) {
    const auto images = RenderSaliencyOverlays(d, s, o, (dir / s.sample_id).string());
    if (images.size() != 2 * o.channels.size()) return {false, "wrong number of overlays"};
    for (const auto& img : images) files += fs::exists(img.path);
    for (size_t i = 0; i + 1 < images.size(); i += 2) {
      const auto& plain = images[i];
      const auto& rew = images[i + 1];
      if (plain.reweighted || !rew.reweighted) return {false, "pair order"};
      for (size_t p = 0; p < plain.region.size(); ++p) {
        if (plain.region[p]) continue;
        ++off;
        for (int k = 0; k < 3; ++k) {
          diffs += plain.overlay.pixels[p * 3 + k] != rew.overlay.pixels[p * 3 + k];
        }
      }
    }
  }
  fs::remove_all(dir);
  const int want = 3 * 2 * static_cast<int>(o.channels.size());
  return {files == want && diffs == 0 && off > 0,
          fmt::format("{} overlays written, {} off-region pixels compared, {} differ", files, off,
                      diffs)};
}

}  // namespace
}  // namespace salprune

int main(int argc, char** argv) {
  using salprune::Verdict;
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"gradient oracle", salprune::GradientOracle},
      {"formula brute-force equivalence", salprune::FormulaEquivalence},
      {"mask partition", salprune::MaskPartition},
      {"ranking invariance", salprune::RankingInvariance},
      {"zero-channel pruning exactness", salprune::ZeroChannelExactness},
      {"cost accounting", salprune::CostAccounting},
      {"AP oracle", salprune::ApOracle},
      {"comparative pruning experiment", salprune::ComparativeExperiment},
      {"ablation harness", salprune::AblationHarness},
      {"viz locality", salprune::VizLocality},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(n)) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("criterion %2d %s: %s (%s)\n", n, v.pass ? "PASS" : "FAIL",
                criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
