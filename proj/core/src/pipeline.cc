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

#include "salprune/pipeline.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "salprune/errors.h"
#include "salprune/png_io.h"

namespace salprune {
namespace {

namespace fs = std::filesystem;

ReweightMode ReweightModeFromName(const std::string& name) {
  if (name == "box_context") return ReweightMode::kBoxWithContext;
  if (name == "box_only") return ReweightMode::kBoxOnly;
  if (name == "uniform") return ReweightMode::kUniform;
  throw ConfigError("unknown reweight mode: " + name);
}

SaliencyConfig SaliencyConfigFromJson(const nlohmann::json& j, SaliencyConfig c) {
  if (j.contains("decay")) {
    const auto& d = j.at("decay");
    if (d.contains("kind")) c.reweight.decay.kind = DecayKindFromName(d.at("kind"));
    c.reweight.decay.s = d.value("s", c.reweight.decay.s);
    c.reweight.decay.tau_ratio = d.value("tau_ratio", c.reweight.decay.tau_ratio);
    c.reweight.decay.sigma_ratio = d.value("sigma_ratio", c.reweight.decay.sigma_ratio);
  }
  c.reweight.margin_ratio = j.value("margin", c.reweight.margin_ratio);
  if (j.contains("reweight_mode")) c.reweight.mode = ReweightModeFromName(j.at("reweight_mode"));
  if (j.contains("importance_extent")) {
    const std::string e = j.at("importance_extent");
    if (e != "region" && e != "full") throw ConfigError("unknown importance extent: " + e);
    c.extent = e == "region" ? ImportanceExtent::kRegion : ImportanceExtent::kFull;
  }
  c.loss.cls = j.value("lambda_cls", c.loss.cls);
  c.loss.box = j.value("lambda_box", c.loss.box);
  c.taps = j.value("taps", c.taps);
  return c;
}

std::string Percent(const std::optional<double>& v) {
  if (!v) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", 100.0 * *v);
  return buf;
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

std::vector<DetectionSample> SamplesById(const Dataset& dataset,
                                         const std::vector<std::string>& ids) {
  std::map<std::string, const DetectionSample*> by_id;
  for (const auto& s : dataset.samples) by_id[s.sample_id] = &s;
  std::vector<DetectionSample> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw ConfigError("sample " + id + " has no loaded image");
    out.push_back(*it->second);
  }
  return out;
}

void RequireImages(const Dataset& dataset, const char* what) {
  if (dataset.samples.empty()) throw ConfigError(std::string(what) + " dataset has no images");
}

// Blue -> cyan -> yellow -> red.
std::array<double, 3> HeatColor(double t) {
  t = std::clamp(t, 0.0, 1.0);
  if (t < 1.0 / 3.0) return {0.0, 3.0 * t, 1.0};
  if (t < 2.0 / 3.0) return {3.0 * (t - 1.0 / 3.0), 1.0, 1.0 - 3.0 * (t - 1.0 / 3.0)};
  return {1.0, 1.0 - 3.0 * (t - 2.0 / 3.0), 0.0};
}

void MinMaxNormalize(std::vector<double>& v, const std::vector<uint8_t>* cells) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (size_t i = 0; i < v.size(); ++i) {
    if (cells != nullptr && !(*cells)[i]) continue;
    lo = std::min(lo, v[i]);
    hi = std::max(hi, v[i]);
  }
  for (size_t i = 0; i < v.size(); ++i) {
    const bool used = cells == nullptr || (*cells)[i];
    v[i] = used && hi > lo ? (v[i] - lo) / (hi - lo) : 0.0;
  }
}

void DrawBoxOutline(Raster& r, const BBox& box) {
  const int x0 = std::clamp(static_cast<int>(std::floor(box.x_min)), 0, r.width - 1);
  const int x1 = std::clamp(static_cast<int>(std::ceil(box.x_max)) - 1, 0, r.width - 1);
  const int y0 = std::clamp(static_cast<int>(std::floor(box.y_min)), 0, r.height - 1);
  const int y1 = std::clamp(static_cast<int>(std::ceil(box.y_max)) - 1, 0, r.height - 1);
  auto put = [&](int x, int y) {
    uint8_t* p = &r.pixels[(static_cast<size_t>(y) * r.width + x) * 3];
    p[0] = 0;
    p[1] = 255;
    p[2] = 0;
  };
  for (int x = x0; x <= x1; ++x) {
    put(x, y0);
    put(x, y1);
  }
  for (int y = y0; y <= y1; ++y) {
    put(x0, y);
    put(x1, y);
  }
}

std::string Fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

}  // namespace

TrainConfig RunConfig::DefaultBaselineTraining() {
  TrainConfig c;
  c.epochs = 30;
  c.lr = 0.05;
  c.warmup_epochs = 1;
  return c;
}

TrainConfig RunConfig::DefaultFinetuning() {
  TrainConfig c;
  c.epochs = 20;
  c.lr = 0.01;
  return c;
}

nlohmann::json RunConfigToJson(const RunConfig& c) {
  nlohmann::json eval = {
      {"score_threshold", c.eval.detect.score_threshold},
      {"nms_iou", c.eval.detect.nms_iou},
      {"max_detections", c.eval.detect.max_detections},
      {"interpolation", c.eval.interpolation == ApInterpolation::k101Point ? "101" : "11"},
      {"iou_threshold", c.eval.iou_threshold}};
  return {{"train_dir", c.train_dir},
          {"val_dir", c.val_dir},
          {"checkpoint", c.checkpoint},
          {"model", {{"n_classes", c.n_classes}, {"width", c.width}, {"seed", c.model_seed}}},
          {"criterion", {{"kind", CriterionName(c.criterion.kind)}, {"seed", c.criterion.seed}}},
          {"saliency", SaliencyConfigToJson(c.saliency)},
          {"rate", c.rate},
          {"n_samples", c.n_samples},
          {"train", TrainConfigToJson(c.train)},
          {"finetune", TrainConfigToJson(c.finetune)},
          {"eval", eval},
          {"seed", c.seed}};
}

RunConfig RunConfigFromJson(const nlohmann::json& j, const RunConfig& defaults) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig c = defaults;
  try {
    c.train_dir = j.value("train_dir", c.train_dir);
    c.val_dir = j.value("val_dir", c.val_dir);
    c.checkpoint = j.value("checkpoint", c.checkpoint);
    if (j.contains("model")) {
      const auto& m = j.at("model");
      c.n_classes = m.value("n_classes", c.n_classes);
      c.width = m.value("width", c.width);
      c.model_seed = m.value("seed", c.model_seed);
    }
    if (j.contains("criterion")) {
      const auto& cr = j.at("criterion");
      if (cr.contains("kind")) c.criterion.kind = CriterionFromName(cr.at("kind"));
      c.criterion.seed = cr.value("seed", c.criterion.seed);
    }
    if (j.contains("saliency")) c.saliency = SaliencyConfigFromJson(j.at("saliency"), c.saliency);
    c.rate = j.value("rate", c.rate);
    c.n_samples = j.value("n_samples", c.n_samples);
    if (j.contains("train")) c.train = TrainConfigFromJson(j.at("train"), c.train);
    if (j.contains("finetune")) c.finetune = TrainConfigFromJson(j.at("finetune"), c.finetune);
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      c.eval.detect.score_threshold = e.value("score_threshold", c.eval.detect.score_threshold);
      c.eval.detect.nms_iou = e.value("nms_iou", c.eval.detect.nms_iou);
      c.eval.detect.max_detections = e.value("max_detections", c.eval.detect.max_detections);
      if (e.contains("interpolation")) {
        const std::string interp = e.at("interpolation");
        if (interp != "101" && interp != "11") throw ConfigError("interpolation must be 101 or 11");
        c.eval.interpolation =
            interp == "101" ? ApInterpolation::k101Point : ApInterpolation::k11Point;
      }
      c.eval.iou_threshold = e.value("iou_threshold", c.eval.iou_threshold);
    }
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
  return c;
}

void ValidateRunConfig(const RunConfig& c) {
  if (!(c.rate >= 0.0 && c.rate < 1.0)) throw ConfigError("rate must be in [0, 1)");
  if (c.n_samples < 1) throw ConfigError("n_samples must be >= 1");
  if (c.n_classes < 1) throw ConfigError("n_classes must be >= 1");
  if (!(c.width > 0.0)) throw ConfigError("width must be positive");
  if (c.saliency.reweight.margin_ratio < 0.0) throw ConfigError("margin must be >= 0");
  if (c.saliency.reweight.decay.s <= 0.0) throw ConfigError("decay s must be positive");
  for (const TrainConfig* t : {&c.train, &c.finetune}) {
    if (t->epochs < 0) throw ConfigError("epochs must be >= 0");
    if (t->batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (!(t->lr > 0.0)) throw ConfigError("learning rate must be positive");
  }
}

std::string Fnv1aHex(const std::string& text) {
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string ConfigFingerprint(const RunConfig& config) {
  return Fnv1aHex(RunConfigToJson(config).dump());
}

std::string OutputRoot(const std::string& fallback) {
  const char* env = std::getenv("SALPRUNE_OUT");
  if (env != nullptr && *env != '\0') return env;
  return fallback;
}

void WriteJson(const std::string& path, const nlohmann::json& j) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  WriteText(path, j.dump(2) + "\n");
}

nlohmann::json ReadJson(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed JSON in " + path + ": " + e.what());
  }
}

nlohmann::json ResultRowToJson(const ResultRow& row) {
  return {{"label", row.label},
          {"rate", row.rate},
          {"flops", row.flops},
          {"params", row.params},
          {"eval", EvalReportToJson(row.eval)}};
}

std::string FormatResultTable(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-14s %12s %12s %7s %7s %7s %7s\n", "Pruning Rate",
                "Flops (G)", "Params (M)", "AP-s", "AP-m", "AP-l", "mAP");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-14s %12.4f %12.4f %7s %7s %7s %7s\n",
                  Fixed(r.rate, 2).c_str(), r.flops / 1e9, r.params / 1e6,
                  Percent(r.eval.ap_small).c_str(), Percent(r.eval.ap_medium).c_str(),
                  Percent(r.eval.ap_large).c_str(), Percent(r.eval.map).c_str());
    out << buf;
  }
  return out.str();
}

ResultRow EvaluateRow(const Detector& model, const Dataset& val, const EvalOptions& options,
                      double rate, const std::string& label,
                      std::vector<Detection>* detections) {
  RequireImages(val, "validation");
  ResultRow row;
  row.label = label;
  row.rate = rate;
  const int size = val.manifest.image_size;
  row.params = CountParams(model.graph());
  row.flops = CountFlops(model.graph(), size, size);
  row.eval = EvaluateModel(model, val, options, detections);
  return row;
}

TrainOutcome TrainBaseline(const RunConfig& config, const Dataset& train, const Dataset& val,
                           const std::string& out_dir, const std::string& resume_from) {
  ValidateRunConfig(config);
  RequireImages(train, "training");
  if (train.manifest.n_classes != config.n_classes) {
    throw ConfigError("dataset has " + std::to_string(train.manifest.n_classes) +
                      " classes, config has " + std::to_string(config.n_classes));
  }
  TrainOutcome outcome;
  TrainConfig tc = config.train;
  if (!resume_from.empty()) {
    nlohmann::json meta;
    outcome.model = LoadCheckpoint(resume_from, &meta);
    tc.start_epoch = meta.value("epochs_done", 0);
    if (tc.total_epochs == 0) tc.total_epochs = meta.value("total_epochs", tc.start_epoch + tc.epochs);
    tc.epochs = std::max(0, tc.total_epochs - tc.start_epoch);
    spdlog::info("resuming at epoch {} of {}", tc.start_epoch, tc.total_epochs);
  } else {
    outcome.model = BuildToyDetector(config.n_classes, config.width, config.model_seed);
  }
  const int total = tc.total_epochs > 0 ? tc.total_epochs : tc.start_epoch + tc.epochs;
  try {
    outcome.history = Train(outcome.model, train.samples, tc, [](const EpochStats& s) {
      spdlog::info("epoch {} lr {:.5f} loss {:.4f} (cls {:.4f} box {:.4f})", s.epoch + 1, s.lr,
                   s.loss, s.cls, s.box);
    });
  } catch (const TrainingDiverged& e) {
    spdlog::error("training diverged: {}", e.what());
    throw;
  }
  outcome.epochs_done = tc.start_epoch + tc.epochs;
  ResultRow row = EvaluateRow(outcome.model, val, config.eval, 0.0, "baseline");
  outcome.eval = row.eval;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    nlohmann::json cfg = RunConfigToJson(config);
    WriteJson(out_dir + "/config.json", cfg);
    SaveCheckpoint(out_dir + "/model.ckpt", outcome.model,
                   {{"epochs_done", outcome.epochs_done},
                    {"total_epochs", total},
                    {"fingerprint", ConfigFingerprint(config)},
                    {"eval", EvalReportToJson(outcome.eval)}});
    nlohmann::json history = nlohmann::json::array();
    for (const auto& s : outcome.history) {
      history.push_back({{"epoch", s.epoch}, {"lr", s.lr}, {"loss", s.loss}, {"cls", s.cls},
                         {"box", s.box}});
    }
    WriteJson(out_dir + "/report.json", {{"fingerprint", ConfigFingerprint(config)},
                                         {"epochs_done", outcome.epochs_done},
                                         {"history", history},
                                         {"row", ResultRowToJson(row)}});
    WriteText(out_dir + "/report.txt", FormatResultTable({row}));
  }
  return outcome;
}

PipelineOutcome RunPipeline(const RunConfig& config, const Detector& baseline,
                            const Dataset& train, const Dataset& val,
                            const std::string& out_dir) {
  ValidateRunConfig(config);
  RequireImages(train, "training");
  PipelineOutcome out;
  out.fingerprint = ConfigFingerprint(config);
  out.sample_ids = SelectClassBalanced(train, config.n_samples, config.seed);
  const std::vector<DetectionSample> samples = SamplesById(train, out.sample_ids);
  out.importance = ComputeCriterion(baseline, samples, config.criterion, config.saliency);
  const int size = train.manifest.image_size;
  nlohmann::json meta = {{"fingerprint", out.fingerprint},
                         {"criterion", CriterionName(config.criterion.kind)},
                         {"n_samples", out.importance.n_used},
                         {"taps", config.saliency.taps.empty()
                                      ? DefaultTapLayers(baseline.graph())
                                      : config.saliency.taps}};
  out.plan = MakePlan(out.importance.tables, baseline.graph(), config.rate, size, size, meta);
  out.pruned = ApplyPlan(baseline, out.plan);
  bool removes = false;
  for (const auto& g : out.plan.groups) removes = removes || !g.removed.empty();
  if (removes && config.finetune.epochs > 0) {
    TrainConfig tc = config.finetune;
    tc.start_epoch = 0;
    tc.total_epochs = 0;
    out.finetune_history = Train(out.pruned, train.samples, tc, [](const EpochStats& s) {
      spdlog::info("finetune epoch {} lr {:.5f} loss {:.4f}", s.epoch + 1, s.lr, s.loss);
    });
  }
  std::vector<Detection> detections;
  out.row = EvaluateRow(out.pruned, val, config.eval, config.rate,
                        CriterionName(config.criterion.kind), &detections);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    WriteJson(out_dir + "/config.json", RunConfigToJson(config));
    WriteJson(out_dir + "/importance.json", ImportanceToJson(out.importance.tables, meta));
    WriteJson(out_dir + "/plan.json", PlanToJson(out.plan));
    SaveCheckpoint(out_dir + "/pruned.ckpt", out.pruned,
                   {{"fingerprint", out.fingerprint}, {"rate", config.rate}});
    WriteJson(out_dir + "/detections.json", DetectionsToJson(detections));
    WriteJson(out_dir + "/report.json", {{"fingerprint", out.fingerprint},
                                         {"config", RunConfigToJson(config)},
                                         {"sample_ids", out.sample_ids},
                                         {"finetune_epochs", out.finetune_history.size()},
                                         {"row", ResultRowToJson(out.row)}});
    WriteText(out_dir + "/report.txt", FormatResultTable({out.row}));
  }
  return out;
}

std::vector<VizImage> RenderSaliencyOverlays(const Detector& model,
                                             const DetectionSample& sample,
                                             const VizOptions& options,
                                             const std::string& out_dir) {
  const GraphNode& node = model.graph().node(options.layer);
  for (int c : options.channels) {
    if (c < 0 || c >= node.out_channels) {
      throw ConfigError("channel " + std::to_string(c) + " not in layer " + options.layer);
    }
  }
  const std::vector<std::string> taps = {options.layer};
  TapResult tr = ForwardWithTaps(model, sample, taps, options.loss);
  const FeatureTap& tap = tr.taps.at(0);
  const int fh = tap.activation.height();
  const int fw = tap.activation.width();
  ReweightConfig rc = options.reweight;
  if (rc.mode == ReweightMode::kUniform) rc.mode = ReweightMode::kBoxWithContext;
  const ReweightMask mask = BuildReweightMask(sample.boxes, fh, fw, tap.stride, rc);
  if (mask.empty) spdlog::warn("sample {} has no boxes; reweighted maps are all zero", sample.sample_id);
  ReweightMask uniform = mask;
  std::fill(uniform.beta.begin(), uniform.beta.end(), 1.0);

  const int ih = sample.image.height();
  const int iw = sample.image.width();
  std::vector<uint8_t> pixel_region(static_cast<size_t>(ih) * iw, 0);
  for (int y = 0; y < ih; ++y) {
    for (int x = 0; x < iw; ++x) {
      const int cy = std::min(fh - 1, y / tap.stride);
      const int cx = std::min(fw - 1, x / tap.stride);
      pixel_region[static_cast<size_t>(y) * iw + x] = mask.in_region(cy, cx) ? 1 : 0;
    }
  }
  const Raster base = TensorToRaster(sample.image);

  if (!out_dir.empty()) fs::create_directories(out_dir);
  std::vector<VizImage> images;
  for (int c : options.channels) {
    const auto act = tap.activation.channel(c);
    const auto grad = tap.gradient.channel(c);
    for (bool reweighted : {false, true}) {
      VizImage vi;
      vi.channel = c;
      vi.reweighted = reweighted;
      const double w = ChannelSaliency(grad, reweighted ? mask : uniform);
      vi.heat.assign(act.begin(), act.end());
      for (double& v : vi.heat) v = std::max(0.0, w * v);
      if (reweighted) {
        MinMaxNormalize(vi.heat, &mask.region);
      } else {
        MinMaxNormalize(vi.heat, nullptr);
      }
      vi.region = pixel_region;
      Raster r = base;
      for (int y = 0; y < ih; ++y) {
        for (int x = 0; x < iw; ++x) {
          const size_t p = static_cast<size_t>(y) * iw + x;
          uint8_t* px = &r.pixels[p * 3];
          if (!pixel_region[p]) {
            for (int k = 0; k < 3; ++k) px[k] = static_cast<uint8_t>(px[k] / 2);
            continue;
          }
          const int cy = std::min(fh - 1, y / tap.stride);
          const int cx = std::min(fw - 1, x / tap.stride);
          const auto color = HeatColor(vi.heat[static_cast<size_t>(cy) * fw + cx]);
          for (int k = 0; k < 3; ++k) {
            px[k] = static_cast<uint8_t>(std::lround(0.5 * px[k] + 127.5 * color[k]));
          }
        }
      }
      for (const auto& b : sample.boxes) DrawBoxOutline(r, b);
      vi.overlay = std::move(r);
      if (!out_dir.empty()) {
        vi.path = out_dir + "/" + options.layer + "_c" + std::to_string(c) +
                  (reweighted ? "_reweighted.png" : "_plain.png");
        WritePng(vi.path, vi.overlay);
      }
      images.push_back(std::move(vi));
    }
  }
  return images;
}

AblationStudy AblationStudyFromName(const std::string& name) {
  if (name == "components") return AblationStudy::kComponents;
  if (name == "decay") return AblationStudy::kDecay;
  if (name == "sample_size") return AblationStudy::kSampleSize;
  throw ConfigError("unknown ablation study: " + name +
                    " (expected components, decay or sample_size)");
}

const char* AblationStudyName(AblationStudy study) {
  switch (study) {
    case AblationStudy::kComponents:
      return "components";
    case AblationStudy::kDecay:
      return "decay";
    case AblationStudy::kSampleSize:
      return "sample_size";
  }
  return "components";
}

std::vector<AblationArm> AblationArms(AblationStudy study, const RunConfig& base,
                                      const std::vector<int>& sample_sizes) {
  std::vector<AblationArm> arms;
  const DecayKind decay = base.saliency.reweight.decay.kind;
  switch (study) {
    case AblationStudy::kComponents:
      arms.push_back({"unpruned", false, false, false, false, decay, base.n_samples, {}});
      arms.push_back({"gradients", true, false, false, true, decay, base.n_samples, {}});
      arms.push_back({"gradients+box", true, true, false, true, decay, base.n_samples, {}});
      arms.push_back({"gradients+box+context", true, true, true, true, decay, base.n_samples, {}});
      break;
    case AblationStudy::kDecay:
      for (DecayKind k : {DecayKind::kNone, DecayKind::kFlatTopGaussian, DecayKind::kExponential,
                          DecayKind::kPower}) {
        arms.push_back({DecayKindName(k), true, true, true, true, k, base.n_samples, {}});
      }
      break;
    case AblationStudy::kSampleSize:
      if (sample_sizes.empty()) throw ConfigError("sample_size study needs at least one N");
      for (int n : sample_sizes) {
        if (n < 1) throw ConfigError("sample sizes must be >= 1");
        arms.push_back({"N=" + std::to_string(n), true, true, true, true, decay, n, {}});
      }
      break;
  }
  return arms;
}

std::vector<AblationArm> RunAblation(AblationStudy study, const RunConfig& base,
                                     const Detector& baseline, const Dataset& train,
                                     const Dataset& val, const std::string& out_dir,
                                     const std::vector<int>& sample_sizes) {
  std::vector<AblationArm> arms = AblationArms(study, base, sample_sizes);
  for (auto& arm : arms) {
    spdlog::info("ablation {}: arm {}", AblationStudyName(study), arm.name);
    if (!arm.prune) {
      arm.row = EvaluateRow(baseline, val, base.eval, 0.0, arm.name);
      continue;
    }
    RunConfig c = base;
    c.criterion.kind = CriterionKind::kSaliency;
    c.n_samples = arm.n_samples;
    c.saliency.reweight.decay.kind = arm.decay;
    c.saliency.reweight.mode = !arm.gt_box  ? ReweightMode::kUniform
                               : arm.context ? ReweightMode::kBoxWithContext
                                             : ReweightMode::kBoxOnly;
    if (!arm.gt_box) c.saliency.extent = ImportanceExtent::kFull;
    const std::string arm_dir =
        out_dir.empty() ? "" : out_dir + "/arms/" + ConfigFingerprint(c);
    PipelineOutcome o = RunPipeline(c, baseline, train, val, arm_dir);
    arm.row = o.row;
    arm.row.label = arm.name;
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    WriteJson(out_dir + "/config.json", RunConfigToJson(base));
    WriteText(out_dir + "/ablation.csv", AblationCsv(study, arms));
    WriteText(out_dir + "/ablation.svg", AblationSvg(study, arms));
    std::vector<ResultRow> rows;
    for (const auto& a : arms) rows.push_back(a.row);
    WriteText(out_dir + "/report.txt", FormatResultTable(rows));
  }
  return arms;
}

std::string AblationCsv(AblationStudy study, const std::vector<AblationArm>& arms) {
  auto cell = [](const std::optional<double>& v) { return v ? Fixed(*v, 6) : std::string(); };
  std::ostringstream out;
  out << "study,arm,gradients,gt_box,context,decay,n_samples,rate,flops,params,AP_s,AP_m,AP_l,mAP\n";
  for (const auto& a : arms) {
    out << AblationStudyName(study) << ',' << a.name << ',' << a.gradients << ',' << a.gt_box
        << ',' << a.context << ',' << DecayKindName(a.decay) << ',' << a.n_samples << ','
        << Fixed(a.row.rate, 4) << ',' << a.row.flops << ',' << a.row.params << ','
        << cell(a.row.eval.ap_small) << ',' << cell(a.row.eval.ap_medium) << ','
        << cell(a.row.eval.ap_large) << ',' << cell(a.row.eval.map) << '\n';
  }
  return out.str();
}

std::string AblationSvg(AblationStudy study, const std::vector<AblationArm>& arms) {
  const int width = 640;
  const int height = 360;
  const double left = 60, right = 20, top = 30, bottom = 60;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"18\" text-anchor=\"middle\">ablation: "
      << AblationStudyName(study) << " (mAP@0.5)</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
      << "\" y2=\"" << top + plot_h << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
      << top + plot_h << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    const double y = top + plot_h * (1.0 - v);
    out << "<text x=\"" << left - 6 << "\" y=\"" << y + 4 << "\" text-anchor=\"end\">"
        << Fixed(100.0 * v, 0) << "</text>\n";
  }
  const size_t n = arms.size();
  const double step = n > 0 ? plot_w / n : plot_w;
  std::string polyline;
  for (size_t i = 0; i < n; ++i) {
    const double v = arms[i].row.eval.map.value_or(0.0);
    const double cx = left + step * (i + 0.5);
    const double y = top + plot_h * (1.0 - std::clamp(v, 0.0, 1.0));
    if (study == AblationStudy::kSampleSize) {
      polyline += Fixed(cx, 1) + "," + Fixed(y, 1) + " ";
      out << "<circle cx=\"" << cx << "\" cy=\"" << y << "\" r=\"3\" fill=\"steelblue\"/>\n";
    } else {
      out << "<rect x=\"" << cx - step * 0.3 << "\" y=\"" << y << "\" width=\"" << step * 0.6
          << "\" height=\"" << top + plot_h - y << "\" fill=\"steelblue\"/>\n";
    }
    out << "<text x=\"" << cx << "\" y=\"" << y - 6 << "\" text-anchor=\"middle\">"
        << Fixed(100.0 * v, 1) << "</text>\n";
    out << "<text x=\"" << cx << "\" y=\"" << top + plot_h + 16
        << "\" text-anchor=\"middle\">" << arms[i].name << "</text>\n";
  }
  if (!polyline.empty()) {
    out << "<polyline points=\"" << polyline << "\" fill=\"none\" stroke=\"steelblue\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

}  // namespace salprune
