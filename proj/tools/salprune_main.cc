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

// salprune: synthetic data, baseline training, saliency-guided channel
// pruning, fine-tuning, evaluation, visualization and ablations.

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "salprune/errors.h"
#include "salprune/pipeline.h"

namespace fs = std::filesystem;
using namespace salprune;

namespace {

// Flags that override keys of a JSON run config. Unset flags leave the
// config untouched.
struct ConfigFlags {
  std::string config_path;
  std::optional<std::string> train_dir, val_dir, checkpoint;
  std::optional<int> n_classes;
  std::optional<double> width;
  std::optional<uint64_t> model_seed;
  std::optional<std::string> criterion;
  std::optional<std::string> decay;
  std::optional<double> decay_s, margin;
  std::optional<std::string> reweight_mode, extent;
  std::optional<std::vector<std::string>> taps;
  std::optional<double> rate;
  std::optional<int> n_samples;
  std::optional<int> epochs, batch_size, warmup;
  std::optional<double> lr, momentum, weight_decay;
  std::optional<uint64_t> seed;
};

void AddConfigFlags(CLI::App* app, ConfigFlags& f, bool pruning) {
  app->add_option("--config", f.config_path, "JSON run config")->check(CLI::ExistingFile);
  app->add_option("--train-dir", f.train_dir, "training split directory");
  app->add_option("--val-dir", f.val_dir, "validation split directory");
  app->add_option("--classes", f.n_classes, "number of classes");
  app->add_option("--width", f.width, "width multiplier of the toy detector");
  app->add_option("--model-seed", f.model_seed, "weight initialization seed");
  app->add_option("--epochs", f.epochs, "training epochs");
  app->add_option("--batch-size", f.batch_size, "minibatch size");
  app->add_option("--lr", f.lr, "initial learning rate");
  app->add_option("--momentum", f.momentum, "SGD momentum");
  app->add_option("--weight-decay", f.weight_decay, "L2 weight decay");
  app->add_option("--warmup", f.warmup, "linear warmup epochs");
  app->add_option("--seed", f.seed, "run seed (sample selection, shuffling)");
  if (!pruning) return;
  app->add_option("--checkpoint", f.checkpoint, "baseline checkpoint");
  app->add_option("--criterion", f.criterion, "saliency, l1 or random")
      ->check(CLI::IsMember({"saliency", "l1", "random"}));
  app->add_option("--decay", f.decay, "ring decay")
      ->check(CLI::IsMember({"power", "exp", "ftg", "none"}));
  app->add_option("--decay-s", f.decay_s, "power decay exponent s");
  app->add_option("--margin", f.margin, "context margin as a fraction of box side");
  app->add_option("--reweight-mode", f.reweight_mode, "box_context, box_only or uniform")
      ->check(CLI::IsMember({"box_context", "box_only", "uniform"}));
  app->add_option("--importance-extent", f.extent, "region or full")
      ->check(CLI::IsMember({"region", "full"}));
  app->add_option("--taps", f.taps, "conv layers to score")->delimiter(',');
  app->add_option("--rate", f.rate, "pruning rate in [0, 1)");
  app->add_option("--n-samples", f.n_samples, "class-balanced sample-set size N");
}

// Training flags go to `train` for the baseline and to `finetune` otherwise.
RunConfig ResolveConfig(const ConfigFlags& f, bool finetune_flags) {
  RunConfig c;
  if (!f.config_path.empty()) c = RunConfigFromJson(ReadJson(f.config_path));
  if (f.train_dir) c.train_dir = *f.train_dir;
  if (f.val_dir) c.val_dir = *f.val_dir;
  if (f.checkpoint) c.checkpoint = *f.checkpoint;
  if (f.n_classes) c.n_classes = *f.n_classes;
  if (f.width) c.width = *f.width;
  if (f.model_seed) c.model_seed = *f.model_seed;
  if (f.criterion) c.criterion.kind = CriterionFromName(*f.criterion);
  if (f.decay) c.saliency.reweight.decay.kind = DecayKindFromName(*f.decay);
  if (f.decay_s) c.saliency.reweight.decay.s = *f.decay_s;
  if (f.margin) c.saliency.reweight.margin_ratio = *f.margin;
  if (f.reweight_mode) {
    c.saliency.reweight.mode = *f.reweight_mode == "box_context" ? ReweightMode::kBoxWithContext
                               : *f.reweight_mode == "box_only"  ? ReweightMode::kBoxOnly
                                                                 : ReweightMode::kUniform;
  }
  if (f.extent) {
    c.saliency.extent = *f.extent == "full" ? ImportanceExtent::kFull : ImportanceExtent::kRegion;
  }
  if (f.taps) c.saliency.taps = *f.taps;
  if (f.rate) c.rate = *f.rate;
  if (f.n_samples) c.n_samples = *f.n_samples;
  TrainConfig& t = finetune_flags ? c.finetune : c.train;
  if (f.epochs) t.epochs = *f.epochs;
  if (f.batch_size) t.batch_size = *f.batch_size;
  if (f.lr) t.lr = *f.lr;
  if (f.momentum) t.momentum = *f.momentum;
  if (f.weight_decay) t.weight_decay = *f.weight_decay;
  if (f.warmup) t.warmup_epochs = *f.warmup;
  if (f.seed) {
    c.seed = *f.seed;
    c.criterion.seed = *f.seed;
    t.seed = *f.seed;
  }
  ValidateRunConfig(c);
  return c;
}

std::string VersionedDir(const std::string& root, const std::string& command,
                         const std::string& explicit_dir, const RunConfig& config) {
  if (!explicit_dir.empty()) return explicit_dir;
  return root + "/" + command + "/" + ConfigFingerprint(config);
}

std::string Require(const std::string& value, const char* what) {
  if (value.empty()) throw ConfigError(std::string("missing ") + what);
  if (!fs::exists(value)) throw ConfigError(std::string(what) + " not found: " + value);
  return value;
}

Dataset LoadSplit(const std::string& dir, const char* what) {
  return LoadDataset(Require(dir, what));
}

std::vector<int> ParseIntList(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      out.push_back(std::stoi(item));
    } catch (const std::exception&) {
      throw ConfigError("not an integer list: " + text);
    }
  }
  return out;
}

void PrintFile(const std::string& path) {
  std::ifstream in(path);
  std::cout << in.rdbuf();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"salprune: saliency-guided channel pruning for detectors"};
  app.require_subcommand(1);
  std::string out_root_flag;
  bool verbose = false;
  app.add_option("--out-root", out_root_flag,
                 "output root for versioned run directories (default $SALPRUNE_OUT or ./salprune_runs)");
  app.add_flag("-v,--verbose", verbose, "debug logging");

  // data gen / data balance
  auto* data = app.add_subcommand("data", "synthetic dataset tools");
  data->require_subcommand(1);
  ShapesOptions gen;
  std::string size_mix_text;
  std::string gen_out;
  auto* gen_cmd = data->add_subcommand("gen", "render a synthetic shapes split");
  gen_cmd->add_option("--split", gen.split, "split name")->capture_default_str();
  gen_cmd->add_option("--n-images", gen.n_images, "number of images")->capture_default_str();
  gen_cmd->add_option("--image-size", gen.image_size, "square image side")->capture_default_str();
  gen_cmd->add_option("--classes", gen.n_classes, "number of classes")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "generator seed")->capture_default_str();
  gen_cmd->add_option("--size-mix", size_mix_text, "small,medium,large proportions");
  gen_cmd->add_option("--min-objects", gen.min_objects)->capture_default_str();
  gen_cmd->add_option("--max-objects", gen.max_objects)->capture_default_str();
  gen_cmd->add_option("--out", gen_out, "output directory (default <root>/data/<split>)");

  std::string balance_data, balance_out;
  int balance_n = 50;
  uint64_t balance_seed = 0;
  auto* balance_cmd = data->add_subcommand("balance", "select a class-balanced sample set");
  balance_cmd->add_option("--data", balance_data, "split directory")->required();
  balance_cmd->add_option("--n", balance_n, "sample-set size")->capture_default_str();
  balance_cmd->add_option("--seed", balance_seed, "selection seed")->capture_default_str();
  balance_cmd->add_option("--out", balance_out, "write the selection as JSON");

  // train
  ConfigFlags train_flags;
  std::string train_out, resume;
  int total_epochs = 0;
  auto* train_cmd = app.add_subcommand("train", "train the toy baseline detector");
  AddConfigFlags(train_cmd, train_flags, false);
  train_cmd->add_option("--resume", resume, "continue from a checkpoint")->check(CLI::ExistingFile);
  train_cmd->add_option("--total-epochs", total_epochs,
                        "with --resume: train until this epoch (default: the checkpoint's total)");
  train_cmd->add_option("--out", train_out, "output directory");

  // importance
  ConfigFlags imp_flags;
  std::string imp_out;
  auto* imp_cmd = app.add_subcommand("importance", "per-channel importance tables");
  AddConfigFlags(imp_cmd, imp_flags, true);
  imp_cmd->add_option("--out", imp_out, "importance JSON path");

  // prune
  std::string prune_ckpt, prune_imp, plan_out, prune_out;
  double prune_rate = 0.3;
  int prune_size = 128;
  auto* prune_cmd = app.add_subcommand("prune", "plan and apply channel removal");
  prune_cmd->add_option("--checkpoint", prune_ckpt, "model checkpoint")->required();
  prune_cmd->add_option("--importance", prune_imp, "importance JSON")->required();
  prune_cmd->add_option("--rate", prune_rate, "pruning rate in [0, 1)")->capture_default_str();
  prune_cmd->add_option("--image-size", prune_size, "input side for FLOPs")->capture_default_str();
  prune_cmd->add_option("--plan-out", plan_out, "plan JSON path");
  prune_cmd->add_option("--out", prune_out, "pruned checkpoint path");

  // finetune
  ConfigFlags ft_flags;
  std::string ft_out;
  auto* ft_cmd = app.add_subcommand("finetune", "fine-tune a (pruned) checkpoint");
  AddConfigFlags(ft_cmd, ft_flags, false);
  std::string ft_ckpt;
  ft_cmd->add_option("--checkpoint", ft_ckpt, "checkpoint to fine-tune")->required();
  ft_cmd->add_option("--out", ft_out, "output checkpoint path");

  // eval
  std::string eval_ckpt, eval_data, eval_out;
  double eval_rate = 0.0;
  std::string interpolation = "101";
  auto* eval_cmd = app.add_subcommand("eval", "mAP@0.5 with AP-s/m/l, params and FLOPs");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--data", eval_data, "split directory")->required();
  eval_cmd->add_option("--rate", eval_rate, "pruning rate shown in the table");
  eval_cmd->add_option("--interpolation", interpolation, "101 or 11")
      ->check(CLI::IsMember({"101", "11"}));
  eval_cmd->add_option("--out", eval_out, "output directory");

  // pipeline
  ConfigFlags pipe_flags;
  std::string pipe_out;
  auto* pipe_cmd = app.add_subcommand("pipeline", "balance, score, prune, fine-tune, evaluate");
  AddConfigFlags(pipe_cmd, pipe_flags, true);
  pipe_cmd->add_option("--out", pipe_out, "output directory");

  // viz
  std::string viz_ckpt, viz_data, viz_sample, viz_layer, viz_channels = "0", viz_out;
  std::string viz_decay = "power";
  double viz_s = 1.0, viz_margin = 0.25;
  auto* viz_cmd = app.add_subcommand("viz", "saliency overlays with and without reweighting");
  viz_cmd->add_option("--checkpoint", viz_ckpt, "model checkpoint")->required();
  viz_cmd->add_option("--data", viz_data, "split directory")->required();
  viz_cmd->add_option("--sample", viz_sample, "sample id or index (default: first)");
  viz_cmd->add_option("--layer", viz_layer, "conv layer id")->required();
  viz_cmd->add_option("--channels", viz_channels, "comma-separated channel indices")
      ->capture_default_str();
  viz_cmd->add_option("--decay", viz_decay)->check(CLI::IsMember({"power", "exp", "ftg", "none"}));
  viz_cmd->add_option("--decay-s", viz_s)->capture_default_str();
  viz_cmd->add_option("--margin", viz_margin)->capture_default_str();
  viz_cmd->add_option("--out", viz_out, "output directory");

  // ablate
  ConfigFlags abl_flags;
  std::string study, abl_out, sizes_text = "8,16,32,64,128";
  auto* abl_cmd = app.add_subcommand("ablate", "components, decay or sample_size study");
  AddConfigFlags(abl_cmd, abl_flags, true);
  abl_cmd->add_option("--study", study, "components, decay or sample_size")
      ->required()
      ->check(CLI::IsMember({"components", "decay", "sample_size"}));
  abl_cmd->add_option("--sizes", sizes_text, "sample sizes for sample_size")->capture_default_str();
  abl_cmd->add_option("--out", abl_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and --version exit 0; every other parse failure is a usage error.
    return app.exit(e) == 0 ? 0 : 2;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);
  const std::string root = out_root_flag.empty() ? OutputRoot("salprune_runs") : out_root_flag;

  try {
    if (*gen_cmd) {
      if (!size_mix_text.empty()) {
        std::vector<double> mix;
        std::stringstream ss(size_mix_text);
        std::string item;
        while (std::getline(ss, item, ',')) mix.push_back(std::stod(item));
        if (mix.size() != 3) throw ConfigError("--size-mix needs three values");
        gen.size_mix = {mix[0], mix[1], mix[2]};
      }
      const std::string dir = gen_out.empty() ? root + "/data/" + gen.split : gen_out;
      const DatasetManifest m = GenerateShapesDataset(gen, dir);
      std::cout << "wrote " << m.image_count << " images, " << m.total_instances
                << " instances to " << dir << "\n";
      return 0;
    }
    if (*balance_cmd) {
      const Dataset d = LoadDataset(Require(balance_data, "--data"), false);
      const auto ids = SelectClassBalanced(d, balance_n, balance_seed);
      const auto counts = CountInstances(d.annotations, ids, d.manifest.n_classes);
      const double ratio = ImbalanceRatio(d, ids);
      nlohmann::json j = {{"data", balance_data}, {"n", balance_n}, {"seed", balance_seed},
                          {"sample_ids", ids}, {"class_counts", counts},
                          {"imbalance_ratio", ratio}};
      if (!balance_out.empty()) WriteJson(balance_out, j);
      std::cout << j.dump(2) << "\n";
      return 0;
    }
    if (*train_cmd) {
      RunConfig c = ResolveConfig(train_flags, false);
      c.train.total_epochs = total_epochs;
      const Dataset tr = LoadSplit(c.train_dir, "train_dir");
      const Dataset va = LoadSplit(c.val_dir, "val_dir");
      const std::string dir = VersionedDir(root, "train", train_out, c);
      TrainBaseline(c, tr, va, dir, resume);
      PrintFile(dir + "/report.txt");
      std::cout << "checkpoint: " << dir << "/model.ckpt\n";
      return 0;
    }
    if (*imp_cmd) {
      const RunConfig c = ResolveConfig(imp_flags, true);
      const Detector model = LoadCheckpoint(Require(c.checkpoint, "checkpoint"));
      const Dataset tr = LoadSplit(c.train_dir, "train_dir");
      const auto ids = SelectClassBalanced(tr, c.n_samples, c.seed);
      std::vector<DetectionSample> samples;
      for (const auto& s : tr.samples) {
        if (std::find(ids.begin(), ids.end(), s.sample_id) != ids.end()) samples.push_back(s);
      }
      const ImportanceResult r = ComputeCriterion(model, samples, c.criterion, c.saliency);
      nlohmann::json meta = SaliencyConfigToJson(c.saliency);
      meta["criterion"] = CriterionName(c.criterion.kind);
      meta["N"] = r.n_used;
      meta["skipped"] = r.n_skipped;
      meta["seed"] = c.seed;
      meta["sample_ids"] = ids;
      meta["fingerprint"] = ConfigFingerprint(c);
      const std::string path =
          imp_out.empty() ? VersionedDir(root, "importance", "", c) + "/importance.json" : imp_out;
      WriteJson(path, ImportanceToJson(r.tables, meta));
      WriteJson(fs::path(path).parent_path().string() + "/config.json", RunConfigToJson(c));
      std::cout << "importance: " << path << "\n";
      return 0;
    }
    if (*prune_cmd) {
      const Detector model = LoadCheckpoint(prune_ckpt);
      nlohmann::json meta;
      const ImportanceTables tables = ImportanceFromJson(ReadJson(prune_imp), &meta);
      const PruningPlan plan =
          MakePlan(tables, model.graph(), prune_rate, prune_size, prune_size,
                   {{"importance", prune_imp}, {"importance_metadata", meta}});
      const Detector pruned = ApplyPlan(model, plan);
      const std::string fp = Fnv1aHex(PlanToJson(plan).dump());
      const std::string dir = root + "/prune/" + fp;
      const std::string plan_path = plan_out.empty() ? dir + "/plan.json" : plan_out;
      const std::string ckpt_path = prune_out.empty() ? dir + "/pruned.ckpt" : prune_out;
      WriteJson(plan_path, PlanToJson(plan));
      if (fs::path(ckpt_path).has_parent_path()) fs::create_directories(fs::path(ckpt_path).parent_path());
      SaveCheckpoint(ckpt_path, pruned, {{"rate", prune_rate}, {"plan", plan_path}});
      std::printf("params %lld -> %lld, flops %lld -> %lld\n",
                  static_cast<long long>(plan.params_before), static_cast<long long>(plan.params_after),
                  static_cast<long long>(plan.flops_before), static_cast<long long>(plan.flops_after));
      std::cout << "plan: " << plan_path << "\npruned checkpoint: " << ckpt_path << "\n";
      return 0;
    }
    if (*ft_cmd) {
      const RunConfig c = ResolveConfig(ft_flags, true);
      nlohmann::json meta;
      Detector model = LoadCheckpoint(ft_ckpt, &meta);
      const Dataset tr = LoadSplit(c.train_dir, "train_dir");
      Train(model, tr.samples, c.finetune, [](const EpochStats& s) {
        spdlog::info("finetune epoch {} lr {:.5f} loss {:.4f}", s.epoch + 1, s.lr, s.loss);
      });
      const std::string path = ft_out.empty()
                                   ? VersionedDir(root, "finetune", "", c) + "/model.ckpt"
                                   : ft_out;
      if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
      meta["finetune"] = TrainConfigToJson(c.finetune);
      SaveCheckpoint(path, model, meta);
      WriteJson(fs::path(path).parent_path().string() + "/config.json", RunConfigToJson(c));
      std::cout << "checkpoint: " << path << "\n";
      return 0;
    }
    if (*eval_cmd) {
      nlohmann::json meta;
      const Detector model = LoadCheckpoint(eval_ckpt, &meta);
      const Dataset va = LoadDataset(Require(eval_data, "--data"));
      EvalOptions eo;
      eo.interpolation = interpolation == "101" ? ApInterpolation::k101Point : ApInterpolation::k11Point;
      const double rate = eval_cmd->count("--rate") > 0 ? eval_rate : meta.value("rate", 0.0);
      std::vector<Detection> dets;
      const ResultRow row = EvaluateRow(model, va, eo, rate, fs::path(eval_ckpt).stem().string(), &dets);
      const std::string dir = eval_out.empty()
                                  ? root + "/eval/" + Fnv1aHex(eval_ckpt + "|" + eval_data + "|" + interpolation)
                                  : eval_out;
      WriteJson(dir + "/detections.json", DetectionsToJson(dets));
      WriteJson(dir + "/report.json", {{"checkpoint", eval_ckpt}, {"data", eval_data},
                                       {"interpolation", interpolation},
                                       {"row", ResultRowToJson(row)}});
      std::ofstream(dir + "/report.txt") << FormatResultTable({row});
      std::cout << FormatResultTable({row});
      return 0;
    }
    if (*pipe_cmd) {
      const RunConfig c = ResolveConfig(pipe_flags, true);
      const Detector base = LoadCheckpoint(Require(c.checkpoint, "checkpoint"));
      const Dataset tr = LoadSplit(c.train_dir, "train_dir");
      const Dataset va = LoadSplit(c.val_dir, "val_dir");
      const std::string dir = VersionedDir(root, "pipeline", pipe_out, c);
      RunPipeline(c, base, tr, va, dir);
      PrintFile(dir + "/report.txt");
      std::cout << "artifacts: " << dir << "\n";
      return 0;
    }
    if (*viz_cmd) {
      const Detector model = LoadCheckpoint(viz_ckpt);
      const Dataset d = LoadDataset(Require(viz_data, "--data"));
      if (d.samples.empty()) throw ConfigError("dataset has no images");
      const DetectionSample* sample = &d.samples.front();
      if (!viz_sample.empty()) {
        sample = nullptr;
        for (const auto& s : d.samples) {
          if (s.sample_id == viz_sample) sample = &s;
        }
        // A bare number selects by position.
        if (sample == nullptr && !viz_sample.empty() &&
            viz_sample.find_first_not_of("0123456789") == std::string::npos) {
          const size_t i = std::stoul(viz_sample);
          if (i < d.samples.size()) sample = &d.samples[i];
        }
        if (sample == nullptr) throw ConfigError("unknown sample " + viz_sample);
      }
      VizOptions vo;
      vo.layer = viz_layer;
      vo.channels = ParseIntList(viz_channels);
      vo.reweight.decay.kind = DecayKindFromName(viz_decay);
      vo.reweight.decay.s = viz_s;
      vo.reweight.margin_ratio = viz_margin;
      const std::string dir =
          viz_out.empty() ? root + "/viz/" +
                                Fnv1aHex(viz_ckpt + "|" + sample->sample_id + "|" + viz_layer + "|" +
                                         viz_channels + "|" + viz_decay + "|" +
                                         std::to_string(viz_s) + "|" + std::to_string(viz_margin))
                          : viz_out;
      for (const auto& img : RenderSaliencyOverlays(model, *sample, vo, dir)) {
        std::cout << img.path << "\n";
      }
      return 0;
    }
    if (*abl_cmd) {
      const AblationStudy s = AblationStudyFromName(study);
      const RunConfig c = ResolveConfig(abl_flags, true);
      const Detector base = LoadCheckpoint(Require(c.checkpoint, "checkpoint"));
      const Dataset tr = LoadSplit(c.train_dir, "train_dir");
      const Dataset va = LoadSplit(c.val_dir, "val_dir");
      const std::string dir = abl_out.empty()
                                  ? root + "/ablate/" + study + "/" + ConfigFingerprint(c)
                                  : abl_out;
      RunAblation(s, c, base, tr, va, dir, ParseIntList(sizes_text));
      PrintFile(dir + "/ablation.csv");
      std::cout << "artifacts: " << dir << "\n";
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const TrainingDiverged& e) {
    std::cerr << "training diverged: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
