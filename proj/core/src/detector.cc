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

#include "salprune/detector.h"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "salprune/errors.h"

namespace salprune {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using MatrixMap = Eigen::Map<RowMatrix>;

int ConvOutSize(int in, int kernel, int stride) {
  const int pad = kernel / 2;
  return (in + 2 * pad - kernel) / stride + 1;
}

// Unfolds x (C x H x W) into a (C*K*K) x (Ho*Wo) matrix, zero padding K/2.
void Im2Col(const Tensor& x, int k, int stride, int ho, int wo, double* col) {
  const int pad = k / 2;
  const int h = x.height(), w = x.width();
  const size_t p = static_cast<size_t>(ho) * wo;
  for (int c = 0; c < x.channels(); ++c) {
    const double* src = x.data() + c * x.plane_size();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = col + ((static_cast<size_t>(c) * k + ky) * k + kx) * p;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          double* row = dst + static_cast<size_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + wo, 0.0);
            continue;
          }
          const double* src_row = src + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[ox] = (ix < 0 || ix >= w) ? 0.0 : src_row[ix];
          }
        }
      }
    }
  }
}

// Adjoint of Im2Col, accumulating into dx.
void Col2ImAdd(const double* col, int k, int stride, int ho, int wo, Tensor& dx) {
  const int pad = k / 2;
  const int h = dx.height(), w = dx.width();
  const size_t p = static_cast<size_t>(ho) * wo;
  for (int c = 0; c < dx.channels(); ++c) {
    double* dst = dx.data() + c * dx.plane_size();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = col + ((static_cast<size_t>(c) * k + ky) * k + kx) * p;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const double* row = src + static_cast<size_t>(oy) * wo;
          double* dst_row = dst + static_cast<size_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) dst_row[ix] += row[ox];
          }
        }
      }
    }
  }
}

bool IsPointwise(const GraphNode& n) { return n.kernel == 1 && n.stride == 1; }

Tensor ConvForward(const GraphNode& n, const NodeParams& p, const Tensor& x,
                   std::vector<double>& scratch) {
  const int ho = ConvOutSize(x.height(), n.kernel, n.stride);
  const int wo = ConvOutSize(x.width(), n.kernel, n.stride);
  const int rows = n.in_channels * n.kernel * n.kernel;
  const int cols = ho * wo;
  Tensor y(n.out_channels, ho, wo);
  const double* col = x.data();
  if (!IsPointwise(n)) {
    scratch.resize(static_cast<size_t>(rows) * cols);
    Im2Col(x, n.kernel, n.stride, ho, wo, scratch.data());
    col = scratch.data();
  }
  ConstMatrixMap w(p.weight.data(), n.out_channels, rows);
  ConstMatrixMap c(col, rows, cols);
  MatrixMap out(y.data(), n.out_channels, cols);
  out.noalias() = w * c;
  if (n.bias) {
    for (int o = 0; o < n.out_channels; ++o) out.row(o).array() += p.bias[o];
  }
  return y;
}

void ConvBackward(const GraphNode& n, const NodeParams& p, const Tensor& x,
                  const Tensor& dy, NodeGrads* grads, Tensor* dx,
                  std::vector<double>& scratch) {
  const int ho = dy.height(), wo = dy.width();
  const int rows = n.in_channels * n.kernel * n.kernel;
  const int cols = ho * wo;
  const double* col = x.data();
  if (!IsPointwise(n)) {
    scratch.resize(static_cast<size_t>(rows) * cols);
    Im2Col(x, n.kernel, n.stride, ho, wo, scratch.data());
    col = scratch.data();
  }
  ConstMatrixMap g(dy.data(), n.out_channels, cols);
  if (grads != nullptr) {
    ConstMatrixMap c(col, rows, cols);
    MatrixMap dw(grads->weight.data(), n.out_channels, rows);
    dw.noalias() += g * c.transpose();
    if (n.bias) {
      for (int o = 0; o < n.out_channels; ++o) grads->bias[o] += g.row(o).sum();
    }
  }
  if (dx != nullptr) {
    ConstMatrixMap w(p.weight.data(), n.out_channels, rows);
    if (IsPointwise(n)) {
      MatrixMap d(dx->data(), rows, cols);
      d.noalias() += w.transpose() * g;
    } else {
      RowMatrix dcol = w.transpose() * g;
      Col2ImAdd(dcol.data(), n.kernel, n.stride, ho, wo, *dx);
    }
  }
}

double Sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

void AddInto(Tensor& acc, const Tensor& v) {
  if (acc.size() == 0) {
    acc = v;
    return;
  }
  double* a = acc.data();
  const double* b = v.data();
  for (size_t i = 0; i < acc.size(); ++i) a[i] += b[i];
}

}  // namespace

Detector::Detector(ModelGraph graph, int num_classes)
    : graph_(std::move(graph)), num_classes_(num_classes) {
  graph_.Validate();
  params_.resize(graph_.nodes().size());
  for (size_t i = 0; i < graph_.nodes().size(); ++i) {
    const GraphNode& n = graph_.nodes()[i];
    NodeParams& p = params_[i];
    if (n.kind == NodeKind::kConv || n.kind == NodeKind::kHead) {
      p.weight.assign(static_cast<size_t>(n.out_channels) * n.in_channels * n.kernel * n.kernel, 0.0);
      if (n.bias) p.bias.assign(n.out_channels, 0.0);
    } else if (n.kind == NodeKind::kNorm) {
      p.gamma.assign(n.out_channels, 1.0);
      p.beta.assign(n.out_channels, 0.0);
      p.running_mean.assign(n.out_channels, 0.0);
      p.running_var.assign(n.out_channels, 1.0);
    }
  }
}

void Detector::InitializeParams(uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (size_t i = 0; i < graph_.nodes().size(); ++i) {
    const GraphNode& n = graph_.nodes()[i];
    NodeParams& p = params_[i];
    if (n.kind == NodeKind::kConv) {
      const double fan_in = n.in_channels * n.kernel * n.kernel;
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (double& w : p.weight) w = dist(rng);
    } else if (n.kind == NodeKind::kHead) {
      std::normal_distribution<double> dist(0.0, 0.01);
      for (double& w : p.weight) w = dist(rng);
      std::fill(p.bias.begin(), p.bias.end(), 0.0);
      p.bias[0] = -std::log((1.0 - 0.01) / 0.01);
    } else if (n.kind == NodeKind::kNorm) {
      std::fill(p.gamma.begin(), p.gamma.end(), 1.0);
      std::fill(p.beta.begin(), p.beta.end(), 0.0);
      std::fill(p.running_mean.begin(), p.running_mean.end(), 0.0);
      std::fill(p.running_var.begin(), p.running_var.end(), 1.0);
    }
  }
}

std::vector<std::string> Detector::HeadIds() const {
  std::vector<std::string> ids = graph_.NodesOfKind(NodeKind::kHead);
  std::stable_sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    return graph_.node(a).cumulative_stride < graph_.node(b).cumulative_stride;
  });
  return ids;
}

std::vector<HeadGeometry> Detector::HeadGeometries(int image_h, int image_w) const {
  // Spatial sizes follow the conv chain, so walk the graph once.
  std::vector<std::pair<int, int>> hw(graph_.nodes().size());
  for (size_t i = 0; i < graph_.nodes().size(); ++i) {
    const GraphNode& n = graph_.nodes()[i];
    if (n.kind == NodeKind::kInput) {
      hw[i] = {image_h, image_w};
    } else {
      auto in = hw[graph_.IndexOf(n.inputs[0])];
      if (n.kind == NodeKind::kConv || n.kind == NodeKind::kHead) {
        in = {ConvOutSize(in.first, n.kernel, n.stride), ConvOutSize(in.second, n.kernel, n.stride)};
      }
      hw[i] = in;
    }
  }
  std::vector<HeadGeometry> out;
  for (const std::string& id : HeadIds()) {
    const auto [h, w] = hw[graph_.IndexOf(id)];
    out.push_back({graph_.node(id).cumulative_stride, h, w});
  }
  return out;
}

ForwardCache Detector::Forward(std::span<const Tensor> images, Mode mode,
                               const ActivationHook* hook) const {
  const auto& nodes = graph_.nodes();
  const int batch = static_cast<int>(images.size());
  ForwardCache cache;
  cache.mode = mode;
  cache.outputs.resize(nodes.size());
  cache.batch_mean.resize(nodes.size());
  cache.batch_var.resize(nodes.size());
  std::vector<double> scratch;

  for (size_t i = 0; i < nodes.size(); ++i) {
    const GraphNode& n = nodes[i];
    const NodeParams& p = params_[i];
    std::vector<Tensor>& out = cache.outputs[i];
    out.resize(batch);
    auto input = [&](size_t k, int s) -> const Tensor& {
      return cache.outputs[graph_.IndexOf(n.inputs[k])][s];
    };
    switch (n.kind) {
      case NodeKind::kInput:
        for (int s = 0; s < batch; ++s) {
          if (images[s].channels() != n.out_channels) {
            throw ContractError("input image must have " + std::to_string(n.out_channels) + " channels");
          }
          out[s] = images[s];
        }
        break;
      case NodeKind::kConv:
      case NodeKind::kHead:
        for (int s = 0; s < batch; ++s) out[s] = ConvForward(n, p, input(0, s), scratch);
        break;
      case NodeKind::kNorm: {
        const int C = n.out_channels;
        std::vector<double> mean(C), var(C);
        if (mode == Mode::kTrain) {
          for (int c = 0; c < C; ++c) {
            double sum = 0.0, sq = 0.0;
            size_t count = 0;
            for (int s = 0; s < batch; ++s) {
              for (double v : input(0, s).channel(c)) {
                sum += v;
                sq += v * v;
              }
              count += input(0, s).plane_size();
            }
            mean[c] = sum / count;
            var[c] = std::max(0.0, sq / count - mean[c] * mean[c]);
          }
          cache.batch_mean[i] = mean;
          cache.batch_var[i] = var;
        } else {
          mean = p.running_mean;
          var = p.running_var;
        }
        for (int s = 0; s < batch; ++s) {
          out[s] = input(0, s);
          for (int c = 0; c < C; ++c) {
            const double scale = p.gamma[c] / std::sqrt(var[c] + kNormEpsilon);
            const double shift = p.beta[c] - mean[c] * scale;
            for (double& v : out[s].channel(c)) v = v * scale + shift;
          }
        }
        break;
      }
      case NodeKind::kActivation:
        for (int s = 0; s < batch; ++s) {
          out[s] = input(0, s);
          for (double& v : out[s].values()) v = v * Sigmoid(v);  // SiLU
        }
        break;
      case NodeKind::kAdd:
        for (int s = 0; s < batch; ++s) {
          out[s] = input(0, s);
          for (size_t k = 1; k < n.inputs.size(); ++k) AddInto(out[s], input(k, s));
        }
        break;
      case NodeKind::kConcat:
        for (int s = 0; s < batch; ++s) {
          const Tensor& first = input(0, s);
          Tensor y(n.out_channels, first.height(), first.width());
          size_t offset = 0;
          for (size_t k = 0; k < n.inputs.size(); ++k) {
            const Tensor& t = input(k, s);
            if (t.height() != y.height() || t.width() != y.width()) {
              throw ContractError("concat inputs differ in spatial size at " + n.id);
            }
            std::copy(t.values().begin(), t.values().end(), y.values().begin() + offset);
            offset += t.size();
          }
          out[s] = std::move(y);
        }
        break;
    }
    if (hook != nullptr && *hook) {
      for (int s = 0; s < batch; ++s) (*hook)(n.id, s, out[s]);
    }
  }
  return cache;
}

void Detector::UpdateRunningStats(const ForwardCache& cache) {
  if (cache.mode != Mode::kTrain) return;
  for (size_t i = 0; i < graph_.nodes().size(); ++i) {
    if (graph_.nodes()[i].kind != NodeKind::kNorm) continue;
    const GraphNode& n = graph_.nodes()[i];
    const Tensor& in = cache.outputs[graph_.IndexOf(n.inputs[0])][0];
    const double count = static_cast<double>(in.plane_size()) * cache.batch_size();
    const double unbias = count > 1 ? count / (count - 1) : 1.0;
    NodeParams& p = params_[i];
    for (int c = 0; c < n.out_channels; ++c) {
      p.running_mean[c] = (1 - kNormMomentum) * p.running_mean[c] + kNormMomentum * cache.batch_mean[i][c];
      p.running_var[c] = (1 - kNormMomentum) * p.running_var[c] + kNormMomentum * cache.batch_var[i][c] * unbias;
    }
  }
}

Prediction Detector::PredictionFor(const ForwardCache& cache, int sample) const {
  std::vector<HeadOutput> heads;
  for (const std::string& id : HeadIds()) {
    heads.push_back({graph_.node(id).cumulative_stride, cache.outputs[graph_.IndexOf(id)][sample]});
  }
  return Prediction(std::move(heads), num_classes_);
}

void Detector::Backward(const ForwardCache& cache,
                        const std::vector<std::vector<Tensor>>& head_grads,
                        std::vector<NodeGrads>* param_grads,
                        std::vector<std::vector<Tensor>>* node_grads) const {
  const auto& nodes = graph_.nodes();
  const int batch = cache.batch_size();
  std::vector<std::vector<Tensor>> grads(nodes.size(), std::vector<Tensor>(batch));
  const std::vector<std::string> heads = HeadIds();
  if (head_grads.size() != heads.size()) throw ContractError("Backward: head gradient count mismatch");
  for (size_t h = 0; h < heads.size(); ++h) {
    grads[graph_.IndexOf(heads[h])] = head_grads[h];
  }
  if (param_grads != nullptr && param_grads->size() != nodes.size()) {
    param_grads->assign(nodes.size(), NodeGrads{});
    for (size_t i = 0; i < nodes.size(); ++i) {
      (*param_grads)[i].weight.assign(params_[i].weight.size(), 0.0);
      (*param_grads)[i].bias.assign(params_[i].bias.size(), 0.0);
      (*param_grads)[i].gamma.assign(params_[i].gamma.size(), 0.0);
      (*param_grads)[i].beta.assign(params_[i].beta.size(), 0.0);
    }
  }
  std::vector<double> scratch;

  for (size_t ii = nodes.size(); ii-- > 0;) {
    const GraphNode& n = nodes[ii];
    const NodeParams& p = params_[ii];
    std::vector<Tensor>& dy = grads[ii];
    bool any = false;
    for (const Tensor& t : dy) any = any || t.size() > 0;
    if (!any || n.kind == NodeKind::kInput) continue;
    NodeGrads* pg = param_grads ? &(*param_grads)[ii] : nullptr;

    auto input_index = [&](size_t k) { return graph_.IndexOf(n.inputs[k]); };
    auto ensure = [&](int idx, int s) -> Tensor& {
      Tensor& g = grads[idx][s];
      if (g.size() == 0) {
        const Tensor& ref = cache.outputs[idx][s];
        g = Tensor(ref.channels(), ref.height(), ref.width());
      }
      return g;
    };

    switch (n.kind) {
      case NodeKind::kInput:
        break;
      case NodeKind::kConv:
      case NodeKind::kHead: {
        const int in = input_index(0);
        const bool need_dx = nodes[in].kind != NodeKind::kInput;
        for (int s = 0; s < batch; ++s) {
          if (dy[s].size() == 0) continue;
          Tensor* dx = need_dx ? &ensure(in, s) : nullptr;
          ConvBackward(n, p, cache.outputs[in][s], dy[s], pg, dx, scratch);
        }
        break;
      }
      case NodeKind::kNorm: {
        const int in = input_index(0);
        const int C = n.out_channels;
        if (cache.mode == Mode::kEval) {
          for (int c = 0; c < C; ++c) {
            const double inv_std = 1.0 / std::sqrt(p.running_var[c] + kNormEpsilon);
            for (int s = 0; s < batch; ++s) {
              if (dy[s].size() == 0) continue;
              Tensor& dx = ensure(in, s);
              auto g = dy[s].channel(c);
              auto x = cache.outputs[in][s].channel(c);
              auto d = dx.channel(c);
              for (size_t k = 0; k < g.size(); ++k) {
                const double xhat = (x[k] - p.running_mean[c]) * inv_std;
                if (pg) {
                  pg->gamma[c] += g[k] * xhat;
                  pg->beta[c] += g[k];
                }
                d[k] += g[k] * p.gamma[c] * inv_std;
              }
            }
          }
        } else {
          for (int c = 0; c < C; ++c) {
            const double mean = cache.batch_mean[ii][c];
            const double inv_std = 1.0 / std::sqrt(cache.batch_var[ii][c] + kNormEpsilon);
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            double count = 0.0;
            for (int s = 0; s < batch; ++s) {
              auto x = cache.outputs[in][s].channel(c);
              count += x.size();
              if (dy[s].size() == 0) continue;
              auto g = dy[s].channel(c);
              for (size_t k = 0; k < g.size(); ++k) {
                sum_dy += g[k];
                sum_dy_xhat += g[k] * (x[k] - mean) * inv_std;
              }
            }
            if (pg) {
              pg->gamma[c] += sum_dy_xhat;
              pg->beta[c] += sum_dy;
            }
            const double k0 = p.gamma[c] * inv_std / count;
            for (int s = 0; s < batch; ++s) {
              Tensor& dx = ensure(in, s);
              auto x = cache.outputs[in][s].channel(c);
              auto d = dx.channel(c);
              const bool has = dy[s].size() > 0;
              for (size_t k = 0; k < x.size(); ++k) {
                const double g = has ? dy[s].channel(c)[k] : 0.0;
                const double xhat = (x[k] - mean) * inv_std;
                d[k] += k0 * (count * g - sum_dy - xhat * sum_dy_xhat);
              }
            }
          }
        }
        break;
      }
      case NodeKind::kActivation: {
        const int in = input_index(0);
        for (int s = 0; s < batch; ++s) {
          if (dy[s].size() == 0) continue;
          Tensor& dx = ensure(in, s);
          const double* x = cache.outputs[in][s].data();
          const double* g = dy[s].data();
          double* d = dx.data();
          for (size_t k = 0; k < dx.size(); ++k) {
            const double sg = Sigmoid(x[k]);
            d[k] += g[k] * sg * (1.0 + x[k] * (1.0 - sg));
          }
        }
        break;
      }
      case NodeKind::kAdd:
        for (size_t k = 0; k < n.inputs.size(); ++k) {
          const int in = input_index(k);
          for (int s = 0; s < batch; ++s) {
            if (dy[s].size() == 0) continue;
            AddInto(ensure(in, s), dy[s]);
          }
        }
        break;
      case NodeKind::kConcat:
        for (int s = 0; s < batch; ++s) {
          if (dy[s].size() == 0) continue;
          size_t offset = 0;
          for (size_t k = 0; k < n.inputs.size(); ++k) {
            Tensor& dx = ensure(input_index(k), s);
            for (size_t e = 0; e < dx.size(); ++e) dx.data()[e] += dy[s].data()[offset + e];
            offset += dx.size();
          }
        }
        break;
    }
  }
  if (node_grads != nullptr) *node_grads = std::move(grads);
}

int64_t Detector::ParamCount() const {
  int64_t total = 0;
  for (const NodeParams& p : params_) {
    total += p.weight.size() + p.bias.size() + p.gamma.size() + p.beta.size();
  }
  return total;
}

std::vector<std::pair<std::string, int>> ToyDetectorBaseWidths() {
  return {{"stem", 16}, {"s2", 32}, {"s3a", 64}, {"s3b", 64}, {"s4", 64},
          {"p2", 32},   {"n8", 64}, {"h8", 64},  {"h16", 32}};
}

Detector BuildToyDetector(int num_classes, double width_multiplier, uint64_t seed) {
  if (num_classes < 1) throw ConfigError("num_classes must be >= 1");
  if (!(width_multiplier > 0)) throw ConfigError("width_multiplier must be > 0");
  std::unordered_map<std::string, int> width;
  for (const auto& [id, base] : ToyDetectorBaseWidths()) {
    width[id] = std::max(1, static_cast<int>(std::ceil(base * width_multiplier - 1e-9)));
  }

  ModelGraph g;
  GraphNode input;
  input.id = "input";
  input.kind = NodeKind::kInput;
  input.in_channels = input.out_channels = 3;
  g.AddNode(input);

  auto conv_block = [&](const std::string& id, const std::string& from, int kernel,
                        int stride, bool prunable) {
    GraphNode conv;
    conv.id = id;
    conv.kind = NodeKind::kConv;
    conv.inputs = {from};
    conv.out_channels = width.at(id);
    conv.kernel = kernel;
    conv.stride = stride;
    conv.prunable = prunable;
    g.AddNode(conv);
    GraphNode norm;
    norm.id = id + ".bn";
    norm.kind = NodeKind::kNorm;
    norm.inputs = {id};
    norm.out_channels = width.at(id);
    g.AddNode(norm);
    GraphNode act;
    act.id = id + ".act";
    act.kind = NodeKind::kActivation;
    act.inputs = {norm.id};
    act.out_channels = width.at(id);
    g.AddNode(act);
    return act.id;
  };

  // backbone
  const std::string stem = conv_block("stem", "input", 3, 2, /*prunable=*/false);
  const std::string s2 = conv_block("s2", stem, 3, 2, true);
  const std::string s3a = conv_block("s3a", s2, 3, 2, true);
  width["s3b"] = width["s3a"];
  const std::string s3b = conv_block("s3b", s3a, 3, 1, true);
  GraphNode add;
  add.id = "s3.add";
  add.kind = NodeKind::kAdd;
  add.inputs = {s3a, s3b};
  add.out_channels = width["s3a"];
  g.AddNode(add);
  const std::string s4 = conv_block("s4", add.id, 3, 2, true);

  // neck
  const std::string p2 = conv_block("p2", s2, 3, 2, true);
  GraphNode cat;
  cat.id = "neck.cat";
  cat.kind = NodeKind::kConcat;
  cat.inputs = {add.id, p2};
  g.AddNode(cat);
  const std::string n8 = conv_block("n8", cat.id, 1, 1, true);

  // heads
  const std::string h8 = conv_block("h8", n8, 3, 1, true);
  const std::string h16 = conv_block("h16", s4, 3, 1, true);
  for (const auto& [id, from] : {std::pair{"pred8", h8}, std::pair{"pred16", h16}}) {
    GraphNode head;
    head.id = id;
    head.kind = NodeKind::kHead;
    head.inputs = {from};
    head.out_channels = HeadChannels(num_classes);
    head.kernel = 1;
    head.bias = true;
    g.AddNode(head);
  }
  g.PropagateShapes();
  Detector model(std::move(g), num_classes);
  model.InitializeParams(seed);
  return model;
}

std::vector<std::string> DefaultTapLayers(const ModelGraph& graph) {
  std::vector<std::string> taps;
  for (const GraphNode& n : graph.nodes()) {
    if (n.kind != NodeKind::kConv) continue;
    try {
      graph.TapNodeFor(n.id);
      taps.push_back(n.id);
    } catch (const ConfigError&) {
    }
  }
  return taps;
}

TapResult ForwardWithTaps(const Detector& model, const DetectionSample& sample,
                          std::span<const std::string> tap_ids,
                          const LossWeights& weights, double loss_scale,
                          const ActivationHook* hook) {
  const ModelGraph& graph = model.graph();
  std::vector<int> tap_nodes;
  for (const std::string& id : tap_ids) tap_nodes.push_back(graph.IndexOf(graph.TapNodeFor(id)));

  const Tensor* image = &sample.image;
  ForwardCache cache = model.Forward(std::span<const Tensor>(image, 1), Mode::kEval, hook);
  TapResult result;
  result.prediction = model.PredictionFor(cache, 0);
  const auto geometry = model.HeadGeometries(sample.image.height(), sample.image.width());
  const TargetMap targets = AssignTargets(sample.boxes, geometry);
  std::vector<Tensor> raw_grads;
  result.loss = DetectionLoss(result.prediction, targets, weights,
                              tap_ids.empty() ? nullptr : &raw_grads, loss_scale);
  if (tap_ids.empty()) return result;

  std::vector<std::vector<Tensor>> head_grads;
  for (Tensor& g : raw_grads) head_grads.push_back({std::move(g)});
  std::vector<std::vector<Tensor>> node_grads;
  model.Backward(cache, head_grads, nullptr, &node_grads);
  for (size_t t = 0; t < tap_ids.size(); ++t) {
    FeatureTap tap;
    tap.node_id = tap_ids[t];
    tap.stride = graph.node(tap_ids[t]).cumulative_stride;
    tap.activation = cache.outputs[tap_nodes[t]][0];
    tap.gradient = node_grads[tap_nodes[t]][0];
    if (tap.gradient.size() == 0) {
      tap.gradient = Tensor(tap.activation.channels(), tap.activation.height(), tap.activation.width());
    }
    result.taps.push_back(std::move(tap));
  }
  return result;
}

LossBreakdown SampleLoss(const Detector& model, const DetectionSample& sample,
                         const LossWeights& weights, const ActivationHook* hook) {
  return ForwardWithTaps(model, sample, {}, weights, 1.0, hook).loss;
}

namespace {

constexpr char kMagic[] = "SALPRUNE-CKPT-1\n";

void WriteArray(std::ofstream& out, const std::vector<double>& v) {
  const uint64_t n = v.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
}

void ReadArray(std::ifstream& in, std::vector<double>& v, size_t expected, const std::string& what) {
  uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  if (!in || n != expected) throw IoError("checkpoint array size mismatch for " + what);
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw IoError("truncated checkpoint at " + what);
}

}  // namespace

void SaveCheckpoint(const std::string& path, const Detector& model,
                    const nlohmann::json& metadata) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  nlohmann::json header = {
      {"graph", model.graph().ToJson()},
      {"num_classes", model.num_classes()},
      {"metadata", metadata},
  };
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic) - 1);
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(len));
  for (const NodeParams& p : model.params()) {
    WriteArray(out, p.weight);
    WriteArray(out, p.bias);
    WriteArray(out, p.gamma);
    WriteArray(out, p.beta);
    WriteArray(out, p.running_mean);
    WriteArray(out, p.running_var);
  }
  if (!out) throw IoError("failed writing checkpoint: " + path);
  std::ofstream graph_out(path + ".graph.json");
  graph_out << model.graph().ToJson().dump(2) << "\n";
}

Detector LoadCheckpoint(const std::string& path, nlohmann::json* metadata) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint: " + path);
  char magic[sizeof(kMagic) - 1];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw IoError("not a salprune checkpoint: " + path);
  }
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header: " + path);
  const nlohmann::json header = nlohmann::json::parse(text);
  Detector model(ModelGraph::FromJson(header.at("graph")), header.at("num_classes").get<int>());
  for (size_t i = 0; i < model.params().size(); ++i) {
    NodeParams& p = model.params()[i];
    const std::string& id = model.graph().nodes()[i].id;
    ReadArray(in, p.weight, p.weight.size(), id + ".weight");
    ReadArray(in, p.bias, p.bias.size(), id + ".bias");
    ReadArray(in, p.gamma, p.gamma.size(), id + ".gamma");
    ReadArray(in, p.beta, p.beta.size(), id + ".beta");
    ReadArray(in, p.running_mean, p.running_mean.size(), id + ".running_mean");
    ReadArray(in, p.running_var, p.running_var.size(), id + ".running_var");
  }
  if (metadata != nullptr) *metadata = header.value("metadata", nlohmann::json::object());
  return model;
}

}  // namespace salprune
