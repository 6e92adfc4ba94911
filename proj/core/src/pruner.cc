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

#include "salprune/pruner.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "salprune/errors.h"
#include "salprune/metrics.h"

namespace salprune {
namespace {

class DisjointSets {
 public:
  explicit DisjointSets(int n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }
  int Find(int x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }
  void Union(int a, int b) {
    a = Find(a);
    b = Find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<int> parent_;
};

bool IsConvLike(const GraphNode& n) {
  return n.kind == NodeKind::kConv || n.kind == NodeKind::kHead;
}

// Group id of every conv/head node, indexed by node index (-1 otherwise).
std::vector<int> GroupOfNode(const ModelGraph& graph, const std::vector<PruningGroup>& groups) {
  std::vector<int> out(graph.nodes().size(), -1);
  for (const PruningGroup& g : groups) {
    for (const std::string& m : g.members) out[graph.IndexOf(m)] = g.id;
  }
  return out;
}

// Kept output channel indices of every node.
std::vector<std::vector<int>> KeptChannels(const ModelGraph& graph,
                                           const std::vector<PruningGroup>& groups,
                                           const PruningPlan& plan) {
  std::vector<std::set<int>> removed(groups.size());
  for (const GroupPlan& gp : plan.groups) {
    removed[gp.group].insert(gp.removed.begin(), gp.removed.end());
  }
  const auto provenance = ChannelProvenance(graph, groups);
  std::vector<std::vector<int>> kept(graph.nodes().size());
  for (size_t i = 0; i < graph.nodes().size(); ++i) {
    for (size_t c = 0; c < provenance[i].size(); ++c) {
      const ChannelSource& src = provenance[i][c];
      if (src.group < 0 || !removed[src.group].count(src.channel)) {
        kept[i].push_back(static_cast<int>(c));
      }
    }
  }
  return kept;
}

}  // namespace

std::vector<PruningGroup> BuildGroups(const ModelGraph& graph) {
  graph.Validate();
  const auto& nodes = graph.nodes();
  const int n = static_cast<int>(nodes.size());
  DisjointSets sets(n);
  // source[i]: conv-like node index whose channels node i carries, -1 for
  // the network input, -2 for mixed (concat) outputs
  std::vector<int> source(n, -1);
  for (int i = 0; i < n; ++i) {
    const GraphNode& node = nodes[i];
    switch (node.kind) {
      case NodeKind::kInput:
        source[i] = -1;
        break;
      case NodeKind::kConv:
      case NodeKind::kHead:
        source[i] = i;
        break;
      case NodeKind::kNorm:
      case NodeKind::kActivation:
        source[i] = source[graph.IndexOf(node.inputs[0])];
        break;
      case NodeKind::kConcat:
        source[i] = -2;
        break;
      case NodeKind::kAdd: {
        int first = -3;
        for (const std::string& in : node.inputs) {
          const int s = source[graph.IndexOf(in)];
          if (s < 0) {
            throw ContractError("add junction " + node.id +
                                " must be fed by conv outputs (through norm/activation)");
          }
          if (first == -3) {
            first = s;
          } else {
            sets.Union(first, s);
          }
        }
        source[i] = first;
        break;
      }
    }
  }

  std::vector<PruningGroup> groups;
  std::vector<int> group_of_root(n, -1);
  for (int i = 0; i < n; ++i) {
    if (!IsConvLike(nodes[i])) continue;
    const int root = sets.Find(i);
    if (group_of_root[root] < 0) {
      group_of_root[root] = static_cast<int>(groups.size());
      PruningGroup g;
      g.id = static_cast<int>(groups.size());
      g.width = nodes[i].out_channels;
      groups.push_back(g);
    }
    PruningGroup& g = groups[group_of_root[root]];
    g.members.push_back(nodes[i].id);
    if (nodes[i].out_channels != g.width) {
      throw ContractError("coupled layers differ in width at " + nodes[i].id);
    }
    if (nodes[i].kind == NodeKind::kHead || !nodes[i].prunable) g.prunable = false;
  }
  return groups;
}

std::vector<std::vector<ChannelSource>> ChannelProvenance(
    const ModelGraph& graph, const std::vector<PruningGroup>& groups) {
  const std::vector<int> group_of = GroupOfNode(graph, groups);
  std::vector<std::vector<ChannelSource>> prov(graph.nodes().size());
  for (size_t i = 0; i < graph.nodes().size(); ++i) {
    const GraphNode& node = graph.nodes()[i];
    auto& out = prov[i];
    switch (node.kind) {
      case NodeKind::kInput:
        for (int c = 0; c < node.out_channels; ++c) out.push_back({-1, c});
        break;
      case NodeKind::kConv:
      case NodeKind::kHead:
        for (int c = 0; c < node.out_channels; ++c) out.push_back({group_of[i], c});
        break;
      case NodeKind::kNorm:
      case NodeKind::kActivation:
      case NodeKind::kAdd:
        out = prov[graph.IndexOf(node.inputs[0])];
        break;
      case NodeKind::kConcat:
        for (const std::string& in : node.inputs) {
          const auto& p = prov[graph.IndexOf(in)];
          out.insert(out.end(), p.begin(), p.end());
        }
        break;
    }
  }
  return prov;
}

PruningPlan MakePlan(const ImportanceTables& tables, const ModelGraph& graph,
                     double rate, int input_h, int input_w,
                     const nlohmann::json& metadata) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("pruning rate must be in [0, 1)");
  const std::vector<PruningGroup> groups = BuildGroups(graph);
  PruningPlan plan;
  plan.rate = rate;
  plan.input_h = input_h;
  plan.input_w = input_w;
  plan.metadata = metadata;
  for (const PruningGroup& g : groups) {
    if (!g.prunable) continue;
    std::vector<double> score(g.width, 0.0);
    for (const std::string& m : g.members) {
      auto it = tables.find(m);
      if (it == tables.end()) throw ConfigError("no importance table for prunable layer " + m);
      if (static_cast<int>(it->second.scores.size()) != g.width) {
        throw ConfigError("importance table width mismatch for layer " + m);
      }
      for (int c = 0; c < g.width; ++c) score[c] += it->second.scores[c];
    }
    for (double v : score) {
      if (!std::isfinite(v)) throw ConfigError("non-finite importance in group of " + g.members[0]);
    }
    std::vector<int> order(g.width);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[a] < score[b]; });
    const int n_remove = std::min(g.width - 1, static_cast<int>(std::floor(rate * g.width + 1e-9)));
    GroupPlan gp;
    gp.group = g.id;
    gp.members = g.members;
    gp.width = g.width;
    gp.removed.assign(order.begin(), order.begin() + std::max(0, n_remove));
    gp.keep = g.width - static_cast<int>(gp.removed.size());
    plan.groups.push_back(std::move(gp));
  }
  const CostReport before = CountCost(graph, input_h, input_w);
  const CostReport after = CountCost(PrunedGraph(graph, plan), input_h, input_w);
  plan.params_before = before.params;
  plan.flops_before = before.flops;
  plan.params_after = after.params;
  plan.flops_after = after.flops;
  return plan;
}

void ValidatePlan(const ModelGraph& graph, const PruningPlan& plan) {
  const std::vector<PruningGroup> groups = BuildGroups(graph);
  std::set<int> seen;
  for (const GroupPlan& gp : plan.groups) {
    if (gp.group < 0 || gp.group >= static_cast<int>(groups.size())) {
      throw ContractError("plan refers to unknown group " + std::to_string(gp.group));
    }
    const PruningGroup& g = groups[gp.group];
    if (!seen.insert(gp.group).second) throw ContractError("group listed twice in plan");
    if (!g.prunable) throw ContractError("plan prunes unprunable group of " + g.members[0]);
    if (gp.members != g.members || gp.width != g.width) {
      throw ContractError("plan group " + std::to_string(gp.group) + " does not match the graph");
    }
    std::set<int> unique(gp.removed.begin(), gp.removed.end());
    if (unique.size() != gp.removed.size()) throw ContractError("duplicate removal index in plan");
    for (int c : gp.removed) {
      if (c < 0 || c >= g.width) throw ContractError("removal index out of range in plan");
    }
    if (gp.keep != g.width - static_cast<int>(gp.removed.size()) || gp.keep < 1) {
      throw ContractError("plan keep-count inconsistent for group of " + g.members[0]);
    }
  }
}

ModelGraph PrunedGraph(const ModelGraph& graph, const PruningPlan& plan) {
  ValidatePlan(graph, plan);
  const std::vector<PruningGroup> groups = BuildGroups(graph);
  ModelGraph pruned = graph;
  for (const GroupPlan& gp : plan.groups) {
    for (const std::string& m : gp.members) {
      pruned.mutable_nodes()[pruned.IndexOf(m)].out_channels = gp.keep;
    }
  }
  pruned.PropagateShapes();
  pruned.Validate();
  return pruned;
}

Detector ApplyPlan(const Detector& model, const PruningPlan& plan) {
  const ModelGraph& graph = model.graph();
  ValidatePlan(graph, plan);
  const std::vector<PruningGroup> groups = BuildGroups(graph);
  const auto kept = KeptChannels(graph, groups, plan);
  Detector pruned(PrunedGraph(graph, plan), model.num_classes());

  for (size_t i = 0; i < graph.nodes().size(); ++i) {
    const GraphNode& n = graph.nodes()[i];
    const NodeParams& src = model.params()[i];
    NodeParams& dst = pruned.params()[i];
    const std::vector<int>& out_keep = kept[i];
    if (IsConvLike(n)) {
      const std::vector<int>& in_keep = kept[graph.IndexOf(n.inputs[0])];
      const size_t kk = static_cast<size_t>(n.kernel) * n.kernel;
      dst.weight.clear();
      for (int o : out_keep) {
        for (int c : in_keep) {
          const size_t base = (static_cast<size_t>(o) * n.in_channels + c) * kk;
          dst.weight.insert(dst.weight.end(), src.weight.begin() + base,
                            src.weight.begin() + base + kk);
        }
      }
      dst.bias.clear();
      if (n.bias) {
        for (int o : out_keep) dst.bias.push_back(src.bias[o]);
      }
    } else if (n.kind == NodeKind::kNorm) {
      dst.gamma.clear();
      dst.beta.clear();
      dst.running_mean.clear();
      dst.running_var.clear();
      for (int c : out_keep) {
        dst.gamma.push_back(src.gamma[c]);
        dst.beta.push_back(src.beta[c]);
        dst.running_mean.push_back(src.running_mean[c]);
        dst.running_var.push_back(src.running_var[c]);
      }
    }
  }
  return pruned;
}

void ZeroGroupChannels(Detector& model, const PruningGroup& group,
                       const std::vector<int>& channels) {
  const ModelGraph& graph = model.graph();
  for (const std::string& m : group.members) {
    const GraphNode& conv = graph.node(m);
    NodeParams& p = model.params(m);
    const size_t filter = static_cast<size_t>(conv.in_channels) * conv.kernel * conv.kernel;
    for (int c : channels) {
      std::fill(p.weight.begin() + c * filter, p.weight.begin() + (c + 1) * filter, 0.0);
      if (!p.bias.empty()) p.bias[c] = 0.0;
    }
    for (const std::string& consumer : graph.Consumers(m)) {
      if (graph.node(consumer).kind != NodeKind::kNorm) continue;
      NodeParams& norm = model.params(consumer);
      for (int c : channels) {
        norm.gamma[c] = 0.0;
        norm.beta[c] = 0.0;
      }
    }
  }
}

nlohmann::json PlanToJson(const PruningPlan& plan) {
  nlohmann::json groups = nlohmann::json::array();
  for (const GroupPlan& g : plan.groups) {
    groups.push_back({{"group", g.group},
                      {"members", g.members},
                      {"width", g.width},
                      {"remove", g.removed},
                      {"keep", g.keep}});
  }
  return {
      {"rate", plan.rate},
      {"input_size", {plan.input_h, plan.input_w}},
      {"groups", groups},
      {"predicted",
       {{"params_before", plan.params_before},
        {"params_after", plan.params_after},
        {"flops_before", plan.flops_before},
        {"flops_after", plan.flops_after}}},
      {"metadata", plan.metadata},
  };
}

PruningPlan PlanFromJson(const nlohmann::json& j) {
  PruningPlan plan;
  plan.rate = j.at("rate").get<double>();
  plan.input_h = j.at("input_size").at(0).get<int>();
  plan.input_w = j.at("input_size").at(1).get<int>();
  for (const auto& e : j.at("groups")) {
    GroupPlan g;
    g.group = e.at("group").get<int>();
    g.members = e.at("members").get<std::vector<std::string>>();
    g.width = e.at("width").get<int>();
    g.removed = e.at("remove").get<std::vector<int>>();
    g.keep = e.at("keep").get<int>();
    plan.groups.push_back(std::move(g));
  }
  const auto& p = j.at("predicted");
  plan.params_before = p.at("params_before").get<int64_t>();
  plan.params_after = p.at("params_after").get<int64_t>();
  plan.flops_before = p.at("flops_before").get<int64_t>();
  plan.flops_after = p.at("flops_after").get<int64_t>();
  plan.metadata = j.value("metadata", nlohmann::json::object());
  return plan;
}

}  // namespace salprune
