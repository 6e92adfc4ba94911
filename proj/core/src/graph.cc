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

#include "salprune/graph.h"

#include <algorithm>
#include <queue>

#include "salprune/errors.h"

namespace salprune {
namespace {

bool IsPowerOfTwo(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace

const char* NodeKindName(NodeKind kind) {
  switch (kind) {
    case NodeKind::kInput: return "input";
    case NodeKind::kConv: return "conv";
    case NodeKind::kNorm: return "norm";
    case NodeKind::kActivation: return "activation";
    case NodeKind::kAdd: return "add";
    case NodeKind::kConcat: return "concat";
    case NodeKind::kHead: return "head";
  }
  return "?";
}

NodeKind NodeKindFromName(const std::string& name) {
  for (NodeKind k : {NodeKind::kInput, NodeKind::kConv, NodeKind::kNorm,
                     NodeKind::kActivation, NodeKind::kAdd, NodeKind::kConcat,
                     NodeKind::kHead}) {
    if (name == NodeKindName(k)) return k;
  }
  throw ContractError("unknown node kind: " + name);
}

void ModelGraph::AddNode(GraphNode node) {
  if (index_.count(node.id)) throw ContractError("duplicate node id: " + node.id);
  index_[node.id] = static_cast<int>(nodes_.size());
  nodes_.push_back(std::move(node));
}

void ModelGraph::Reindex() {
  index_.clear();
  for (size_t i = 0; i < nodes_.size(); ++i) index_[nodes_[i].id] = static_cast<int>(i);
}

const GraphNode& ModelGraph::node(const std::string& id) const {
  return nodes_[IndexOf(id)];
}

int ModelGraph::IndexOf(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw ContractError("no such node: " + id);
  return it->second;
}

bool ModelGraph::Contains(const std::string& id) const { return index_.count(id) > 0; }

std::vector<std::pair<std::string, std::string>> ModelGraph::Edges() const {
  std::vector<std::pair<std::string, std::string>> edges;
  for (const GraphNode& n : nodes_) {
    for (const std::string& in : n.inputs) edges.emplace_back(in, n.id);
  }
  return edges;
}

std::vector<std::string> ModelGraph::Consumers(const std::string& id) const {
  std::vector<std::string> out;
  for (const GraphNode& n : nodes_) {
    if (std::find(n.inputs.begin(), n.inputs.end(), id) != n.inputs.end()) {
      out.push_back(n.id);
    }
  }
  return out;
}

std::vector<std::string> ModelGraph::NodesOfKind(NodeKind kind) const {
  std::vector<std::string> out;
  for (const GraphNode& n : nodes_) {
    if (n.kind == kind) out.push_back(n.id);
  }
  return out;
}

std::string ModelGraph::TapNodeFor(const std::string& conv_id) const {
  if (!Contains(conv_id)) throw ConfigError("tap refers to unknown node: " + conv_id);
  const GraphNode& conv = node(conv_id);
  if (conv.kind != NodeKind::kConv) {
    throw ConfigError("tap must name a conv layer, got " +
                      std::string(NodeKindName(conv.kind)) + " node " + conv_id);
  }
  auto single_consumer_of_kind = [&](const std::string& id, NodeKind kind) {
    std::vector<std::string> c = Consumers(id);
    for (const std::string& cid : c) {
      if (node(cid).kind == kind) return cid;
    }
    throw ConfigError("conv " + conv_id + " is not followed by norm and activation");
  };
  const std::string norm = single_consumer_of_kind(conv_id, NodeKind::kNorm);
  return single_consumer_of_kind(norm, NodeKind::kActivation);
}

void ModelGraph::PropagateShapes() {
  for (GraphNode& n : nodes_) {
    std::vector<const GraphNode*> ins;
    for (const std::string& id : n.inputs) {
      auto it = index_.find(id);
      if (it == index_.end()) throw ContractError("node " + n.id + " has unknown input " + id);
      ins.push_back(&nodes_[it->second]);
    }
    switch (n.kind) {
      case NodeKind::kInput:
        n.in_channels = n.out_channels;
        n.cumulative_stride = 1;
        break;
      case NodeKind::kConv:
      case NodeKind::kHead:
        n.in_channels = ins.at(0)->out_channels;
        n.cumulative_stride = ins.at(0)->cumulative_stride * n.stride;
        break;
      case NodeKind::kNorm:
      case NodeKind::kActivation:
        n.in_channels = n.out_channels = ins.at(0)->out_channels;
        n.cumulative_stride = ins.at(0)->cumulative_stride;
        break;
      case NodeKind::kAdd:
        n.in_channels = n.out_channels = ins.at(0)->out_channels;
        n.cumulative_stride = ins.at(0)->cumulative_stride;
        break;
      case NodeKind::kConcat: {
        int sum = 0;
        for (const GraphNode* in : ins) sum += in->out_channels;
        n.in_channels = n.out_channels = sum;
        n.cumulative_stride = ins.at(0)->cumulative_stride;
        break;
      }
    }
  }
}

void ModelGraph::Validate() const {
  // Kahn's algorithm over the declared edges, independent of storage order.
  std::unordered_map<std::string, int> indegree;
  for (const GraphNode& n : nodes_) indegree[n.id] = 0;
  for (const GraphNode& n : nodes_) {
    for (const std::string& in : n.inputs) {
      if (!indegree.count(in)) throw ContractError("node " + n.id + " has unknown input " + in);
    }
    indegree[n.id] = static_cast<int>(n.inputs.size());
  }
  std::queue<std::string> ready;
  for (const GraphNode& n : nodes_) {
    if (indegree[n.id] == 0) ready.push(n.id);
  }
  size_t visited = 0;
  while (!ready.empty()) {
    const std::string id = ready.front();
    ready.pop();
    ++visited;
    for (const GraphNode& n : nodes_) {
      for (const std::string& in : n.inputs) {
        if (in == id && --indegree[n.id] == 0) ready.push(n.id);
      }
    }
  }
  if (visited != nodes_.size()) throw ContractError("model graph contains a cycle");

  for (size_t i = 0; i < nodes_.size(); ++i) {
    const GraphNode& n = nodes_[i];
    for (const std::string& in : n.inputs) {
      if (IndexOf(in) >= static_cast<int>(i)) {
        throw ContractError("node " + n.id + " is stored before its input " + in);
      }
    }
    auto in_node = [&](size_t k) -> const GraphNode& { return node(n.inputs.at(k)); };
    auto fail = [&](const std::string& what) {
      throw ContractError("node " + n.id + ": " + what);
    };
    switch (n.kind) {
      case NodeKind::kInput:
        if (!n.inputs.empty()) fail("input node cannot have inputs");
        if (n.cumulative_stride != 1) fail("input stride must be 1");
        break;
      case NodeKind::kConv:
      case NodeKind::kHead: {
        if (n.inputs.size() != 1) fail("conv takes exactly one input");
        if (in_node(0).out_channels != n.in_channels) fail("input width mismatch");
        if (n.kernel < 1 || n.kernel % 2 == 0) fail("kernel must be odd and positive");
        if (!IsPowerOfTwo(n.stride)) fail("conv stride must be a power of two");
        if (n.cumulative_stride != in_node(0).cumulative_stride * n.stride) {
          fail("cumulative stride inconsistent");
        }
        if (!IsPowerOfTwo(n.cumulative_stride)) fail("cumulative stride must be a power of two");
        if (n.out_channels < 1) fail("conv needs at least one output channel");
        break;
      }
      case NodeKind::kNorm:
      case NodeKind::kActivation:
        if (n.inputs.size() != 1) fail("expects exactly one input");
        if (in_node(0).out_channels != n.in_channels || n.in_channels != n.out_channels) {
          fail("width mismatch");
        }
        if (n.cumulative_stride != in_node(0).cumulative_stride) fail("stride mismatch");
        break;
      case NodeKind::kAdd:
        if (n.inputs.size() < 2) fail("add needs at least two inputs");
        for (size_t k = 0; k < n.inputs.size(); ++k) {
          if (in_node(k).out_channels != n.out_channels) fail("add inputs must have equal widths");
          if (in_node(k).cumulative_stride != n.cumulative_stride) fail("add inputs must share a stride");
        }
        break;
      case NodeKind::kConcat: {
        if (n.inputs.size() < 2) fail("concat needs at least two inputs");
        int sum = 0;
        for (size_t k = 0; k < n.inputs.size(); ++k) {
          sum += in_node(k).out_channels;
          if (in_node(k).cumulative_stride != n.cumulative_stride) fail("concat inputs must share a stride");
        }
        if (sum != n.out_channels || n.in_channels != n.out_channels) fail("concat width must be the input sum");
        break;
      }
    }
  }
}

nlohmann::json ModelGraph::ToJson() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const GraphNode& n : nodes_) {
    nodes.push_back({
        {"id", n.id},
        {"kind", NodeKindName(n.kind)},
        {"inputs", n.inputs},
        {"in_channels", n.in_channels},
        {"out_channels", n.out_channels},
        {"kernel", n.kernel},
        {"stride", n.stride},
        {"cumulative_stride", n.cumulative_stride},
        {"bias", n.bias},
        {"prunable", n.prunable},
    });
  }
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [from, to] : Edges()) edges.push_back({from, to});
  return {{"nodes", nodes}, {"edges", edges}};
}

ModelGraph ModelGraph::FromJson(const nlohmann::json& j) {
  ModelGraph g;
  for (const auto& e : j.at("nodes")) {
    GraphNode n;
    n.id = e.at("id").get<std::string>();
    n.kind = NodeKindFromName(e.at("kind").get<std::string>());
    n.inputs = e.at("inputs").get<std::vector<std::string>>();
    n.in_channels = e.at("in_channels").get<int>();
    n.out_channels = e.at("out_channels").get<int>();
    n.kernel = e.value("kernel", 1);
    n.stride = e.value("stride", 1);
    n.cumulative_stride = e.value("cumulative_stride", 1);
    n.bias = e.value("bias", false);
    n.prunable = e.value("prunable", false);
    g.AddNode(std::move(n));
  }
  return g;
}

}  // namespace salprune
