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

#ifndef SALPRUNE_GRAPH_H_
#define SALPRUNE_GRAPH_H_

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"

namespace salprune {

enum class NodeKind { kInput, kConv, kNorm, kActivation, kAdd, kConcat, kHead };

const char* NodeKindName(NodeKind kind);
NodeKind NodeKindFromName(const std::string& name);

// One layer of the detector. For conv and head nodes, `kernel` and `stride`
// describe the convolution; every other kind has kernel = stride = 1.
struct GraphNode {
  std::string id;
  NodeKind kind = NodeKind::kConv;
  std::vector<std::string> inputs;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int cumulative_stride = 1;
  bool bias = false;
  // Only meaningful for conv nodes: whether the output width may change.
  bool prunable = false;

  bool operator==(const GraphNode&) const = default;
};

// Topology and widths of a detector. Nodes are stored in insertion order;
// Validate() checks that this order is topological.
class ModelGraph {
 public:
  void AddNode(GraphNode node);

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  std::vector<GraphNode>& mutable_nodes() { return nodes_; }
  const GraphNode& node(const std::string& id) const;
  int IndexOf(const std::string& id) const;
  bool Contains(const std::string& id) const;

  // (producer, consumer) pairs.
  std::vector<std::pair<std::string, std::string>> Edges() const;
  std::vector<std::string> Consumers(const std::string& id) const;
  std::vector<std::string> NodesOfKind(NodeKind kind) const;

  // For a conv node followed by norm -> activation, the id of that
  // activation node. Throws ConfigError for anything else.
  std::string TapNodeFor(const std::string& conv_id) const;

  // Recomputes cumulative strides and checks: inputs exist, acyclic in
  // storage order, channel counts agree along every edge, add/concat inputs
  // share a stride, conv strides are powers of two. Throws ContractError.
  void Validate() const;

  // Recomputes in/out widths and cumulative strides from conv widths.
  void PropagateShapes();

  nlohmann::json ToJson() const;
  static ModelGraph FromJson(const nlohmann::json& j);

  bool operator==(const ModelGraph&) const = default;

 private:
  void Reindex();

  std::vector<GraphNode> nodes_;
  std::unordered_map<std::string, int> index_;
};

}  // namespace salprune

#endif  // SALPRUNE_GRAPH_H_
