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

#ifndef SALPRUNE_PRUNER_H_
#define SALPRUNE_PRUNER_H_

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "salprune/detector.h"
#include "salprune/graph.h"
#include "salprune/saliency.h"

namespace salprune {

// Conv layers whose output channels are coupled (through add junctions) and
// must be pruned with one shared index set.
struct PruningGroup {
  int id = 0;
  std::vector<std::string> members;
  int width = 0;
  bool prunable = true;
};

// Union-find over conv/head outputs through norm/activation chains and add
// junctions. Concat junctions keep their sources' groups. Groups containing
// an unprunable conv or a head are unprunable. Throws ContractError on an
// invalid graph.
std::vector<PruningGroup> BuildGroups(const ModelGraph& graph);

// For every node output channel, the (group id, channel) that owns it. The
// network input has group -1.
struct ChannelSource {
  int group = -1;
  int channel = 0;
};
std::vector<std::vector<ChannelSource>> ChannelProvenance(
    const ModelGraph& graph, const std::vector<PruningGroup>& groups);

struct GroupPlan {
  int group = 0;
  std::vector<std::string> members;
  int width = 0;
  std::vector<int> removed;  // ascending importance; ties by channel index
  int keep = 0;
};

struct PruningPlan {
  double rate = 0.0;
  int input_h = 0;
  int input_w = 0;
  std::vector<GroupPlan> groups;  // prunable groups only
  int64_t params_before = 0;
  int64_t params_after = 0;
  int64_t flops_before = 0;
  int64_t flops_after = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

// Removes floor(rate * width) lowest-scoring channels per prunable group
// (group score = elementwise sum of member tables), keeping at least one.
// Throws ConfigError for rate outside [0,1) and for a prunable layer
// without a table.
PruningPlan MakePlan(const ImportanceTables& tables, const ModelGraph& graph,
                     double rate, int input_h, int input_w,
                     const nlohmann::json& metadata = nlohmann::json::object());

// Graph widths after removing the plan's channels.
ModelGraph PrunedGraph(const ModelGraph& graph, const PruningPlan& plan);

// Throws ContractError if the plan does not describe `graph`.
void ValidatePlan(const ModelGraph& graph, const PruningPlan& plan);

// Returns a pruned copy: removed filters, their norm entries and every
// consumer's matching input slices are dropped. Validates first; the input
// model is never modified.
Detector ApplyPlan(const Detector& model, const PruningPlan& plan);

// Zeroes the filters and norm affine parameters of the given channels in
// every member of the group (the "dead channel" construction).
void ZeroGroupChannels(Detector& model, const PruningGroup& group,
                       const std::vector<int>& channels);

nlohmann::json PlanToJson(const PruningPlan& plan);
PruningPlan PlanFromJson(const nlohmann::json& j);

}  // namespace salprune

#endif  // SALPRUNE_PRUNER_H_
