/* Copyright 2026 The UDTA Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

// Static FLOPs / parameter accounting over a graph topology. Nothing here
// touches tensor data.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "udta/architectures.hpp"
#include "udta/cost_model.hpp"
#include "udta/topology.hpp"

namespace udta {

struct CostBreakdown {
  std::vector<std::uint64_t> per_node;  // indexed by node id, batch applied
  std::uint64_t total = 0;

  std::uint64_t of(const GraphTopology& graph, Component component) const;
};

CostBreakdown count_forward(const GraphTopology& graph, const CostModel& cost = {});

// Nodes outside the required set of (loss, trainable) cost 0.
CostBreakdown count_backward(const GraphTopology& graph, NodeId loss, const NodeSet& trainable,
                             const CostModel& cost = {});

std::map<Component, std::uint64_t> count_params(const GraphTopology& graph, const NodeSet& trainable);
std::uint64_t total_params(const GraphTopology& graph, const NodeSet& trainable);

struct ComponentCost {
  std::uint64_t f_flops = 0;
  std::uint64_t b_flops = 0;
  std::uint64_t trainable_params = 0;
};

struct ProfileReport {
  std::string label;
  std::map<Component, ComponentCost> components;  // components present in the graph
  ComponentCost total;
};

ProfileReport profile(std::string label, const GraphTopology& graph, NodeId loss, const NodeSet& trainable,
                      const CostModel& cost = {});

struct ProfileConfig {
  std::string label;
  const GraphTopology* graph = nullptr;
  NodeId loss{};
  NodeSet trainable;
};

struct ComparisonRow {
  ProfileReport report;
  double f_flops_ratio = 1.0;
  double b_flops_ratio = 1.0;
  double params_ratio = 1.0;
};

struct Comparison {
  std::string reference;
  std::vector<ComparisonRow> rows;

  const ComparisonRow& row(std::string_view label) const;

  // label,component,f_flops,b_flops,trainable_params with one "total" line per config.
  std::string to_csv() const;
  nlohmann::json to_json() const;
};

// Ratios are taken against the row labelled `reference` (first row if empty).
Comparison compare_configs(std::span<const ProfileConfig> configs, const CostModel& cost = {},
                           std::string reference = {});

// Labels of the standard comparison in display order.
inline constexpr const char* kStandardConfigs[] = {"scratch", "fullft", "topft", "model_patch",
                                                   "residual_adapter", "udta"};

// Builds the graphs for the named configs at `spec` (no random init) and keeps
// them alive alongside the comparison.
struct ProfileSuite {
  std::vector<Model> models;
  std::vector<ProfileConfig> configs;
};
ProfileSuite standard_suite(const ModelSpec& spec, std::span<const std::string> labels);
// One UDTA model per value of B or u.
ProfileSuite sweep_suite(const ModelSpec& spec, char variable, std::span<const int> values);

}  // namespace udta
