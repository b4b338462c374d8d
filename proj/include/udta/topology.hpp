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

// Structural view of a model graph: node kinds, component tags, per-sample
// shapes and parameter counts. Everything in this header is independent of the
// scalar type, so the cost model and the required-set analysis run on it
// without touching tensor data.

#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "udta/tensor.hpp"

namespace udta {

enum class Component : std::uint8_t { Backbone, Encoder, Adapter, Patch, Classifier, AuxDecoder };

inline constexpr Component kAllComponents[] = {Component::Backbone,   Component::Encoder,
                                               Component::Adapter,    Component::Patch,
                                               Component::Classifier, Component::AuxDecoder};

std::string_view to_string(Component component);
Component component_from_string(std::string_view name);

enum class OpKind : std::uint8_t {
  Input,
  Conv3x3,
  Conv1x1,
  Depthwise3x3,
  BatchNorm,
  ReLU6,
  Add,
  Concat,
  GlobalAvgPool,
  ChannelAffine,
  Linear,
  CrossEntropyLoss,
  MseLoss,
};

std::string_view to_string(OpKind op);

enum class NodeId : std::uint32_t {};

constexpr std::size_t index_of(NodeId id) { return static_cast<std::size_t>(id); }
constexpr NodeId node_id(std::size_t index) { return static_cast<NodeId>(index); }

using NodeSet = std::set<NodeId>;

struct NodeDesc {
  NodeId id{};
  std::string name;
  OpKind op = OpKind::Input;
  std::vector<NodeId> inputs;
  Component component = Component::Backbone;
  int stride = 1;
  Shape out_shape;              // per sample, n == 1
  std::size_t param_count = 0;  // trainable scalars (weights, biases, BN affine)
  bool trainable = false;

  bool has_params() const { return param_count > 0; }
  bool is_loss() const { return op == OpKind::CrossEntropyLoss || op == OpKind::MseLoss; }
};

class GraphTopology {
 public:
  std::span<const NodeDesc> nodes() const { return descs_; }
  const NodeDesc& desc(NodeId id) const;
  NodeDesc& desc(NodeId id);
  std::size_t size() const { return descs_.size(); }

  // Node lookup by exact name; throws SpecError when absent.
  NodeId find(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<NodeId> consumers(NodeId id) const;
  NodeSet select(const std::function<bool(const NodeDesc&)>& pred) const;
  NodeSet nodes_of(Component component) const;

  // Marks parameter-holding nodes of the given components trainable and
  // everything else frozen. Returns the resulting trainable set.
  NodeSet set_trainable_components(std::span<const Component> components);
  NodeSet trainable_set() const;

  // Throws InvariantError if any Adapter or Encoder node feeds a Backbone node.
  void verify_unidirectional() const;

 protected:
  std::vector<NodeDesc> descs_;
};

// Minimal set of nodes whose output gradient is needed to obtain the parameter
// gradients of `trainable`: every node lying on a path from a trainable node
// to `loss`. Throws SpecError if a trainable node holds no parameters or cannot
// reach the loss.
NodeSet compute_required_set(const GraphTopology& graph, NodeId loss, const NodeSet& trainable);

}  // namespace udta
