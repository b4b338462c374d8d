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

#include "udta/topology.hpp"

#include <algorithm>
#include <array>

#include "udta/errors.hpp"

namespace udta {

namespace {
constexpr std::array<std::string_view, 6> kComponentNames = {"Backbone",   "Encoder",
                                                             "Adapter",    "Patch",
                                                             "Classifier", "AuxDecoder"};
}

std::string_view to_string(Component component) { return kComponentNames[static_cast<std::size_t>(component)]; }

Component component_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kComponentNames.size(); ++i) {
    if (kComponentNames[i] == name) return static_cast<Component>(i);
  }
  throw SpecError("unknown component '" + std::string(name) + "'");
}

std::string_view to_string(OpKind op) {
  switch (op) {
    case OpKind::Input: return "input";
    case OpKind::Conv3x3: return "conv3x3";
    case OpKind::Conv1x1: return "conv1x1";
    case OpKind::Depthwise3x3: return "depthwise3x3";
    case OpKind::BatchNorm: return "batchnorm";
    case OpKind::ReLU6: return "relu6";
    case OpKind::Add: return "add";
    case OpKind::Concat: return "concat";
    case OpKind::GlobalAvgPool: return "global_avgpool";
    case OpKind::ChannelAffine: return "channel_affine";
    case OpKind::Linear: return "linear";
    case OpKind::CrossEntropyLoss: return "cross_entropy";
    case OpKind::MseLoss: return "mse";
  }
  return "?";
}

const NodeDesc& GraphTopology::desc(NodeId id) const {
  if (index_of(id) >= descs_.size()) throw SpecError("node id " + std::to_string(index_of(id)) + " out of range");
  return descs_[index_of(id)];
}

NodeDesc& GraphTopology::desc(NodeId id) {
  if (index_of(id) >= descs_.size()) throw SpecError("node id " + std::to_string(index_of(id)) + " out of range");
  return descs_[index_of(id)];
}

NodeId GraphTopology::find(std::string_view name) const {
  for (const NodeDesc& d : descs_) {
    if (d.name == name) return d.id;
  }
  throw SpecError("no node named '" + std::string(name) + "'");
}

bool GraphTopology::contains(std::string_view name) const {
  return std::any_of(descs_.begin(), descs_.end(), [&](const NodeDesc& d) { return d.name == name; });
}

std::vector<NodeId> GraphTopology::consumers(NodeId id) const {
  std::vector<NodeId> out;
  for (std::size_t i = index_of(id) + 1; i < descs_.size(); ++i) {
    const auto& ins = descs_[i].inputs;
    if (std::find(ins.begin(), ins.end(), id) != ins.end()) out.push_back(descs_[i].id);
  }
  return out;
}

NodeSet GraphTopology::select(const std::function<bool(const NodeDesc&)>& pred) const {
  NodeSet out;
  for (const NodeDesc& d : descs_) {
    if (pred(d)) out.insert(d.id);
  }
  return out;
}

NodeSet GraphTopology::nodes_of(Component component) const {
  return select([component](const NodeDesc& d) { return d.component == component; });
}

NodeSet GraphTopology::set_trainable_components(std::span<const Component> components) {
  for (NodeDesc& d : descs_) {
    d.trainable = d.has_params() &&
                  std::find(components.begin(), components.end(), d.component) != components.end();
  }
  return trainable_set();
}

NodeSet GraphTopology::trainable_set() const {
  return select([](const NodeDesc& d) { return d.trainable; });
}

void GraphTopology::verify_unidirectional() const {
  for (const NodeDesc& d : descs_) {
    if (d.component != Component::Backbone) continue;
    for (NodeId in : d.inputs) {
      const Component src = desc(in).component;
      if (src == Component::Adapter || src == Component::Encoder) {
        throw InvariantError("unidirectionality violated: " + std::string(to_string(src)) + " node '" +
                             desc(in).name + "' feeds backbone node '" + d.name + "'");
      }
    }
  }
}

NodeSet compute_required_set(const GraphTopology& graph, NodeId loss, const NodeSet& trainable) {
  const std::size_t n = graph.size();
  if (index_of(loss) >= n) throw SpecError("loss node out of range");

  // Ancestors-or-self of the loss.
  std::vector<char> reaches_loss(n, 0);
  reaches_loss[index_of(loss)] = 1;
  for (std::size_t i = index_of(loss) + 1; i-- > 0;) {
    if (!reaches_loss[i]) continue;
    for (NodeId in : graph.nodes()[i].inputs) reaches_loss[index_of(in)] = 1;
  }

  // Descendants-or-self of any trainable node, restricted to loss ancestors.
  std::vector<char> depends_on_trainable(n, 0);
  for (NodeId t : trainable) {
    const NodeDesc& d = graph.desc(t);
    if (!d.has_params()) {
      throw SpecError("trainable node '" + d.name + "' holds no parameters");
    }
    if (!reaches_loss[index_of(t)]) {
      throw SpecError("trainable node '" + d.name + "' is unreachable from loss node '" +
                      graph.desc(loss).name + "'");
    }
    depends_on_trainable[index_of(t)] = 1;
  }
  NodeSet required;
  for (std::size_t i = 0; i < n; ++i) {
    const NodeDesc& d = graph.nodes()[i];
    if (!depends_on_trainable[i]) {
      for (NodeId in : d.inputs) {
        if (depends_on_trainable[index_of(in)]) {
          depends_on_trainable[i] = 1;
          break;
        }
      }
    }
    if (depends_on_trainable[i] && reaches_loss[i]) required.insert(d.id);
  }
  return required;
}

}  // namespace udta
