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

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "udta/cost_model.hpp"
#include "udta/kernels.hpp"
#include "udta/topology.hpp"

namespace udta {

// Ordered record of the nodes that did backward work in one pass.
struct BackwardTrace {
  struct Entry {
    NodeId id{};
    Component component = Component::Backbone;
    std::uint64_t flops = 0;
  };

  std::vector<Entry> entries;

  NodeSet visited() const;
  std::uint64_t total_flops() const;
  std::uint64_t flops_of(Component component) const;
  std::size_t count_of(Component component) const;

  // {"visited":[{"id":..,"component":..,"flops":..}], "total_backward_flops":..}
  nlohmann::json to_json() const;
};

struct ForwardOptions {
  bool update_running_stats = true;
};

struct BackwardOptions {
  // Test hook for minimality checks: the node is treated as if it were outside
  // the required set.
  std::optional<NodeId> skip_node;
};

// One trainable or buffer tensor of a node, addressed by "<node>.<slot>".
template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* value;
  Tensor<T>* grad;  // null for buffers
};

template <typename T>
class BasicGraph : public GraphTopology {
 public:
  // Node construction. Shapes are inferred immediately; a mismatch throws
  // DimensionError naming the node.
  NodeId add_input(std::string name, Shape per_sample, Component component = Component::Backbone);
  NodeId add_node(OpKind op, std::string name, std::vector<NodeId> inputs, Component component,
                  KernelParams<T> params = {}, int stride = 1);

  KernelParams<T>& params(NodeId id) { return params_.at(index_of(id)); }
  const KernelParams<T>& params(NodeId id) const { return params_.at(index_of(id)); }
  const KernelGrads<T>& grads(NodeId id) const { return grads_.at(index_of(id)); }

  void set_bn_mode(NodeId id, BnMode mode) { bn_modes_.at(index_of(id)) = mode; }
  BnMode bn_mode(NodeId id) const { return bn_modes_.at(index_of(id)); }
  // Sets every BatchNorm node of `component` to `mode`.
  void set_bn_mode(Component component, BnMode mode);

  // Trainable tensors (weight, bias, gamma, beta) of one node.
  std::vector<ParamRef<T>> parameters(NodeId id);
  // Running statistics of one BatchNorm node.
  std::vector<ParamRef<T>> buffers(NodeId id);
  // Every parameter and buffer in the graph, in node order.
  std::vector<ParamRef<T>> state();

  void set_labels(std::vector<std::int32_t> labels) { labels_ = std::move(labels); }
  const std::vector<std::int32_t>& labels() const { return labels_; }

  // Runs every node. The input batch must match the input node's shape.
  void forward(const Tensor<T>& input, const ForwardOptions& options = {});
  bool has_activations() const { return !acts_.empty(); }
  const Tensor<T>& activation(NodeId id) const;
  T loss(NodeId loss_node) const;

  // Required set for (loss, trainable), cached per pair.
  const NodeSet& required_set(NodeId loss, const NodeSet& trainable);

  // Reverse-mode pass from `loss`. Parameter gradients are written for exactly
  // the nodes in `trainable` (all other grads are cleared); nodes outside the
  // required set do no work. Frozen nodes compute input gradients only.
  BackwardTrace backward(NodeId loss, const NodeSet& trainable, const CostModel& cost = {},
                         const BackwardOptions& options = {});

  template <typename U>
  BasicGraph<U> cast() const;

 private:
  template <typename U>
  friend class BasicGraph;

  Shape infer_shape(const NodeDesc& d, const KernelParams<T>& p) const;

  std::vector<KernelParams<T>> params_;
  std::vector<KernelGrads<T>> grads_;
  std::vector<BnMode> bn_modes_;
  std::vector<Tensor<T>> acts_;
  std::vector<BnCache<T>> bn_caches_;
  std::vector<std::int32_t> labels_;
  std::map<std::pair<NodeId, NodeSet>, NodeSet> required_cache_;
};

using ModelGraph = BasicGraph<float>;
using ShadowGraph = BasicGraph<double>;

template <typename T>
template <typename U>
BasicGraph<U> BasicGraph<T>::cast() const {
  BasicGraph<U> out;
  out.descs_ = descs_;
  out.bn_modes_ = bn_modes_;
  out.labels_ = labels_;
  out.params_.reserve(params_.size());
  for (const KernelParams<T>& p : params_) {
    KernelParams<U> q;
    q.weight = p.weight.template cast<U>();
    if (p.bias) q.bias = p.bias->template cast<U>();
    if (p.bn) {
      q.bn = BnState<U>{p.bn->gamma.template cast<U>(), p.bn->beta.template cast<U>(),
                        p.bn->running_mean.template cast<U>(), p.bn->running_var.template cast<U>(),
                        static_cast<U>(p.bn->epsilon), static_cast<U>(p.bn->momentum)};
    }
    out.params_.push_back(std::move(q));
  }
  out.grads_.resize(params_.size());
  return out;
}

}  // namespace udta
