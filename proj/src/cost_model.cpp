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

#include "udta/cost_model.hpp"

#include <string>

#include "udta/errors.hpp"

namespace udta {

void CostModel::validate() const {
  if (mac_cost != 1 && mac_cost != 2) {
    throw SpecError("mac_cost must be 1 or 2, got " + std::to_string(mac_cost));
  }
  if (batch < 1) throw SpecError("batch multiplier must be >= 1");
}

std::uint64_t forward_flops_per_sample(const GraphTopology& graph, NodeId id, std::uint64_t mac_cost) {
  const NodeDesc& d = graph.desc(id);
  const Shape& out = d.out_shape;
  const std::uint64_t out_elems = out.per_sample();
  auto input_shape = [&](std::size_t i) -> const Shape& { return graph.desc(d.inputs.at(i)).out_shape; };
  switch (d.op) {
    case OpKind::Input:
    case OpKind::Concat:
    case OpKind::CrossEntropyLoss:
    case OpKind::MseLoss:
      return 0;
    case OpKind::Conv1x1:
      return out.plane() * input_shape(0).c * out.c * mac_cost;
    case OpKind::Conv3x3:
      return 9 * out.plane() * input_shape(0).c * out.c * mac_cost;
    case OpKind::Depthwise3x3:
      return 9 * out.plane() * out.c * mac_cost;
    case OpKind::Linear:
      return input_shape(0).per_sample() * out.c * mac_cost;
    case OpKind::ChannelAffine:
      return out_elems * mac_cost;
    case OpKind::BatchNorm:
    case OpKind::ReLU6:
    case OpKind::Add:
      return out_elems;
    case OpKind::GlobalAvgPool:
      return input_shape(0).per_sample();
  }
  throw SpecError("unknown op kind for node '" + d.name + "'");
}

std::uint64_t backward_flops_per_sample(const GraphTopology& graph, NodeId id, bool trainable,
                                        const CostModel& model) {
  const std::uint64_t fwd = forward_flops_per_sample(graph, id, model.mac_cost);
  if (model.convention == BackwardConvention::InputGradOnlyFrozen && !trainable) return fwd;
  return 2 * fwd;
}

}  // namespace udta
