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

#include "udta/topology.hpp"

namespace udta {

// How a node on the backward path is charged.
//  FullAdjoint:          every visited node costs 2x its forward FLOPs.
//  InputGradOnlyFrozen:  frozen visited nodes cost 1x (input gradient only),
//                        trainable nodes 2x (input + parameter gradient).
enum class BackwardConvention { FullAdjoint, InputGradOnlyFrozen };

struct CostModel {
  std::uint64_t mac_cost = 1;  // FLOPs per multiply-accumulate
  std::uint64_t batch = 256;
  BackwardConvention convention = BackwardConvention::FullAdjoint;

  // Throws SpecError unless mac_cost is 1 or 2 and batch >= 1.
  void validate() const;
};

// conv1x1 = h'w' c_in c_out MACs, depthwise = 9 h'w' c MACs, dense 3x3 =
// 9 h'w' c_in c_out MACs, linear = in*out MACs, channel affine = 1 MAC per
// element. BN, ReLU6 and add cost one FLOP per output element, pooling one per
// input element. Inputs, concatenation and losses are free.
std::uint64_t forward_flops_per_sample(const GraphTopology& graph, NodeId id, std::uint64_t mac_cost = 1);

// Cost of a node that is part of the backward pass.
std::uint64_t backward_flops_per_sample(const GraphTopology& graph, NodeId id, bool trainable,
                                        const CostModel& model);

}  // namespace udta
