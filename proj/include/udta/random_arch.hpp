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

// Randomised unidirectional architectures for trace properties: a frozen
// backbone chain (convs, BN, ReLU6, depthwise, skip-adds) with an adapter
// stack that reads random backbone activations through one-way taps.

#include <cstdint>

#include "udta/graph.hpp"

namespace udta {

struct RandomArch {
  ModelGraph g;
  NodeId loss{};
  NodeSet trainable;  // Adapter and Classifier nodes
  Shape input;        // per-sample input shape
};

// 3 classes; backbone depth in [2, max_backbone]; backbone BN in Eval mode.
RandomArch random_unidirectional(std::uint64_t seed, int max_backbone);

// Forward pass on a seeded normal batch with seeded labels.
void run_random_batch(RandomArch& arch, std::size_t batch, std::uint64_t seed);

}  // namespace udta
