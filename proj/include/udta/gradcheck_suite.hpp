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

// Named graphs for finite-difference checking, shared by the tests, the
// acceptance suite and `udta gradcheck`.

#include <cstdint>
#include <string>
#include <vector>

#include "udta/gradcheck.hpp"
#include "udta/graph.hpp"

namespace udta {

struct GradCheckCase {
  std::string name;
  bool shadow = false;  // evaluate in 64-bit
  double tolerance = 1e-2;
  double step = 1e-3;
  ModelGraph graph;
  Tensor<float> input;
  NodeId loss{};
  NodeSet trainable;
};

// linear-toy, op-zoo, udta-toy, udta-desk, topft-desk, fullft-desk, mp-desk,
// ra-desk, ae-desk.
const std::vector<std::string>& gradcheck_arch_names();

// Throws SpecError for an unknown name.
GradCheckCase make_gradcheck_case(const std::string& name, std::uint64_t seed = 0);

// Runs the check in the case's precision. A zero step in `options` selects the
// case default.
GradCheckResult run_gradcheck(GradCheckCase& c, GradCheckOptions options);

}  // namespace udta
