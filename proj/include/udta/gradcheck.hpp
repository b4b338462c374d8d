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
#include <string>

#include "udta/graph.hpp"

namespace udta {

struct GradCheckOptions {
  std::size_t probes = 50;
  double step = 1e-3;
  std::uint64_t seed = 0;
  // Added to the denominator of the relative error so that probes whose true
  // gradient is at rounding-noise level do not dominate.
  double denominator_floor = 1e-3;
  // For 32-bit graphs, evaluate the central difference on a 64-bit copy with
  // the same weights. Float loss rounding alone is about 1e-4 in the
  // difference quotient at step 1e-3, the size of many true gradients.
  bool numeric_in_double = true;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t probes_run = 0;
  std::size_t kink_skips = 0;  // probes discarded because a ReLU6 input crossed 0 or 6
  std::string worst_param;      // "<node>.<slot>[index]"
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Perturbs randomly chosen trainable scalars by +/-step and compares the
// central difference of the loss against the analytic gradient. A probe whose
// perturbation flips any ReLU6 input across a kink is redrawn. Running BN
// statistics are not modified.
template <typename T>
GradCheckResult finite_difference_check(BasicGraph<T>& graph, const Tensor<T>& input, NodeId loss,
                                        const NodeSet& trainable, const GradCheckOptions& options);

}  // namespace udta
