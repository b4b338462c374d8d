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
#include <map>
#include <span>
#include <string>

#include "udta/graph.hpp"

namespace udta {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Throws SpecError unless lr > 0 (or == 0 for frozen runs) and betas in [0, 1).
  void validate() const;
};

struct AdamState {
  struct Moments {
    Tensor<float> m;
    Tensor<float> v;
    std::uint64_t t = 0;
  };
  std::map<std::string, Moments> slots;  // keyed by parameter name
  std::uint64_t steps = 0;
};

// Bias-corrected Adam update of every parameter in `params` that carries a
// gradient. Moments are created zero-initialised on first use.
void adam_step(std::span<const ParamRef<float>> params, AdamState& state, const AdamConfig& config);

}  // namespace udta
