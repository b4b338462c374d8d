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

#include "udta/optimizer.hpp"

#include <cmath>

#include "udta/errors.hpp"

namespace udta {

void AdamConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw SpecError("learning rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw SpecError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw SpecError("Adam epsilon must be positive");
}

void adam_step(std::span<const ParamRef<float>> params, AdamState& state, const AdamConfig& config) {
  ++state.steps;
  for (const ParamRef<float>& p : params) {
    if (!p.grad || p.grad->empty()) continue;
    if (p.grad->shape() != p.value->shape()) {
      throw DimensionError("adam: gradient of " + p.name + " has shape " + p.grad->shape().str() +
                           ", parameter " + p.value->shape().str());
    }
    AdamState::Moments& mo = state.slots[p.name];
    if (mo.m.empty()) {
      mo.m = Tensor<float>(p.value->shape());
      mo.v = Tensor<float>(p.value->shape());
    } else if (mo.m.shape() != p.value->shape()) {
      throw DimensionError("adam: moment shape mismatch for " + p.name);
    }
    ++mo.t;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(mo.t));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(mo.t));
    const auto b1 = static_cast<float>(config.beta1);
    const auto b2 = static_cast<float>(config.beta2);
    const auto step = static_cast<float>(config.learning_rate / c1);
    const auto inv_c2 = static_cast<float>(1.0 / c2);
    const auto eps = static_cast<float>(config.epsilon);
    float* w = p.value->ptr();
    const float* g = p.grad->ptr();
    float* m = mo.m.ptr();
    float* v = mo.v.ptr();
    for (std::size_t i = 0; i < p.value->size(); ++i) {
      m[i] = b1 * m[i] + (1.0f - b1) * g[i];
      v[i] = b2 * v[i] + (1.0f - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

}  // namespace udta
