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

#include "udta/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <type_traits>
#include <vector>

namespace udta {

namespace {

// Region code per ReLU6 input element: 0 below 0, 1 inside, 2 above 6.
template <typename T>
std::vector<std::uint8_t> relu_regions(const BasicGraph<T>& graph) {
  std::vector<std::uint8_t> out;
  for (const NodeDesc& d : graph.nodes()) {
    if (d.op != OpKind::ReLU6) continue;
    const Tensor<T>& x = graph.activation(d.inputs[0]);
    for (std::size_t i = 0; i < x.size(); ++i) {
      out.push_back(x[i] <= T(0) ? 0 : (x[i] >= T(6) ? 2 : 1));
    }
  }
  return out;
}

}  // namespace

template <typename T>
GradCheckResult finite_difference_check(BasicGraph<T>& graph, const Tensor<T>& input, NodeId loss,
                                        const NodeSet& trainable, const GradCheckOptions& options) {
  GradCheckResult result;
  const ForwardOptions frozen_stats{.update_running_stats = false};

  struct Slot {
    NodeId node;
    std::size_t param;
    std::size_t size;
  };
  std::vector<Slot> slots;
  std::size_t total = 0;
  for (NodeId id : trainable) {
    auto refs = graph.parameters(id);
    for (std::size_t k = 0; k < refs.size(); ++k) {
      slots.push_back({id, k, refs[k].value->size()});
      total += refs[k].value->size();
    }
  }
  if (total == 0 || options.probes == 0) return result;

  graph.forward(input, frozen_stats);
  graph.backward(loss, trainable);
  std::vector<std::vector<T>> analytic;
  for (const Slot& s : slots) {
    const auto refs = graph.parameters(s.node);
    const Tensor<T>& g = *refs[s.param].grad;
    analytic.emplace_back(g.data().begin(), g.data().end());
    if (analytic.back().empty()) analytic.back().assign(s.size, T(0));
  }

  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  const std::size_t max_attempts = options.probes * 20;

  // Central difference of the loss in scalar type U on `g`, which mirrors
  // `graph` node for node.
  auto central = [&]<typename U>(BasicGraph<U>& g, const Tensor<U>& x, const Slot& s, std::size_t flat,
                                 bool& kink) {
    auto refs = g.parameters(s.node);
    U& value = (*refs[s.param].value)[flat];
    const U original = value;
    const U h = static_cast<U>(options.step);
    value = original + h;
    g.forward(x, frozen_stats);
    const U plus = g.loss(loss);
    const auto regions_plus = relu_regions(g);
    value = original - h;
    g.forward(x, frozen_stats);
    const U minus = g.loss(loss);
    kink = regions_plus != relu_regions(g);
    value = original;
    return (static_cast<double>(plus) - static_cast<double>(minus)) / (2.0 * options.step);
  };

  std::optional<ShadowGraph> shadow;
  Tensor<double> shadow_input;
  if constexpr (std::is_same_v<T, float>) {
    if (options.numeric_in_double) {
      shadow = graph.template cast<double>();
      shadow_input = input.template cast<double>();
    }
  }

  for (std::size_t attempt = 0; attempt < max_attempts && result.probes_run < options.probes; ++attempt) {
    std::size_t flat = pick(rng);
    std::size_t si = 0;
    while (flat >= slots[si].size) flat -= slots[si++].size;
    const Slot& s = slots[si];
    bool kink = false;
    double numeric = 0.0;
    if (shadow) {
      numeric = central(*shadow, shadow_input, s, flat, kink);
    } else {
      numeric = central(graph, input, s, flat, kink);
    }
    if (kink) {
      ++result.kink_skips;
      continue;
    }
    const double exact = static_cast<double>(analytic[si][flat]);
    const double err =
        std::abs(numeric - exact) / (std::max(std::abs(numeric), std::abs(exact)) + options.denominator_floor);
    ++result.probes_run;
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst_param = graph.parameters(s.node)[s.param].name + "[" + std::to_string(flat) + "]";
      result.worst_analytic = exact;
      result.worst_numeric = numeric;
    }
  }
  graph.forward(input, frozen_stats);
  return result;
}

template GradCheckResult finite_difference_check(BasicGraph<float>&, const Tensor<float>&, NodeId, const NodeSet&,
                                                 const GradCheckOptions&);
template GradCheckResult finite_difference_check(BasicGraph<double>&, const Tensor<double>&, NodeId, const NodeSet&,
                                                 const GradCheckOptions&);

}  // namespace udta
