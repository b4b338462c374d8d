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

#include "udta/random_arch.hpp"

#include <optional>
#include <random>

namespace udta {

namespace {

Tensor<float> random_tensor(Shape s, std::mt19937_64& rng, float scale = 0.5f) {
  std::normal_distribution<float> d(0.0f, scale);
  Tensor<float> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

KernelParams<float> conv_params(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  KernelParams<float> p;
  p.weight = random_tensor(Shape{out, in, 1, 1}, rng);
  return p;
}

KernelParams<float> linear_params(std::size_t out, std::size_t in, std::mt19937_64& rng) {
  KernelParams<float> p = conv_params(out, in, rng);
  p.bias = random_tensor(Shape{out, 1, 1, 1}, rng, 0.1f);
  return p;
}

KernelParams<float> bn_params(std::size_t c, std::mt19937_64& rng) {
  KernelParams<float> p;
  p.bn = BnState<float>::identity(c);
  std::uniform_real_distribution<float> u(0.5f, 1.5f);
  for (std::size_t i = 0; i < c; ++i) p.bn->gamma[i] = u(rng);
  return p;
}

}  // namespace

RandomArch random_unidirectional(std::uint64_t seed, int max_backbone) {
  std::mt19937_64 rng(seed);
  RandomArch r;
  const std::size_t c = 2 + rng() % 3, ac = 2 + rng() % 2, hw = 3 + rng() % 2;
  r.input = Shape{1, c, hw, hw};
  ModelGraph& g = r.g;
  std::vector<NodeId> backbone{g.add_input("input", r.input)};
  const int depth = 2 + static_cast<int>(rng() % static_cast<std::uint64_t>(max_backbone - 1));
  std::optional<NodeId> adapter;
  for (int i = 0; i < depth; ++i) {
    const NodeId prev = backbone.back();
    const std::string name = "b" + std::to_string(i);
    NodeId next{};
    switch (rng() % 5) {
      case 0:
        next = g.add_node(OpKind::Conv1x1, name, {prev}, Component::Backbone, conv_params(c, c, rng));
        break;
      case 1:
        next = g.add_node(OpKind::BatchNorm, name, {prev}, Component::Backbone, bn_params(c, rng));
        break;
      case 2:
        next = g.add_node(OpKind::ReLU6, name, {prev}, Component::Backbone);
        break;
      case 3: {
        KernelParams<float> p;
        p.weight = random_tensor(Shape{c, 1, 3, 3}, rng);
        next = g.add_node(OpKind::Depthwise3x3, name, {prev}, Component::Backbone, p);
        break;
      }
      default:
        next = g.add_node(OpKind::Add, name, {prev, backbone[rng() % backbone.size()]}, Component::Backbone);
    }
    backbone.push_back(next);
    if (rng() % 2 == 0) {
      // Tap: the adapter reads this backbone activation.
      const NodeId enc = g.add_node(OpKind::Conv1x1, "tap" + std::to_string(i), {next}, Component::Adapter,
                                    conv_params(ac, c, rng));
      NodeId a = enc;
      if (adapter) a = g.add_node(OpKind::Add, "merge" + std::to_string(i), {enc, *adapter}, Component::Adapter);
      if (rng() % 2 == 0) a = g.add_node(OpKind::ReLU6, "act" + std::to_string(i), {a}, Component::Adapter);
      adapter = a;
    }
  }
  if (!adapter) {
    adapter = g.add_node(OpKind::Conv1x1, "tap_last", {backbone.back()}, Component::Adapter, conv_params(ac, c, rng));
  }
  const NodeId bp = g.add_node(OpKind::GlobalAvgPool, "bpool", {backbone.back()}, Component::Backbone);
  const NodeId ap = g.add_node(OpKind::GlobalAvgPool, "apool", {*adapter}, Component::Adapter);
  const NodeId cat = g.add_node(OpKind::Concat, "cat", {bp, ap}, Component::Classifier);
  const NodeId fc = g.add_node(OpKind::Linear, "fc", {cat}, Component::Classifier, linear_params(3, c + ac, rng));
  r.loss = g.add_node(OpKind::CrossEntropyLoss, "loss", {fc}, Component::Classifier);
  const Component comps[] = {Component::Adapter, Component::Classifier};
  r.trainable = g.set_trainable_components(comps);
  g.set_bn_mode(Component::Backbone, BnMode::Eval);
  return r;
}

void run_random_batch(RandomArch& arch, std::size_t batch, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<std::int32_t> labels(batch);
  for (auto& l : labels) l = static_cast<std::int32_t>(rng() % 3);
  arch.g.set_labels(labels);
  arch.g.forward(random_tensor(arch.input.with_batch(batch), rng, 1.0f));
}

}  // namespace udta
