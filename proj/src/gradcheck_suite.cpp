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

#include "udta/gradcheck_suite.hpp"

#include <random>

#include "udta/architectures.hpp"
#include "udta/errors.hpp"

namespace udta {

namespace {

constexpr std::size_t kBatch = 8;

Tensor<float> uniform_input(Shape per_sample, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  Tensor<float> t(per_sample.with_batch(kBatch));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

std::vector<std::int32_t> random_labels(int classes, std::mt19937_64& rng) {
  std::vector<std::int32_t> labels(kBatch);
  for (auto& l : labels) l = static_cast<std::int32_t>(rng() % static_cast<std::uint64_t>(classes));
  return labels;
}

KernelParams<float> with(Tensor<float> w, std::optional<Tensor<float>> bias = std::nullopt) {
  KernelParams<float> p;
  p.weight = std::move(w);
  p.bias = std::move(bias);
  return p;
}

KernelParams<float> bn(std::size_t c, std::mt19937_64& rng) {
  KernelParams<float> p;
  p.bn = BnState<float>::identity(c);
  std::uniform_real_distribution<float> u(0.5f, 1.5f);
  for (std::size_t i = 0; i < c; ++i) {
    p.bn->gamma[i] = u(rng);
    p.bn->beta[i] = u(rng) - 1.0f;
  }
  return p;
}

void linear_toy(GradCheckCase& c, std::mt19937_64& rng) {
  Initializer init(rng());
  ModelGraph& g = c.graph;
  const NodeId in = g.add_input("input", Shape{1, 5, 1, 1});
  const NodeId l1 = g.add_node(OpKind::Linear, "fc1", {in}, Component::Adapter,
                               with(init.uniform_fan_in(Shape{4, 5, 1, 1}, 5), init.uniform_fan_in(Shape{4, 1, 1, 1}, 5)));
  const NodeId a = g.add_node(OpKind::ChannelAffine, "scale", {l1}, Component::Adapter,
                              with(init.uniform_fan_in(Shape{4, 1, 1, 1}, 1), init.uniform_fan_in(Shape{4, 1, 1, 1}, 1)));
  const NodeId l2 = g.add_node(OpKind::Linear, "fc2", {a}, Component::Classifier,
                               with(init.uniform_fan_in(Shape{3, 4, 1, 1}, 4), init.uniform_fan_in(Shape{3, 1, 1, 1}, 4)));
  c.loss = g.add_node(OpKind::CrossEntropyLoss, "loss", {l2}, Component::Classifier);
  g.set_labels(random_labels(3, rng));
  std::normal_distribution<float> d(0.0f, 1.0f);
  c.input = Tensor<float>(Shape{kBatch, 5, 1, 1});
  for (std::size_t i = 0; i < c.input.size(); ++i) c.input[i] = d(rng);
  c.shadow = true;
  c.tolerance = 1e-6;
  c.step = 1e-5;
}

// Every op kind the models use, each with trainable parameters where it has any.
void op_zoo(GradCheckCase& c, std::mt19937_64& rng) {
  Initializer init(rng());
  ModelGraph& g = c.graph;
  const NodeId in = g.add_input("input", Shape{1, 3, 6, 6});
  NodeId x = g.add_node(OpKind::Conv3x3, "stem", {in}, Component::Backbone, with(init.conv(4, 3, 3)), 2);
  x = g.add_node(OpKind::BatchNorm, "stem_bn", {x}, Component::Backbone, bn(4, rng));
  x = g.add_node(OpKind::ReLU6, "stem_relu", {x}, Component::Backbone);
  const NodeId e = g.add_node(OpKind::Conv1x1, "expand", {x}, Component::Backbone, with(init.conv(6, 4, 1)));
  NodeId dw = g.add_node(OpKind::Depthwise3x3, "dw", {e}, Component::Backbone, with(init.depthwise(6)), 2);
  const NodeId ra = g.add_node(OpKind::ChannelAffine, "ra", {e}, Component::Adapter,
                               with(init.uniform_fan_in(Shape{6, 1, 1, 1}, 1), init.uniform_fan_in(Shape{6, 1, 1, 1}, 1)),
                               2);
  dw = g.add_node(OpKind::Add, "dw_add", {dw, ra}, Component::Backbone);
  dw = g.add_node(OpKind::BatchNorm, "dw_bn", {dw}, Component::Backbone, bn(6, rng));
  const NodeId dw1 = g.add_node(OpKind::Depthwise3x3, "dw1", {dw}, Component::Backbone, with(init.depthwise(6)), 1);
  const NodeId proj = g.add_node(OpKind::Conv1x1, "proj", {dw1}, Component::Backbone, with(init.conv(4, 6, 1)));
  const NodeId side = g.add_node(OpKind::Conv1x1, "side", {e}, Component::Adapter,
                                 with(init.conv(2, 6, 1), init.uniform_fan_in(Shape{2, 1, 1, 1}, 6)), 2);
  const NodeId p1 = g.add_node(OpKind::GlobalAvgPool, "pool", {proj}, Component::Backbone);
  const NodeId p2 = g.add_node(OpKind::GlobalAvgPool, "side_pool", {side}, Component::Adapter);
  const NodeId cat = g.add_node(OpKind::Concat, "concat", {p1, p2}, Component::Classifier);
  const NodeId fc = g.add_node(OpKind::Linear, "fc", {cat}, Component::Classifier,
                               with(init.uniform_fan_in(Shape{3, 6, 1, 1}, 6), init.uniform_fan_in(Shape{3, 1, 1, 1}, 6)));
  c.loss = g.add_node(OpKind::CrossEntropyLoss, "loss", {fc}, Component::Classifier);
  g.set_labels(random_labels(3, rng));
  c.input = uniform_input(Shape{1, 3, 6, 6}, rng);
}

ModelSpec toy_spec() {
  ModelSpec s = desk_spec();
  s.name = "udta-toy";
  s.input_resolution = 8;
  s.stem_stride = 1;
  s.stages = {{1, 16, 1, 1}, {2, 32, 1, 2}, {2, 64, 1, 1}, {2, 96, 1, 2}};
  s.head_channels = 64;
  s.thin_expansion = 2;
  s.thin_blocks = 2;
  s.taps = {{2, false}, {3, true}};
  s.classes = 3;
  return s;
}

void from_model(GradCheckCase& c, const ModelSpec& spec, ModelKind kind, std::mt19937_64& rng) {
  Model m = build_model(spec, kind, {.seed = rng(), .classes = spec.classes});
  m.apply_bn_modes();
  c.graph = std::move(m.graph);
  c.loss = m.loss;
  c.trainable = c.graph.trainable_set();
  c.graph.set_labels(random_labels(spec.classes, rng));
  c.input = uniform_input(c.graph.desc(node_id(0)).out_shape, rng);
}

}  // namespace

const std::vector<std::string>& gradcheck_arch_names() {
  static const std::vector<std::string> names{"linear-toy", "op-zoo",      "udta-toy", "udta-desk", "topft-desk",
                                              "fullft-desk", "mp-desk",    "ra-desk",  "ae-desk"};
  return names;
}

GradCheckCase make_gradcheck_case(const std::string& name, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradCheckCase c;
  c.name = name;
  if (name == "linear-toy") {
    linear_toy(c, rng);
  } else if (name == "op-zoo") {
    op_zoo(c, rng);
  } else if (name == "udta-toy") {
    from_model(c, toy_spec(), ModelKind::Udta, rng);
  } else if (name == "ae-desk") {
    AutoencoderModel ae = build_autoencoder_model(desk_spec(), rng());
    const AutoencoderHandles h = ae.autoencoders.back();
    c.loss = ae.losses.back();
    c.graph = std::move(ae.graph);
    c.graph.set_bn_mode(Component::Backbone, BnMode::Eval);
    c.trainable = {h.encoder, h.decoder};
    c.input = uniform_input(c.graph.desc(node_id(0)).out_shape, rng);
  } else if (name.ends_with("-desk")) {
    from_model(c, desk_spec(), model_kind_from_string(name.substr(0, name.size() - 5)), rng);
  } else {
    throw SpecError("unknown gradcheck architecture '" + name + "'");
  }
  if (c.trainable.empty()) c.trainable = c.graph.select([](const NodeDesc& d) { return d.has_params(); });
  return c;
}

GradCheckResult run_gradcheck(GradCheckCase& c, GradCheckOptions options) {
  if (options.step <= 0.0) options.step = c.step;
  if (c.shadow) {
    ShadowGraph g = c.graph.cast<double>();
    return finite_difference_check(g, c.input.cast<double>(), c.loss, c.trainable, options);
  }
  return finite_difference_check(c.graph, c.input, c.loss, c.trainable, options);
}

}  // namespace udta
