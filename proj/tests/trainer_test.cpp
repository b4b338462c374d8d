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

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

#include "udta/checkpoint.hpp"
#include "udta/errors.hpp"
#include "udta/trainer.hpp"

namespace udta {
namespace {

bool starts_with(const std::string& s, const char* p) { return s.rfind(p, 0) == 0; }

bool same(const Tensor<float>& a, const Tensor<float>& b) {
  return a.shape() == b.shape() && std::memcmp(a.ptr(), b.ptr(), a.size() * sizeof(float)) == 0;
}

const SplitDatasets& tiny() {
  static const SplitDatasets d = [] {
    SynthSpec s;
    s.classes = 4;
    s.templates = 2;
    s.train_per_class = 8;
    s.test_per_class = 4;
    s.seed = 11;
    s.template_seed = 12;
    return generate(s);
  }();
  return d;
}

TrainConfig quick(Stage stage, int epochs = 2) {
  TrainConfig c = TrainConfig::defaults(stage);
  c.epochs = epochs;
  c.batch = 8;
  c.seed = 5;
  return c;
}

Model udta_model(std::uint64_t seed = 1) { return build_model(desk_spec(), ModelKind::Udta, {.seed = seed, .classes = 4}); }

// ---------------------------------------------------------------- Adam

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  Tensor<float> w(Shape{1, 4, 1, 1}, 1.0f);
  Tensor<float> g(Shape{1, 4, 1, 1});
  g[0] = 0.3f;
  g[1] = -2.0f;
  g[2] = 1e-3f;
  g[3] = 0.0f;
  const ParamRef<float> p{"w", &w, &g};
  AdamState st;
  adam_step(std::span(&p, 1), st, {.learning_rate = 0.01});
  EXPECT_NEAR(w[0], 0.99, 1e-6);
  EXPECT_NEAR(w[1], 1.01, 1e-6);
  EXPECT_NEAR(w[2], 0.99, 1e-5);
  EXPECT_EQ(w[3], 1.0f);
  EXPECT_EQ(st.steps, 1u);
  EXPECT_EQ(st.slots.at("w").t, 1u);
}

TEST(Adam, MatchesHandRecurrenceOverSeveralSteps) {
  const double grads[] = {0.5, -0.1, 0.25, 0.25, -1.0};
  Tensor<float> w(Shape{1, 1, 1, 1}, 0.2f);
  Tensor<float> g(Shape{1, 1, 1, 1});
  const ParamRef<float> p{"w", &w, &g};
  AdamState st;
  const AdamConfig cfg{.learning_rate = 0.05};
  double ref = 0.2, m = 0, v = 0;
  for (int t = 1; t <= 5; ++t) {
    const double gt = grads[t - 1];
    g[0] = static_cast<float>(gt);
    adam_step(std::span(&p, 1), st, cfg);
    m = 0.9 * m + 0.1 * gt;
    v = 0.999 * v + 0.001 * gt * gt;
    const double mh = m / (1 - std::pow(0.9, t));
    const double vh = v / (1 - std::pow(0.999, t));
    ref -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    EXPECT_NEAR(w[0], ref, 1e-6) << "t=" << t;
  }
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor<float> w(Shape{1, 3, 1, 1}, -0.7f);
  Tensor<float> g(Shape{1, 3, 1, 1});
  const ParamRef<float> p{"w", &w, &g};
  AdamState st;
  for (int i = 0; i < 3; ++i) adam_step(std::span(&p, 1), st, {});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(w[i], -0.7f);
}

TEST(Adam, ShapeMismatchAndConfigValidation) {
  Tensor<float> w(Shape{1, 3, 1, 1});
  Tensor<float> g(Shape{1, 2, 1, 1});
  const ParamRef<float> p{"w", &w, &g};
  AdamState st;
  EXPECT_THROW(adam_step(std::span(&p, 1), st, {}), DimensionError);
  EXPECT_THROW((AdamConfig{.beta1 = 1.0}).validate(), SpecError);
  EXPECT_THROW((AdamConfig{.learning_rate = -1}).validate(), SpecError);
  EXPECT_THROW((AdamConfig{.epsilon = 0}).validate(), SpecError);
}

// ---------------------------------------------------------------- config

TEST(TrainConfig, StageDefaults) {
  EXPECT_DOUBLE_EQ(TrainConfig::defaults(Stage::Pretrain).adam.learning_rate, 0.01);
  EXPECT_DOUBLE_EQ(TrainConfig::defaults(Stage::AETrain).adam.learning_rate, 0.001);
  EXPECT_DOUBLE_EQ(TrainConfig::defaults(Stage::Adapt).adam.learning_rate, 0.001);
  EXPECT_EQ(TrainConfig::defaults(Stage::Adapt).epochs, 30);
  EXPECT_EQ(TrainConfig::defaults(Stage::Adapt).batch, 32u);
  TrainConfig c = TrainConfig::defaults(Stage::Pretrain);
  c.joint_encoder = true;
  EXPECT_THROW(c.validate(), SpecError);
  c = TrainConfig::defaults(Stage::Adapt);
  c.batch = 0;
  EXPECT_THROW(c.validate(), SpecError);
  EXPECT_EQ(to_json(TrainConfig::defaults(Stage::AETrain))["stage"], "train_ae");
}

// ---------------------------------------------------------------- adaptation

TEST(Adapt, EveryStepExcludesBackboneAndEncoder) {
  Model m = udta_model();
  std::vector<EpochMetrics> seen;
  const TrainResult r = adapt(m, tiny().train, tiny().test, quick(Stage::Adapt, 3),
                              [&](const EpochMetrics& e) { seen.push_back(e); });
  ASSERT_EQ(seen.size(), 3u);
  for (const auto& e : seen) {
    EXPECT_EQ(e.backbone_backward_flops, 0u);
    EXPECT_GT(e.total_backward_flops, 0u);
    EXPECT_TRUE(e.top1.has_value());
    EXPECT_TRUE(std::isfinite(e.loss));
  }
  EXPECT_EQ(r.trace.steps, 12u);
  EXPECT_EQ(r.trace.max_backbone_nodes_per_step, 0u);
  for (NodeId id : r.trace.visited) {
    const Component c = m.graph.desc(id).component;
    EXPECT_NE(c, Component::Backbone) << m.graph.desc(id).name;
    EXPECT_NE(c, Component::Encoder) << m.graph.desc(id).name;
  }
  EXPECT_EQ(r.trace.to_json()["backbone_backward_flops"], 0);
  EXPECT_EQ(m.trainable_components, (std::vector<Component>{Component::Adapter, Component::Classifier}));
}

TEST(Adapt, FrozenComponentsAreBitIdenticalAfterTraining) {
  Model m = udta_model();
  auto frozen = [](const std::string& n) { return starts_with(n, "backbone.") || starts_with(n, "encoder."); };
  const TensorMap before = graph_tensors(m.graph, frozen);
  const TensorMap trained_before = graph_tensors(m.graph, [&](const std::string& n) { return !frozen(n); });
  adapt(m, tiny().train, tiny().test, quick(Stage::Adapt));
  const TensorMap after = graph_tensors(m.graph, frozen);
  for (const auto& [k, v] : before) EXPECT_TRUE(same(v, after.at(k))) << k;
  std::size_t moved = 0;
  for (const auto& [k, v] : graph_tensors(m.graph, [&](const std::string& n) { return !frozen(n); })) {
    moved += same(v, trained_before.at(k)) ? 0 : 1;
  }
  EXPECT_GT(moved, 0u);
}

TEST(Adapt, ZeroLearningRateKeepsInitialAccuracy) {
  Model m = udta_model(3);
  m.apply_bn_modes();
  const double initial = evaluate_top1(m, tiny().test);
  TrainConfig c = quick(Stage::Adapt, 1);
  c.adam.learning_rate = 0.0;
  const TrainResult r = adapt(m, tiny().train, tiny().test, c);
  ASSERT_TRUE(r.final_top1);
  EXPECT_EQ(*r.final_top1, initial);
}

TEST(Adapt, JointEncoderTrainsEncoderWithoutTouchingBackbone) {
  Model m = build_model(desk_spec(), ModelKind::Udta, {.seed = 1, .classes = 4, .joint_encoder = true});
  const TensorMap enc = graph_tensors(m.graph, [](const std::string& n) { return starts_with(n, "encoder."); });
  TrainConfig c = quick(Stage::Adapt, 1);
  c.joint_encoder = true;
  const TrainResult r = adapt(m, tiny().train, tiny().test, c);
  EXPECT_EQ(r.trace.max_backbone_nodes_per_step, 0u);
  EXPECT_GT(r.trace.nodes.at(Component::Encoder), 0u);
  std::size_t moved = 0;
  for (const auto& [k, v] : graph_tensors(m.graph, [](const std::string& n) { return starts_with(n, "encoder."); })) {
    moved += same(v, enc.at(k)) ? 0 : 1;
  }
  EXPECT_GT(moved, 0u);
}

TEST(Adapt, BackboneInTraceIsAHardFailure) {
  // An adapter placed upstream of a backbone conv forces backward through the backbone.
  Model m;
  m.kind = ModelKind::Udta;
  Initializer init(1);
  ModelGraph& g = m.graph;
  const NodeId in = g.add_input("input", Shape{1, 3, 32, 32});
  KernelParams<float> affine;
  affine.weight = Tensor<float>(Shape{3, 1, 1, 1}, 1.0f);
  affine.bias = Tensor<float>(Shape{3, 1, 1, 1});
  const NodeId a = g.add_node(OpKind::ChannelAffine, "udta.bad", {in}, Component::Adapter, affine);
  KernelParams<float> conv;
  conv.weight = init.conv(8, 3, 1);
  const NodeId c = g.add_node(OpKind::Conv1x1, "backbone.conv", {a}, Component::Backbone, conv);
  const NodeId p = g.add_node(OpKind::GlobalAvgPool, "backbone.pool", {c}, Component::Backbone);
  KernelParams<float> fc;
  fc.weight = init.uniform_fan_in(Shape{4, 8, 1, 1}, 8);
  fc.bias = Tensor<float>(Shape{4, 1, 1, 1});
  m.logits = g.add_node(OpKind::Linear, "classifier.fc", {p}, Component::Classifier, fc);
  m.loss = g.add_node(OpKind::CrossEntropyLoss, "loss", {m.logits}, Component::Classifier);
  try {
    adapt(m, tiny().train, tiny().test, quick(Stage::Adapt, 1));
    FAIL() << "expected InvariantError";
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("Backbone node 'backbone."), std::string::npos) << e.what();
  }
}

TEST(Adapt, RejectsWrongInputs) {
  Model m = udta_model();
  EXPECT_THROW(adapt(m, tiny().train, tiny().test, quick(Stage::Pretrain)), SpecError);
  Dataset empty = tiny().train;
  empty.images = Tensor<float>();
  empty.labels.clear();
  EXPECT_THROW(adapt(m, empty, tiny().test, quick(Stage::Adapt)), SpecError);
  TrainConfig big = quick(Stage::Adapt);
  big.batch = 1000;
  EXPECT_THROW(adapt(m, tiny().train, tiny().test, big), SpecError);
  Model top = build_model(desk_spec(), ModelKind::TopFT, {.seed = 1, .classes = 4});
  EXPECT_THROW(adapt(top, tiny().train, tiny().test, quick(Stage::Adapt)), SpecError);
  EXPECT_THROW(run_baseline_adaptation(m, tiny().train, tiny().test, quick(Stage::Adapt)), SpecError);
}

TEST(Adapt, SameSeedIsBitIdentical) {
  auto run = [] {
    Model m = udta_model(7);
    const TrainResult r = adapt(m, tiny().train, tiny().test, quick(Stage::Adapt));
    return std::pair(graph_tensors(m.graph), r);
  };
  const auto [ta, ra] = run();
  const auto [tb, rb] = run();
  for (const auto& [k, v] : ta) EXPECT_TRUE(same(v, tb.at(k))) << k;
  for (std::size_t e = 0; e < ra.epochs.size(); ++e) {
    EXPECT_EQ(ra.epochs[e].loss, rb.epochs[e].loss);
    EXPECT_EQ(ra.epochs[e].top1, rb.epochs[e].top1);
  }
}

// ---------------------------------------------------------------- baselines

TEST(Baselines, PatchAndResidualAdapterTraverseTheBackboneEveryStep) {
  for (ModelKind kind : {ModelKind::ModelPatch, ModelKind::ResidualAdapter, ModelKind::FullFT}) {
    Model m = build_model(desk_spec(), kind, {.seed = 2, .classes = 4});
    const TrainResult r = run_baseline_adaptation(m, tiny().train, tiny().test, quick(Stage::Adapt, 1));
    EXPECT_GE(r.trace.min_backbone_nodes_per_step, 1u) << to_string(kind);
    for (const auto& e : r.epochs) EXPECT_GT(e.backbone_backward_flops, 0u) << to_string(kind);
  }
}

TEST(Baselines, TopFtTouchesOnlyTheClassifier) {
  Model m = build_model(desk_spec(), ModelKind::TopFT, {.seed = 2, .classes = 4});
  const TensorMap before = graph_tensors(m.graph, [](const std::string& n) { return starts_with(n, "backbone."); });
  const TrainResult r = run_baseline_adaptation(m, tiny().train, tiny().test, quick(Stage::Adapt, 1));
  EXPECT_EQ(r.trace.max_backbone_nodes_per_step, 0u);
  for (const auto& [k, v] : graph_tensors(m.graph, [](const std::string& n) { return starts_with(n, "backbone."); })) {
    EXPECT_TRUE(same(v, before.at(k))) << k;
  }
}

// ---------------------------------------------------------------- evaluation

TEST(Evaluate, RestoresBatchNormModes) {
  Model m = build_model(desk_spec(), ModelKind::FullFT, {.seed = 2, .classes = 4});
  m.apply_bn_modes();
  std::vector<BnMode> modes;
  for (const NodeDesc& d : m.graph.nodes()) modes.push_back(m.graph.bn_mode(d.id));
  const TensorMap before = graph_tensors(m.graph);
  const double a = evaluate_top1(m, tiny().test, 5);
  const double b = evaluate_top1(m, tiny().test, 128);
  EXPECT_EQ(a, b);
  EXPECT_GE(a, 0.0);
  EXPECT_LE(a, 1.0);
  for (const NodeDesc& d : m.graph.nodes()) EXPECT_EQ(m.graph.bn_mode(d.id), modes[index_of(d.id)]);
  for (const auto& [k, v] : graph_tensors(m.graph)) EXPECT_TRUE(same(v, before.at(k))) << k;
}

// ---------------------------------------------------------------- autoencoders

TEST(Autoencoders, TrainingBeatsRandomInitAndNeverVisitsTheBackbone) {
  AutoencoderModel ae = build_autoencoder_model(desk_spec(), 4);
  const TensorMap bb = graph_tensors(ae.graph, [](const std::string& n) { return starts_with(n, "backbone."); });
  const auto random_mse = reconstruction_mse(ae, tiny().test);
  TrainConfig c = quick(Stage::AETrain, 10);
  const TrainResult r = train_autoencoders(ae, tiny().train, c);
  const auto trained_mse = reconstruction_mse(ae, tiny().test);
  ASSERT_EQ(trained_mse.size(), 2u);
  for (std::size_t k = 0; k < trained_mse.size(); ++k) EXPECT_LE(trained_mse[k], 0.5 * random_mse[k]) << k;
  EXPECT_EQ(r.trace.max_backbone_nodes_per_step, 0u);
  EXPECT_EQ(r.trace.steps, 2u * 4 * 10);
  for (const auto& [k, v] : graph_tensors(ae.graph, [](const std::string& n) { return starts_with(n, "backbone."); })) {
    EXPECT_TRUE(same(v, bb.at(k))) << k;
  }
}

TEST(Autoencoders, WrongStageIsRejected) {
  AutoencoderModel ae = build_autoencoder_model(desk_spec(), 4);
  EXPECT_THROW(train_autoencoders(ae, tiny().train, quick(Stage::Adapt)), SpecError);
}

// ---------------------------------------------------------------- pre-training

TEST(Pretrain, ZeroLearningRateChangesNoParameter) {
  Model m = build_model(desk_spec(), ModelKind::Backbone, {.seed = 2, .classes = 4});
  const TensorMap before = graph_tensors(m.graph, [&](const std::string& n) { return !n.ends_with("running_mean") && !n.ends_with("running_var"); });
  TrainConfig c = quick(Stage::Pretrain, 1);
  c.adam.learning_rate = 0.0;
  const TrainResult r = pretrain(m, tiny().train, nullptr, c);
  for (const auto& [k, v] : before) {
    EXPECT_TRUE(same(v, graph_tensors(m.graph).at(k))) << k;
  }
  EXPECT_FALSE(r.final_top1.has_value());
  EXPECT_THROW(pretrain(m, tiny().train, nullptr, quick(Stage::Adapt)), SpecError);
}

// Count of 5-epoch windows whose mean loss exceeds that of the window before.
int window_violations(const std::vector<EpochMetrics>& epochs) {
  auto mean = [&](std::size_t from) {
    double s = 0;
    for (std::size_t e = from; e < from + 5; ++e) s += epochs[e].loss;
    return s / 5;
  };
  int violations = 0;
  for (std::size_t e = 0; e + 10 <= epochs.size(); ++e) violations += mean(e + 5) > mean(e) ? 1 : 0;
  return violations;
}

TEST(Pretrain, DeskBackboneFitsEightClassTaskAndAdaptationFollows) {
  SynthSpec s;
  s.test_per_class = 8;
  s.seed = 21;
  s.template_seed = 22;
  const SplitDatasets d = generate(s);
  Model m = build_model(desk_spec(), ModelKind::Backbone, {.seed = 3, .classes = 8});
  TrainConfig c = TrainConfig::defaults(Stage::Pretrain);
  c.seed = 3;
  const TrainResult r = pretrain(m, d.train, &d.test, c);
  ASSERT_EQ(r.epochs.size(), 30u);
  for (const auto& e : r.epochs) ASSERT_TRUE(std::isfinite(e.loss));
  EXPECT_LT(r.epochs.back().loss, std::log(8.0) / 4.0);
  EXPECT_LE(window_violations(r.epochs), 1);

  s.seed = 23;
  s.template_seed = 24;
  const SplitDatasets t = generate(s);
  Model u = build_model(desk_spec(), ModelKind::Udta, {.seed = 4, .classes = 8});
  restore_tensors(u.graph, graph_tensors(m.graph), {"backbone."});
  TrainConfig a = TrainConfig::defaults(Stage::Adapt);
  a.seed = 4;
  const TrainResult ra = adapt(u, t.train, t.test, a);
  ASSERT_EQ(ra.epochs.size(), 30u);
  EXPECT_LT(ra.epochs.back().loss, ra.epochs.front().loss);
  EXPECT_LE(window_violations(ra.epochs), 1);
}

}  // namespace
}  // namespace udta
