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

#include "udta/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "udta/errors.hpp"

namespace udta {

std::string_view to_string(Stage stage) {
  switch (stage) {
    case Stage::Pretrain: return "pretrain";
    case Stage::AETrain: return "train_ae";
    case Stage::Adapt: return "adapt";
  }
  return "?";
}

TrainConfig TrainConfig::defaults(Stage stage) {
  TrainConfig c;
  c.stage = stage;
  c.adam.learning_rate = stage == Stage::Pretrain ? 0.01 : 0.001;
  return c;
}

void TrainConfig::validate() const {
  adam.validate();
  if (epochs < 0) throw SpecError("epochs must be >= 0");
  if (batch < 1) throw SpecError("batch size must be >= 1");
  if (eval_batch < 1) throw SpecError("eval batch size must be >= 1");
  if (joint_encoder && stage != Stage::Adapt) throw SpecError("joint encoder mode applies to adaptation only");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"stage", to_string(c.stage)},
          {"epochs", c.epochs},
          {"batch", c.batch},
          {"learning_rate", c.adam.learning_rate},
          {"beta1", c.adam.beta1},
          {"beta2", c.adam.beta2},
          {"adam_epsilon", c.adam.epsilon},
          {"seed", c.seed},
          {"joint_encoder", c.joint_encoder},
          {"eval_batch", c.eval_batch}};
}

nlohmann::json EpochMetrics::to_json() const {
  nlohmann::json j = {{"stage", stage},
                      {"epoch", epoch},
                      {"loss", loss},
                      {"top1", nullptr},
                      {"backbone_backward_flops", backbone_backward_flops},
                      {"total_backward_flops", total_backward_flops},
                      {"wall_ms", wall_ms}};
  if (top1) j["top1"] = *top1;
  return j;
}

void TraceSummary::add(const GraphTopology& graph, const BackwardTrace& trace) {
  const std::size_t backbone = trace.count_of(Component::Backbone);
  min_backbone_nodes_per_step = steps == 0 ? backbone : std::min(min_backbone_nodes_per_step, backbone);
  max_backbone_nodes_per_step = std::max(max_backbone_nodes_per_step, backbone);
  ++steps;
  for (const BackwardTrace::Entry& e : trace.entries) {
    flops[e.component] += e.flops;
    if (visited.insert(e.id).second) ++nodes[graph.desc(e.id).component];
  }
}

nlohmann::json TraceSummary::to_json() const {
  nlohmann::json f = nlohmann::json::object();
  nlohmann::json n = nlohmann::json::object();
  for (Component c : kAllComponents) {
    const auto fi = flops.find(c);
    const auto ni = nodes.find(c);
    f[std::string(to_string(c))] = fi == flops.end() ? 0 : fi->second;
    n[std::string(to_string(c))] = ni == nodes.end() ? 0 : ni->second;
  }
  const auto bb = flops.find(Component::Backbone);
  return {{"steps", steps},
          {"backward_flops_by_component", std::move(f)},
          {"visited_nodes_by_component", std::move(n)},
          {"backbone_backward_flops", bb == flops.end() ? 0 : bb->second},
          {"min_backbone_nodes_per_step", min_backbone_nodes_per_step},
          {"max_backbone_nodes_per_step", max_backbone_nodes_per_step}};
}

namespace {

using TraceCheck = std::function<void(const BackwardTrace&)>;
using Evaluator = std::function<std::optional<double>()>;

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, Stage stage, int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

std::vector<ParamRef<float>> params_of(ModelGraph& g, const NodeSet& nodes) {
  std::vector<ParamRef<float>> out;
  for (NodeId id : nodes) {
    for (auto& r : g.parameters(id)) out.push_back(r);
  }
  return out;
}

TrainResult train_loop(ModelGraph& g, const std::vector<NodeId>& losses, const NodeSet& trainable,
                       const Dataset& train, const TrainConfig& config, const TraceCheck& check,
                       const Evaluator& evaluate, const MetricsSink& sink) {
  config.validate();
  if (train.size() == 0) throw SpecError("training set is empty");
  const std::size_t batches = train.size() / config.batch;
  if (batches == 0) {
    throw SpecError("training set of " + std::to_string(train.size()) + " samples is smaller than one batch of " +
                    std::to_string(config.batch));
  }
  // Each loss updates the trainable nodes that feed it.
  std::vector<NodeSet> loss_trainable;
  std::vector<std::vector<ParamRef<float>>> step_params;
  for (NodeId loss : losses) {
    NodeSet ancestors{loss};
    for (std::size_t i = index_of(loss) + 1; i-- > 0;) {
      if (!ancestors.contains(node_id(i))) continue;
      for (NodeId in : g.desc(node_id(i)).inputs) ancestors.insert(in);
    }
    NodeSet mine;
    std::set_intersection(ancestors.begin(), ancestors.end(), trainable.begin(), trainable.end(),
                          std::inserter(mine, mine.end()));
    if (mine.empty()) throw SpecError("loss node '" + g.desc(loss).name + "' reaches no trainable node");
    step_params.push_back(params_of(g, mine));
    loss_trainable.push_back(std::move(mine));
  }

  TrainResult result;
  AdamState adam;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto order = epoch_order(train.size(), config.seed, config.stage, epoch);
    EpochMetrics m;
    m.stage = std::string(to_string(config.stage));
    m.epoch = epoch;
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::span<const std::size_t> idx(order.data() + b * config.batch, config.batch);
      g.set_labels(train.gather_labels(idx));
      g.forward(train.gather_images(idx));
      for (std::size_t k = 0; k < losses.size(); ++k) {
        const double l = g.loss(losses[k]);
        if (!std::isfinite(l)) throw InvariantError("non-finite loss at epoch " + std::to_string(epoch));
        loss_sum += l;
        BackwardTrace trace = g.backward(losses[k], loss_trainable[k]);
        if (check) check(trace);
        result.trace.add(g, trace);
        m.backbone_backward_flops += trace.flops_of(Component::Backbone);
        m.total_backward_flops += trace.total_flops();
        adam_step(step_params[k], adam, config.adam);
      }
    }
    m.loss = loss_sum / static_cast<double>(batches * losses.size());
    m.top1 = evaluate ? evaluate() : std::nullopt;
    m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    if (sink) sink(m);
    result.epochs.push_back(m);
  }
  if (evaluate) result.final_top1 = evaluate();
  return result;
}

std::vector<BnMode> save_bn_modes(const ModelGraph& g) {
  std::vector<BnMode> out;
  for (const NodeDesc& d : g.nodes()) out.push_back(g.bn_mode(d.id));
  return out;
}

void restore_bn_modes(ModelGraph& g, const std::vector<BnMode>& modes) {
  for (const NodeDesc& d : g.nodes()) g.set_bn_mode(d.id, modes[index_of(d.id)]);
}

std::vector<NodeId> forbidden_in(const BackwardTrace& trace, const std::vector<Component>& components) {
  std::vector<NodeId> out;
  for (const auto& e : trace.entries) {
    if (std::find(components.begin(), components.end(), e.component) != components.end()) out.push_back(e.id);
  }
  return out;
}

TraceCheck exclusion_check(const ModelGraph& g, std::vector<Component> components, std::string stage) {
  return [&g, components, stage](const BackwardTrace& trace) {
    const auto bad = forbidden_in(trace, components);
    if (!bad.empty()) {
      const NodeDesc& d = g.desc(bad.front());
      throw InvariantError(stage + ": backward trace visited " + std::string(to_string(d.component)) + " node '" +
                           d.name + "' (" + std::to_string(bad.size()) + " forbidden nodes in this step)");
    }
  };
}

void require_kind(const Model& model, std::initializer_list<ModelKind> kinds, const char* what) {
  if (std::find(kinds.begin(), kinds.end(), model.kind) == kinds.end()) {
    throw SpecError(std::string(what) + " cannot run on a '" + std::string(to_string(model.kind)) + "' model");
  }
}

}  // namespace

double evaluate_top1(Model& model, const Dataset& data, std::size_t batch) {
  if (data.size() == 0) throw SpecError("evaluation set is empty");
  ModelGraph& g = model.graph;
  const auto modes = save_bn_modes(g);
  for (const NodeDesc& d : g.nodes()) {
    if (d.op == OpKind::BatchNorm) g.set_bn_mode(d.id, BnMode::Eval);
  }
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t end = std::min(data.size(), start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    g.set_labels(data.gather_labels(idx));
    g.forward(data.gather_images(idx), {.update_running_stats = false});
    const Tensor<float>& logits = g.activation(model.logits);
    const std::size_t k = logits.shape().c;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const float* row = logits.ptr() + i * k;
      const auto pred = static_cast<std::int32_t>(std::max_element(row, row + k) - row);
      correct += pred == data.labels[idx[i]] ? 1 : 0;
    }
  }
  restore_bn_modes(g, modes);
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

std::vector<double> reconstruction_mse(AutoencoderModel& model, const Dataset& data, std::size_t batch) {
  if (data.size() == 0) throw SpecError("evaluation set is empty");
  ModelGraph& g = model.graph;
  std::vector<double> sums(model.losses.size(), 0.0);
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += batch) {
    const std::size_t end = std::min(data.size(), start + batch);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    g.set_labels(data.gather_labels(idx));
    g.forward(data.gather_images(idx), {.update_running_stats = false});
    for (std::size_t k = 0; k < model.losses.size(); ++k) {
      sums[k] += static_cast<double>(g.loss(model.losses[k])) * static_cast<double>(idx.size());
    }
  }
  for (double& s : sums) s /= static_cast<double>(data.size());
  return sums;
}

TrainResult pretrain(Model& model, const Dataset& train, const Dataset* test, const TrainConfig& config,
                     const MetricsSink& sink) {
  require_kind(model, {ModelKind::Backbone, ModelKind::FullFT}, "pretrain");
  if (config.stage != Stage::Pretrain) throw SpecError("pretrain needs a Pretrain-stage config");
  const Component comps[] = {Component::Backbone, Component::Classifier};
  model.trainable_components.assign(std::begin(comps), std::end(comps));
  const NodeSet trainable = model.graph.set_trainable_components(comps);
  model.apply_bn_modes();
  Evaluator eval;
  if (test) eval = [&] { return std::optional<double>(evaluate_top1(model, *test, config.eval_batch)); };
  return train_loop(model.graph, {model.loss}, trainable, train, config, {}, eval, sink);
}

TrainResult train_autoencoders(AutoencoderModel& model, const Dataset& train, const TrainConfig& config,
                               const MetricsSink& sink) {
  if (config.stage != Stage::AETrain) throw SpecError("train_autoencoders needs an AETrain-stage config");
  if (model.losses.empty()) throw SpecError("model has no encoded attachment points to train");
  const Component comps[] = {Component::Encoder, Component::AuxDecoder};
  const NodeSet trainable = model.graph.set_trainable_components(comps);
  model.graph.set_bn_mode(Component::Backbone, BnMode::Eval);
  return train_loop(model.graph, model.losses, trainable, train, config,
                    exclusion_check(model.graph, {Component::Backbone}, "autoencoder training"), {}, sink);
}

TrainResult adapt(Model& model, const Dataset& train, const Dataset& test, const TrainConfig& config,
                  const MetricsSink& sink) {
  require_kind(model, {ModelKind::Udta}, "adapt");
  if (config.stage != Stage::Adapt) throw SpecError("adapt needs an Adapt-stage config");
  model.trainable_components = {Component::Adapter, Component::Classifier};
  if (config.joint_encoder) model.trainable_components.push_back(Component::Encoder);
  const NodeSet trainable = model.graph.set_trainable_components(model.trainable_components);
  model.apply_bn_modes();
  TraceCheck check = config.joint_encoder
                         ? exclusion_check(model.graph, {Component::Backbone}, "adaptation")
                         : exclusion_check(model.graph, {Component::Backbone, Component::Encoder}, "adaptation");
  Evaluator eval = [&] { return std::optional<double>(evaluate_top1(model, test, config.eval_batch)); };
  return train_loop(model.graph, {model.loss}, trainable, train, config, check, eval, sink);
}

TrainResult run_baseline_adaptation(Model& model, const Dataset& train, const Dataset& test,
                                    const TrainConfig& config, const MetricsSink& sink) {
  require_kind(model, {ModelKind::TopFT, ModelKind::FullFT, ModelKind::ModelPatch, ModelKind::ResidualAdapter},
               "baseline adaptation");
  if (config.stage != Stage::Adapt) throw SpecError("baseline adaptation needs an Adapt-stage config");
  const NodeSet trainable = model.graph.set_trainable_components(model.trainable_components);
  model.apply_bn_modes();
  Evaluator eval = [&] { return std::optional<double>(evaluate_top1(model, test, config.eval_batch)); };
  return train_loop(model.graph, {model.loss}, trainable, train, config, {}, eval, sink);
}

}  // namespace udta
