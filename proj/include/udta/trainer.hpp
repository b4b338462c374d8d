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

// Three-stage training: backbone pre-training, autoencoder training on frozen
// backbone activations, and adaptation of the thin adapter plus classifier.

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "udta/architectures.hpp"
#include "udta/optimizer.hpp"
#include "udta/synth_data.hpp"

namespace udta {

enum class Stage { Pretrain, AETrain, Adapt };

std::string_view to_string(Stage stage);

struct TrainConfig {
  Stage stage = Stage::Adapt;
  int epochs = 30;
  std::size_t batch = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;
  bool joint_encoder = false;
  std::size_t eval_batch = 128;

  // Stage defaults: lr 0.01 for pre-training, 0.001 otherwise; 30 epochs, batch 32.
  static TrainConfig defaults(Stage stage);
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);

struct EpochMetrics {
  std::string stage;
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> top1;
  std::uint64_t backbone_backward_flops = 0;
  std::uint64_t total_backward_flops = 0;
  double wall_ms = 0.0;

  nlohmann::json to_json() const;
};

// Aggregate of every BackwardTrace seen during a run.
struct TraceSummary {
  std::size_t steps = 0;
  NodeSet visited;
  std::map<Component, std::uint64_t> flops;
  std::map<Component, std::size_t> nodes;  // distinct visited nodes per component
  std::size_t min_backbone_nodes_per_step = 0;
  std::size_t max_backbone_nodes_per_step = 0;

  void add(const GraphTopology& graph, const BackwardTrace& trace);
  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  TraceSummary trace;
  std::optional<double> final_top1;
};

using MetricsSink = std::function<void(const EpochMetrics&)>;

// Minimises cross-entropy over every Backbone and Classifier parameter with
// backbone BN on batch statistics.
TrainResult pretrain(Model& model, const Dataset& train, const Dataset* test, const TrainConfig& config,
                     const MetricsSink& sink = {});

// One MSE autoencoder per encoded attachment point, trained on frozen
// backbone activations. Any Backbone node in a trace raises InvariantError.
TrainResult train_autoencoders(AutoencoderModel& model, const Dataset& train, const TrainConfig& config,
                               const MetricsSink& sink = {});

// Trains Adapter and Classifier (plus Encoder in joint mode) of a UDTA model.
// A trace containing a Backbone node, or an Encoder node outside joint mode,
// raises InvariantError.
TrainResult adapt(Model& model, const Dataset& train, const Dataset& test, const TrainConfig& config,
                  const MetricsSink& sink = {});

// Same loop with the baseline's own trainable set and no exclusion check.
TrainResult run_baseline_adaptation(Model& model, const Dataset& train, const Dataset& test,
                                    const TrainConfig& config, const MetricsSink& sink = {});

// Top-1 accuracy with every BN on running statistics; BN modes are restored.
double evaluate_top1(Model& model, const Dataset& data, std::size_t batch = 128);

// Mean reconstruction MSE of each autoencoder over `data`.
std::vector<double> reconstruction_mse(AutoencoderModel& model, const Dataset& data, std::size_t batch = 128);

}  // namespace udta
