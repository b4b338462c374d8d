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

// End-to-end desk-scale runs: data generation, backbone pre-training on the
// source task, autoencoder training, then UDTA and baseline adaptation on the
// target task over several seeds.
//
// Output layout under the run directory:
//   data/{source,target}_{train,test}.udtd
//   checkpoints/{backbone,encoders}.udtc, checkpoints/<kind>_s<seed>.udtc
//   metrics/<run>.jsonl      one EpochMetrics object per line
//   traces/<run>.json        aggregated TraceSummary
//   summary.json

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "udta/trainer.hpp"

namespace udta {

struct PipelineConfig {
  std::string model_spec = "desk";  // "full", "desk" or a JSON path
  SynthSpec source;
  SynthSpec target;
  TrainConfig pretrain = TrainConfig::defaults(Stage::Pretrain);
  TrainConfig train_ae = TrainConfig::defaults(Stage::AETrain);
  TrainConfig adapt = TrainConfig::defaults(Stage::Adapt);
  std::vector<std::uint64_t> seeds{100, 101, 102};
  std::vector<std::string> baselines{"topft", "fullft"};
  std::size_t workers = 0;  // 0: hardware concurrency

  // Stage seeds come from pretrain.seed and train_ae.seed; adapt.seed is
  // replaced by each entry of `seeds`.
  static PipelineConfig defaults();
  void validate() const;
};

nlohmann::json to_json(const PipelineConfig& config);
// Fields present in `j` override those of `base`; unknown keys are a SpecError.
PipelineConfig merge_config(PipelineConfig base, const nlohmann::json& j);

// Accepts every ModelKind name except "backbone"/"udta", plus "scratch"
// (FullFT without the pre-trained backbone).
bool is_baseline_name(const std::string& kind);

struct RunRecord {
  std::string kind;
  std::uint64_t seed = 0;
  double top1 = 0.0;
  std::uint64_t backbone_backward_flops = 0;
  std::uint64_t total_backward_flops = 0;
  std::size_t steps = 0;

  nlohmann::json to_json() const;
};

struct AutoencoderReport {
  std::vector<double> random_mse;
  std::vector<double> trained_mse;

  nlohmann::json to_json() const;
};

struct PipelineSummary {
  double pretrain_top1 = 0.0;
  AutoencoderReport autoencoders;
  std::vector<RunRecord> runs;

  double median_top1(const std::string& kind) const;
  nlohmann::json to_json() const;
};

// Each stage reads its inputs from and writes its outputs to `dir`.
void stage_gen_data(const PipelineConfig& config, const std::filesystem::path& dir);
double stage_pretrain(const PipelineConfig& config, const std::filesystem::path& dir);
AutoencoderReport stage_train_ae(const PipelineConfig& config, const std::filesystem::path& dir);
RunRecord stage_adapt(const PipelineConfig& config, const std::filesystem::path& dir, std::uint64_t seed);
RunRecord stage_baseline(const PipelineConfig& config, const std::filesystem::path& dir, const std::string& kind,
                         std::uint64_t seed);

// Runs `kinds` x `config.seeds` on up to `config.workers` threads. Records
// come back in (kind, seed) order regardless of scheduling.
std::vector<RunRecord> fan_out(const PipelineConfig& config, const std::filesystem::path& dir,
                               const std::vector<std::string>& kinds);

PipelineSummary run_pipeline(const PipelineConfig& config, const std::filesystem::path& dir);

}  // namespace udta
