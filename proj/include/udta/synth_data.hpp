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

// Seeded synthetic fine-grained classification data. Several classes share
// one smooth template and differ only by a small localized patch, so a model
// has to resolve local detail rather than global appearance.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "udta/tensor.hpp"

namespace udta {

struct SynthSpec {
  int classes = 8;
  int train_per_class = 64;
  int test_per_class = 32;
  int resolution = 32;
  int channels = 3;
  int templates = 2;
  double amplitude = 0.25;  // patch strength as a fraction of the pixel range
  double noise_sigma = 0.1;
  int patch_size = 8;       // side of the class patch in pixels
  int jitter = 2;           // max per-sample patch offset in pixels
  std::uint64_t seed = 0;
  std::uint64_t template_seed = 0;  // templates are drawn from this seed only

  // Throws SpecError on the first violated constraint.
  void validate() const;
};

nlohmann::json to_json(const SynthSpec& spec);
SynthSpec synth_spec_from_json(const nlohmann::json& j);

struct Dataset {
  Tensor<float> images;  // (n, c, h, w), values in [0, 1]
  std::vector<std::int32_t> labels;
  int classes = 0;
  std::string split;

  std::size_t size() const { return labels.size(); }
  Tensor<float> gather_images(std::span<const std::size_t> indices) const;
  std::vector<std::int32_t> gather_labels(std::span<const std::size_t> indices) const;
};

struct SplitDatasets {
  Dataset train;
  Dataset test;
};

SplitDatasets generate(const SynthSpec& spec);

// Noise-free image of class k, the centre of that class's samples.
Tensor<float> class_prototype(const SynthSpec& spec, int k);

// Format "UDTD": magic, version u32, K n c h w (u32), n labels (u32), n*c*h*w f32.
void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

}  // namespace udta
