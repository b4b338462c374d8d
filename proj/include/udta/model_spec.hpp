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

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace udta {

// One row of the backbone block table: `repeats` inverted-residual blocks with
// expansion `expansion`; only the first uses `stride`.
struct StageSpec {
  int expansion = 6;
  int out_channels = 0;
  int repeats = 1;
  int stride = 1;

  friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

// Candidate adapter attachment: the output of backbone stage `stage`. Encoded
// taps go through a 1x1 encoder reducing channels by `encoder_reduction`;
// low-dimensional taps feed the thin block directly.
struct TapSpec {
  int stage = 0;
  bool encode = true;

  friend bool operator==(const TapSpec&, const TapSpec&) = default;
};

enum class MergeRule { Add, Concat };

struct ModelSpec {
  std::string name;
  int version = 1;
  int input_resolution = 224;
  int input_channels = 3;
  double width_scale = 1.0;
  int stem_channels = 32;
  int stem_stride = 2;
  std::vector<StageSpec> stages;
  int head_channels = 1280;
  int classes = 100;

  int encoder_reduction = 2;  // d
  int thin_expansion = 6;     // u
  int thin_blocks = 3;        // B; the top B taps are used
  std::vector<TapSpec> taps;  // bottom to top
  MergeRule adapter_merge = MergeRule::Add;
  MergeRule classifier_merge = MergeRule::Concat;

  // Channel count after width scaling: nearest multiple of 8, minimum 8.
  int scaled(int channels) const;
  std::vector<TapSpec> active_taps() const;

  // Throws SpecError describing the first violated constraint.
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

// MobileNetV2 at 224x224 with the three-block adapter at the 14x14x96,
// 7x7x160 and 7x7x320 stage outputs.
ModelSpec full_spec();
// Quarter-width, 32x32 variant used for training runs on a workstation CPU.
ModelSpec desk_spec();

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

// Loads and validates a spec file. A spec named like the full-size reference
// is additionally checked row by row against the hard-coded reference shapes.
ModelSpec load_model_spec(const std::filesystem::path& path);
void save_model_spec(const ModelSpec& spec, const std::filesystem::path& path);

// Resolves "full", "desk" or a path to a JSON file.
ModelSpec resolve_model_spec(const std::string& name_or_path);

// Per-stage output (channels, spatial extent) of a ModelSpec.
struct StageShape {
  int channels;
  int extent;
};
std::vector<StageShape> stage_shapes(const ModelSpec& spec);

// Throws SpecError if the full-size spec deviates from the reference tables.
void check_reference_tables(const ModelSpec& spec);

}  // namespace udta
