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

#include "udta/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "udta/binary_io.hpp"
#include "udta/errors.hpp"

namespace udta {

namespace {

constexpr std::uint32_t kVersion = 1;

enum Stream : std::uint32_t { kTemplate = 1, kPatch = 2, kTrain = 3, kTest = 4 };

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t tag, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag,
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Sum of a few low-frequency plane waves per channel, rescaled to [0.25, 0.75].
std::vector<float> make_template(const SynthSpec& spec, int t) {
  const auto res = static_cast<std::size_t>(spec.resolution);
  const auto plane = res * res;
  std::vector<float> out(static_cast<std::size_t>(spec.channels) * plane);
  auto rng = stream(spec.template_seed, kTemplate, static_cast<std::uint64_t>(t));
  std::uniform_real_distribution<double> freq(0.3, 2.0);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> weight(0.5, 1.0);
  for (int c = 0; c < spec.channels; ++c) {
    double fx[4], fy[4], ph[4], wt[4];
    for (int j = 0; j < 4; ++j) {
      fx[j] = freq(rng) * (rng() % 2 ? 1.0 : -1.0);
      fy[j] = freq(rng);
      ph[j] = phase(rng);
      wt[j] = weight(rng);
    }
    float* dst = out.data() + static_cast<std::size_t>(c) * plane;
    for (std::size_t y = 0; y < res; ++y) {
      for (std::size_t x = 0; x < res; ++x) {
        double v = 0;
        for (int j = 0; j < 4; ++j) {
          v += wt[j] * std::sin(2.0 * std::numbers::pi * (fx[j] * static_cast<double>(x) +
                                                          fy[j] * static_cast<double>(y)) /
                                    static_cast<double>(res) +
                                ph[j]);
        }
        dst[y * res + x] = static_cast<float>(v);
      }
    }
    const auto [lo, hi] = std::minmax_element(dst, dst + plane);
    const float span = std::max(*hi - *lo, 1e-6f);
    const float low = *lo;
    for (std::size_t p = 0; p < plane; ++p) dst[p] = 0.25f + 0.5f * (dst[p] - low) / span;
  }
  return out;
}

struct ClassPatch {
  int y = 0;
  int x = 0;
  std::vector<float> pattern;  // channels * patch * patch, values in [-1, 1]
};

ClassPatch make_patch(const SynthSpec& spec, int k) {
  ClassPatch p;
  auto rng = stream(spec.template_seed, kPatch, static_cast<std::uint64_t>(k));
  const int lo = spec.jitter;
  const int hi = spec.resolution - spec.patch_size - spec.jitter;
  std::uniform_int_distribution<int> pos(lo, std::max(lo, hi));
  p.y = pos(rng);
  p.x = pos(rng);
  const auto ps = static_cast<std::size_t>(spec.patch_size);
  p.pattern.resize(static_cast<std::size_t>(spec.channels) * ps * ps);
  std::uniform_real_distribution<float> sign(-1.0f, 1.0f);
  // Smooth bump times a per-channel random sign so patches differ in both place and colour.
  for (int c = 0; c < spec.channels; ++c) {
    const float s = sign(rng) < 0 ? -1.0f : 1.0f;
    const float tilt = sign(rng);
    for (std::size_t y = 0; y < ps; ++y) {
      for (std::size_t x = 0; x < ps; ++x) {
        const double u = (static_cast<double>(y) + 0.5) / static_cast<double>(ps) - 0.5;
        const double v = (static_cast<double>(x) + 0.5) / static_cast<double>(ps) - 0.5;
        const double bump = std::cos(std::numbers::pi * u) * std::cos(std::numbers::pi * v);
        const double grad = 0.5 + 0.5 * tilt * (u - v);
        p.pattern[(static_cast<std::size_t>(c) * ps + y) * ps + x] = static_cast<float>(s * bump * grad);
      }
    }
  }
  return p;
}

void render(const SynthSpec& spec, const std::vector<float>& tmpl, const ClassPatch& patch, int dy, int dx,
            float* dst) {
  const auto res = static_cast<std::size_t>(spec.resolution);
  const auto ps = static_cast<std::size_t>(spec.patch_size);
  std::copy(tmpl.begin(), tmpl.end(), dst);
  const auto amp = static_cast<float>(spec.amplitude);
  for (int c = 0; c < spec.channels; ++c) {
    float* plane = dst + static_cast<std::size_t>(c) * res * res;
    for (std::size_t y = 0; y < ps; ++y) {
      const int iy = patch.y + dy + static_cast<int>(y);
      if (iy < 0 || iy >= spec.resolution) continue;
      for (std::size_t x = 0; x < ps; ++x) {
        const int ix = patch.x + dx + static_cast<int>(x);
        if (ix < 0 || ix >= spec.resolution) continue;
        plane[static_cast<std::size_t>(iy) * res + static_cast<std::size_t>(ix)] +=
            amp * patch.pattern[(static_cast<std::size_t>(c) * ps + y) * ps + x];
      }
    }
  }
}

Dataset make_split(const SynthSpec& spec, const std::vector<std::vector<float>>& templates,
                   const std::vector<ClassPatch>& patches, int per_class, Stream tag, const char* name) {
  const auto res = static_cast<std::size_t>(spec.resolution);
  const auto ch = static_cast<std::size_t>(spec.channels);
  const std::size_t n = static_cast<std::size_t>(spec.classes) * static_cast<std::size_t>(per_class);
  Dataset d;
  d.classes = spec.classes;
  d.split = name;
  d.images = Tensor<float>(Shape{n, ch, res, res});
  d.labels.resize(n);
  const std::size_t per_sample = ch * res * res;
  auto rng = stream(spec.seed, tag, 0);
  std::normal_distribution<float> noise(0.0f, static_cast<float>(spec.noise_sigma));
  std::uniform_int_distribution<int> shift(-spec.jitter, spec.jitter);
  // Samples are interleaved by class so any prefix is class-balanced.
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
    d.labels[i] = k;
    float* dst = d.images.ptr() + i * per_sample;
    const int dy = shift(rng);
    const int dx = shift(rng);
    render(spec, templates[static_cast<std::size_t>(k % spec.templates)], patches[static_cast<std::size_t>(k)], dy,
           dx, dst);
    if (spec.noise_sigma > 0) {
      for (std::size_t p = 0; p < per_sample; ++p) dst[p] += noise(rng);
    }
    for (std::size_t p = 0; p < per_sample; ++p) dst[p] = std::clamp(dst[p], 0.0f, 1.0f);
  }
  return d;
}

}  // namespace

void SynthSpec::validate() const {
  if (classes < 2) throw SpecError("synthetic data needs K >= 2 classes");
  if (train_per_class < 1 || test_per_class < 1) throw SpecError("samples per class must be >= 1");
  if (resolution < 4 || channels < 1) throw SpecError("resolution must be >= 4 and channels >= 1");
  if (templates < 1 || templates >= classes) throw SpecError("template count must be in [1, K)");
  if (!(amplitude > 0.0) || amplitude > 0.5) throw SpecError("amplitude must lie in (0, 0.5]");
  if (noise_sigma < 0.0) throw SpecError("noise sigma must be >= 0");
  if (patch_size < 1 || jitter < 0 || patch_size + 2 * jitter > resolution) {
    throw SpecError("patch size plus jitter must fit in the image");
  }
}

nlohmann::json to_json(const SynthSpec& s) {
  return {{"classes", s.classes},       {"train_per_class", s.train_per_class},
          {"test_per_class", s.test_per_class}, {"resolution", s.resolution},
          {"channels", s.channels},     {"templates", s.templates},
          {"amplitude", s.amplitude},   {"noise_sigma", s.noise_sigma},
          {"patch_size", s.patch_size}, {"jitter", s.jitter},
          {"seed", s.seed},             {"template_seed", s.template_seed}};
}

SynthSpec synth_spec_from_json(const nlohmann::json& j) {
  SynthSpec s;
  try {
    s.classes = j.value("classes", s.classes);
    s.train_per_class = j.value("train_per_class", s.train_per_class);
    s.test_per_class = j.value("test_per_class", s.test_per_class);
    s.resolution = j.value("resolution", s.resolution);
    s.channels = j.value("channels", s.channels);
    s.templates = j.value("templates", s.templates);
    s.amplitude = j.value("amplitude", s.amplitude);
    s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
    s.patch_size = j.value("patch_size", s.patch_size);
    s.jitter = j.value("jitter", s.jitter);
    s.seed = j.value("seed", s.seed);
    s.template_seed = j.value("template_seed", s.template_seed);
  } catch (const nlohmann::json::exception& e) {
    throw SpecError(std::string("malformed synthetic data spec: ") + e.what());
  }
  return s;
}

Tensor<float> Dataset::gather_images(std::span<const std::size_t> indices) const {
  const Shape& s = images.shape();
  const std::size_t per = s.per_sample();
  Tensor<float> out(s.with_batch(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= s.n) throw DimensionError("sample index out of range");
    std::copy_n(images.ptr() + indices[i] * per, per, out.ptr() + i * per);
  }
  return out;
}

std::vector<std::int32_t> Dataset::gather_labels(std::span<const std::size_t> indices) const {
  std::vector<std::int32_t> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(labels.at(i));
  return out;
}

SplitDatasets generate(const SynthSpec& spec) {
  spec.validate();
  std::vector<std::vector<float>> templates;
  for (int t = 0; t < spec.templates; ++t) templates.push_back(make_template(spec, t));
  std::vector<ClassPatch> patches;
  for (int k = 0; k < spec.classes; ++k) patches.push_back(make_patch(spec, k));
  return {make_split(spec, templates, patches, spec.train_per_class, kTrain, "train"),
          make_split(spec, templates, patches, spec.test_per_class, kTest, "test")};
}

Tensor<float> class_prototype(const SynthSpec& spec, int k) {
  spec.validate();
  if (k < 0 || k >= spec.classes) throw SpecError("class index out of range");
  const auto res = static_cast<std::size_t>(spec.resolution);
  Tensor<float> out(Shape{1, static_cast<std::size_t>(spec.channels), res, res});
  render(spec, make_template(spec, k % spec.templates), make_patch(spec, k), 0, 0, out.ptr());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(out[i], 0.0f, 1.0f);
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write dataset " + path.string());
  const Shape& s = data.images.shape();
  if (s.n != data.labels.size()) throw DimensionError("dataset has " + std::to_string(s.n) + " images but " +
                                                      std::to_string(data.labels.size()) + " labels");
  out.write("UDTD", 4);
  binio::write_u32(out, kVersion);
  for (std::size_t v : {static_cast<std::size_t>(data.classes), s.n, s.c, s.h, s.w}) {
    binio::write_u32(out, static_cast<std::uint32_t>(v));
  }
  for (std::int32_t l : data.labels) binio::write_u32(out, static_cast<std::uint32_t>(l));
  binio::write_f32s(out, data.images.ptr(), data.images.size());
  if (!out) throw IoError("write failed for dataset " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  const std::string file = path.string();
  binio::expect_magic(in, "UDTD", file);
  const std::uint32_t version = binio::read_u32(in, "version");
  if (version != kVersion) {
    throw IoError(file + ": unsupported dataset version " + std::to_string(version) + ", expected " +
                  std::to_string(kVersion));
  }
  Dataset d;
  d.classes = static_cast<int>(binio::read_u32(in, "class count"));
  const std::size_t n = binio::read_u32(in, "sample count");
  const std::size_t c = binio::read_u32(in, "channels");
  const std::size_t h = binio::read_u32(in, "height");
  const std::size_t w = binio::read_u32(in, "width");
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t l = binio::read_u32(in, "label " + std::to_string(i) + " of " + std::to_string(n));
    if (l >= static_cast<std::uint32_t>(d.classes)) {
      throw IoError(file + ": label " + std::to_string(l) + " outside [0, " + std::to_string(d.classes) + ")");
    }
    d.labels[i] = static_cast<std::int32_t>(l);
  }
  d.images = Tensor<float>(Shape{n, c, h, w});
  binio::read_f32s(in, d.images.ptr(), d.images.size(), file + " pixel payload");
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(file + ": trailing bytes after pixel payload");
  return d;
}

}  // namespace udta
