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

// Builders that turn a ModelSpec into a component-tagged ModelGraph.
//
// Node names are stable across model kinds ("backbone.s3.b1.dw",
// "encoder.s5", "classifier.fc", ...) so checkpoints written by one stage can
// be loaded into the graph of the next.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "udta/graph.hpp"
#include "udta/model_spec.hpp"

namespace udta {

struct BlockSignature {
  Shape in;
  Shape out;
  int stride = 1;
  int expansion = 1;
};

// Conv / BN initialisation draws from one generator in build order, so a
// (spec, kind, seed) triple always yields the same weights.
class Initializer {
 public:
  // With random == false every weight is zero; used for cost analysis only.
  explicit Initializer(std::uint64_t seed, bool random = true) : rng_(seed), random_(random) {}

  // He-normal conv weights with fan_in = c_in * kh * kw.
  Tensor<float> conv(std::size_t c_out, std::size_t c_in, std::size_t k);
  Tensor<float> depthwise(std::size_t channels);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Tensor<float> uniform_fan_in(Shape shape, std::size_t fan_in);

 private:
  std::mt19937_64 rng_;
  bool random_ = true;
};

struct BlockOutput {
  NodeId out{};
  BlockSignature signature;
};

// Residual-adapter hook: when set, every depthwise conv gets a parallel
// channel-wise scale+bias followed by BN, summed into the depthwise output.
struct IrBlockOptions {
  bool residual_adapter = false;
};

// 1x1 expand (in -> t*in) + BN + ReLU6, depthwise 3x3 (stride) + BN + ReLU6,
// 1x1 project + BN; skip-add when stride == 1 and in == out.
BlockOutput build_ir_block(ModelGraph& g, NodeId input, int out_c, int t, int stride, const std::string& prefix,
                           Component component, Initializer& init, const IrBlockOptions& options = {});

struct BackboneHandles {
  NodeId input{};
  std::vector<NodeId> stage_outputs;
  std::vector<BlockSignature> blocks;
  NodeId pooled{};  // (1280) feature at full spec
};

BackboneHandles build_backbone(ModelGraph& g, const ModelSpec& spec, Initializer& init,
                               const IrBlockOptions& options = {});

// Linear 1x1 conv in_c -> in_c/d (no bias), tagged Encoder.
NodeId build_encoder(ModelGraph& g, NodeId input, int d, const std::string& name, Initializer& init);

struct AutoencoderHandles {
  NodeId encoder{};
  NodeId decoder{};
};
// Encoder followed by a linear decoder in_c/d -> in_c (with bias), tagged AuxDecoder.
AutoencoderHandles build_autoencoder(ModelGraph& g, NodeId input, int d, const std::string& name,
                                     Initializer& init);

// IR-shaped block with expansion u, tagged Adapter.
BlockOutput build_thin_block(ModelGraph& g, NodeId input, int out_c, int u, int stride, const std::string& prefix,
                             Initializer& init);

struct UdtaHandles {
  std::vector<int> tap_stages;
  std::vector<NodeId> encoders;     // one per encoded tap
  std::vector<NodeId> thin_blocks;  // block outputs
  std::vector<Shape> thin_inputs;   // per-sample input shape of each thin block
  NodeId pooled{};
};

// Attaches the top-B taps of spec: thin block i consumes the tap feature
// (encoded if the tap is marked so) added to thin block i-1's output. Throws
// InvariantError if the result has any Adapter/Encoder -> Backbone edge.
UdtaHandles attach_udta(ModelGraph& g, const BackboneHandles& backbone, const ModelSpec& spec, Initializer& init);

// concat(backbone pooled, adapter pooled) -> linear K. Without an adapter
// feature the head is a plain linear layer on the backbone feature.
NodeId build_classifier(ModelGraph& g, NodeId backbone_feat, std::optional<NodeId> adapter_feat, int classes,
                        Initializer& init);

enum class ModelKind { Backbone, Udta, TopFT, FullFT, ModelPatch, ResidualAdapter };

std::string_view to_string(ModelKind kind);
// Accepts "backbone", "udta", "topft", "fullft", "mp"/"model_patch", "ra"/"residual_adapter".
ModelKind model_kind_from_string(std::string_view name);

struct BuildOptions {
  std::uint64_t seed = 0;
  int classes = 0;  // 0: use spec.classes
  bool joint_encoder = false;
  // ModelPatch only: BN nodes of stages below this index stay frozen Backbone.
  int patch_from_stage = 0;
  bool random_init = true;
};

struct Model {
  ModelKind kind = ModelKind::Backbone;
  ModelGraph graph;
  BackboneHandles backbone;
  std::optional<UdtaHandles> udta;
  NodeId logits{};
  NodeId loss{};
  std::vector<Component> trainable_components;

  NodeSet trainable() const { return graph.trainable_set(); }
  // Backbone BN runs on batch statistics only when the backbone itself trains.
  void apply_bn_modes();
};

// Backbone: backbone + linear head, all trainable (pre-training).
// FullFT: same topology, all trainable. TopFT: classifier only. ModelPatch:
// backbone BN retagged Patch and trainable with the classifier.
// ResidualAdapter: parallel channel-wise adapters on every depthwise conv.
// Udta: backbone + encoders + thin blocks + concat classifier; Adapter and
// Classifier trainable (plus Encoder with joint_encoder).
Model build_model(const ModelSpec& spec, ModelKind kind, const BuildOptions& options = {});
Model build_baseline(const ModelSpec& spec, ModelKind kind, int classes, std::uint64_t seed = 0);

struct AutoencoderModel {
  ModelGraph graph;
  BackboneHandles backbone;
  std::vector<int> tap_stages;
  std::vector<AutoencoderHandles> autoencoders;
  std::vector<NodeId> losses;  // MSE(decoder, tap activation), one per autoencoder
};

// Backbone plus one autoencoder per encoded active tap; only Encoder and
// AuxDecoder nodes are trainable.
AutoencoderModel build_autoencoder_model(const ModelSpec& spec, std::uint64_t seed = 0);

}  // namespace udta
