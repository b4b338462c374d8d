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

#include "udta/architectures.hpp"

#include <cctype>
#include <cmath>

#include "udta/errors.hpp"

namespace udta {

Tensor<float> Initializer::conv(std::size_t c_out, std::size_t c_in, std::size_t k) {
  Tensor<float> w(Shape{c_out, c_in, k, k});
  if (!random_) return w;
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(c_in * k * k)));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng_);
  return w;
}

Tensor<float> Initializer::depthwise(std::size_t channels) {
  Tensor<float> w(Shape{channels, 1, 3, 3});
  if (!random_) return w;
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / 9.0f));
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng_);
  return w;
}

Tensor<float> Initializer::uniform_fan_in(Shape shape, std::size_t fan_in) {
  Tensor<float> w(shape);
  if (!random_) return w;
  const float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = dist(rng_);
  return w;
}

namespace {

KernelParams<float> bn_params(std::size_t channels, float gamma = 1.0f) {
  KernelParams<float> p;
  p.bn = BnState<float>::identity(channels);
  if (gamma != 1.0f) p.bn->gamma.fill(gamma);
  return p;
}

KernelParams<float> weight_only(Tensor<float> w) {
  KernelParams<float> p;
  p.weight = std::move(w);
  return p;
}

std::size_t channels_of(const ModelGraph& g, NodeId id) { return g.desc(id).out_shape.c; }

// conv -> BN (-> ReLU6); returns the last node.
NodeId conv_bn(ModelGraph& g, OpKind op, NodeId input, Tensor<float> weight, int stride, const std::string& name,
               Component component, bool relu) {
  const std::size_t c = weight.shape().n;
  NodeId x = g.add_node(op, name, {input}, component, weight_only(std::move(weight)), stride);
  x = g.add_node(OpKind::BatchNorm, name + "_bn", {x}, component, bn_params(c));
  if (relu) x = g.add_node(OpKind::ReLU6, name + "_relu", {x}, component);
  return x;
}

BlockOutput inverted_residual(ModelGraph& g, NodeId input, int out_c, int t, int stride, const std::string& prefix,
                              Component component, Initializer& init, bool residual_adapter) {
  if (t < 1) throw SpecError(prefix + ": expansion must be >= 1");
  if (out_c < 1) throw SpecError(prefix + ": output channels must be >= 1");
  const Shape in_shape = g.desc(input).out_shape;
  const std::size_t in_c = in_shape.c;
  const std::size_t hidden = in_c * static_cast<std::size_t>(t);
  const auto oc = static_cast<std::size_t>(out_c);

  NodeId x = conv_bn(g, OpKind::Conv1x1, input, init.conv(hidden, in_c, 1), 1, prefix + ".expand", component, true);
  const NodeId dw_in = x;
  NodeId dw = g.add_node(OpKind::Depthwise3x3, prefix + ".dw", {dw_in}, component,
                         weight_only(init.depthwise(hidden)), stride);
  if (residual_adapter) {
    KernelParams<float> affine;
    affine.weight = Tensor<float>(Shape{hidden, 1, 1, 1}, 1.0f);
    affine.bias = Tensor<float>(Shape{hidden, 1, 1, 1});
    NodeId r = g.add_node(OpKind::ChannelAffine, prefix + ".ra", {dw_in}, Component::Adapter, std::move(affine),
                          stride);
    r = g.add_node(OpKind::BatchNorm, prefix + ".ra_bn", {r}, Component::Adapter, bn_params(hidden, 0.0f));
    dw = g.add_node(OpKind::Add, prefix + ".ra_add", {dw, r}, Component::Adapter);
  }
  x = g.add_node(OpKind::BatchNorm, prefix + ".dw_bn", {dw}, component, bn_params(hidden));
  x = g.add_node(OpKind::ReLU6, prefix + ".dw_relu", {x}, component);
  x = conv_bn(g, OpKind::Conv1x1, x, init.conv(oc, hidden, 1), 1, prefix + ".project", component, false);
  if (stride == 1 && in_c == oc) x = g.add_node(OpKind::Add, prefix + ".residual", {input, x}, component);
  return {x, BlockSignature{in_shape, g.desc(x).out_shape, stride, t}};
}

}  // namespace

BlockOutput build_ir_block(ModelGraph& g, NodeId input, int out_c, int t, int stride, const std::string& prefix,
                           Component component, Initializer& init, const IrBlockOptions& options) {
  return inverted_residual(g, input, out_c, t, stride, prefix, component, init, options.residual_adapter);
}

BackboneHandles build_backbone(ModelGraph& g, const ModelSpec& spec, Initializer& init,
                               const IrBlockOptions& options) {
  BackboneHandles h;
  const auto res = static_cast<std::size_t>(spec.input_resolution);
  h.input = g.add_input("input", Shape{1, static_cast<std::size_t>(spec.input_channels), res, res});
  const auto stem_c = static_cast<std::size_t>(spec.scaled(spec.stem_channels));
  NodeId x = conv_bn(g, OpKind::Conv3x3, h.input,
                     init.conv(stem_c, static_cast<std::size_t>(spec.input_channels), 3), spec.stem_stride,
                     "backbone.stem", Component::Backbone, true);
  for (std::size_t s = 0; s < spec.stages.size(); ++s) {
    const StageSpec& st = spec.stages[s];
    for (int r = 0; r < st.repeats; ++r) {
      const std::string prefix = "backbone.s" + std::to_string(s) + ".b" + std::to_string(r);
      BlockOutput b = inverted_residual(g, x, spec.scaled(st.out_channels), st.expansion, r == 0 ? st.stride : 1,
                                        prefix, Component::Backbone, init, options.residual_adapter);
      x = b.out;
      h.blocks.push_back(b.signature);
    }
    h.stage_outputs.push_back(x);
  }
  const auto head_c = static_cast<std::size_t>(spec.scaled(spec.head_channels));
  x = conv_bn(g, OpKind::Conv1x1, x, init.conv(head_c, channels_of(g, x), 1), 1, "backbone.head",
              Component::Backbone, true);
  h.pooled = g.add_node(OpKind::GlobalAvgPool, "backbone.pool", {x}, Component::Backbone);
  return h;
}

NodeId build_encoder(ModelGraph& g, NodeId input, int d, const std::string& name, Initializer& init) {
  const std::size_t in_c = channels_of(g, input);
  if (d <= 1) throw SpecError(name + ": reduction factor d must be > 1");
  if (in_c % static_cast<std::size_t>(d) != 0) {
    throw SpecError(name + ": " + std::to_string(in_c) + " channels not divisible by d=" + std::to_string(d));
  }
  const std::size_t out_c = in_c / static_cast<std::size_t>(d);
  return g.add_node(OpKind::Conv1x1, name, {input}, Component::Encoder,
                    weight_only(init.uniform_fan_in(Shape{out_c, in_c, 1, 1}, in_c)));
}

AutoencoderHandles build_autoencoder(ModelGraph& g, NodeId input, int d, const std::string& name,
                                     Initializer& init) {
  AutoencoderHandles h;
  h.encoder = build_encoder(g, input, d, "encoder." + name, init);
  const std::size_t in_c = channels_of(g, input);
  const std::size_t code_c = channels_of(g, h.encoder);
  KernelParams<float> p;
  p.weight = init.uniform_fan_in(Shape{in_c, code_c, 1, 1}, code_c);
  p.bias = Tensor<float>(Shape{in_c, 1, 1, 1});
  h.decoder = g.add_node(OpKind::Conv1x1, "decoder." + name, {h.encoder}, Component::AuxDecoder, std::move(p));
  return h;
}

BlockOutput build_thin_block(ModelGraph& g, NodeId input, int out_c, int u, int stride, const std::string& prefix,
                             Initializer& init) {
  if (u <= 1) throw SpecError(prefix + ": thin-block expansion u must be > 1");
  return inverted_residual(g, input, out_c, u, stride, prefix, Component::Adapter, init, false);
}

UdtaHandles attach_udta(ModelGraph& g, const BackboneHandles& backbone, const ModelSpec& spec, Initializer& init) {
  UdtaHandles h;
  const auto taps = spec.active_taps();
  if (taps.empty()) throw SpecError("adapter needs at least one attachment point");

  // Feature entering each block: the raw or encoded tap activation.
  std::vector<NodeId> features;
  for (const TapSpec& tap : taps) {
    if (tap.stage < 0 || static_cast<std::size_t>(tap.stage) >= backbone.stage_outputs.size()) {
      throw SpecError("attachment point references missing stage " + std::to_string(tap.stage));
    }
    const NodeId src = backbone.stage_outputs[static_cast<std::size_t>(tap.stage)];
    h.tap_stages.push_back(tap.stage);
    if (tap.encode) {
      const NodeId e =
          build_encoder(g, src, spec.encoder_reduction, "encoder.s" + std::to_string(tap.stage), init);
      h.encoders.push_back(e);
      features.push_back(e);
    } else {
      features.push_back(src);
    }
  }

  std::optional<NodeId> prev;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    NodeId in = features[i];
    if (prev) {
      const Shape a = g.desc(*prev).out_shape;
      const Shape b = g.desc(in).out_shape;
      if (a != b) {
        throw SpecError("adapter merge at stage " + std::to_string(taps[i].stage) + ": thin-block output " +
                        a.str() + " vs feature " + b.str());
      }
      in = g.add_node(OpKind::Add, "adapter.merge" + std::to_string(i), {*prev, in}, Component::Adapter);
    }
    h.thin_inputs.push_back(g.desc(in).out_shape);
    const Shape here = g.desc(in).out_shape;
    int out_c = 0;
    int stride = 1;
    if (i + 1 < taps.size()) {
      const Shape next = g.desc(features[i + 1]).out_shape;
      out_c = static_cast<int>(next.c);
      if (next.h == here.h) {
        stride = 1;
      } else if (next.h == kernels::strided_extent(here.h, 2)) {
        stride = 2;
      } else {
        throw SpecError("attachment points " + here.str() + " and " + next.str() + " are not stride-compatible");
      }
    } else {
      out_c = static_cast<int>(channels_of(g, backbone.stage_outputs[static_cast<std::size_t>(taps[i].stage)]));
    }
    BlockOutput b =
        build_thin_block(g, in, out_c, spec.thin_expansion, stride, "adapter.t" + std::to_string(i), init);
    h.thin_blocks.push_back(b.out);
    prev = b.out;
  }
  h.pooled = g.add_node(OpKind::GlobalAvgPool, "adapter.pool", {*prev}, Component::Adapter);
  g.verify_unidirectional();
  return h;
}

NodeId build_classifier(ModelGraph& g, NodeId backbone_feat, std::optional<NodeId> adapter_feat, int classes,
                        Initializer& init) {
  if (classes < 2) throw SpecError("classifier needs K >= 2 classes");
  NodeId feat = backbone_feat;
  if (adapter_feat && channels_of(g, *adapter_feat) > 0) {
    feat = g.add_node(OpKind::Concat, "classifier.concat", {backbone_feat, *adapter_feat}, Component::Classifier);
  }
  const std::size_t in = g.desc(feat).out_shape.per_sample();
  const auto k = static_cast<std::size_t>(classes);
  KernelParams<float> p;
  p.weight = init.uniform_fan_in(Shape{k, in, 1, 1}, in);
  p.bias = Tensor<float>(Shape{k, 1, 1, 1});
  return g.add_node(OpKind::Linear, "classifier.fc", {feat}, Component::Classifier, std::move(p));
}

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Backbone: return "backbone";
    case ModelKind::Udta: return "udta";
    case ModelKind::TopFT: return "topft";
    case ModelKind::FullFT: return "fullft";
    case ModelKind::ModelPatch: return "model_patch";
    case ModelKind::ResidualAdapter: return "residual_adapter";
  }
  return "?";
}

ModelKind model_kind_from_string(std::string_view name) {
  if (name == "backbone") return ModelKind::Backbone;
  if (name == "udta") return ModelKind::Udta;
  if (name == "topft") return ModelKind::TopFT;
  if (name == "fullft") return ModelKind::FullFT;
  if (name == "mp" || name == "model_patch") return ModelKind::ModelPatch;
  if (name == "ra" || name == "residual_adapter") return ModelKind::ResidualAdapter;
  throw SpecError("unknown model kind '" + std::string(name) + "'");
}

void Model::apply_bn_modes() {
  bool backbone_trains = false;
  for (Component c : trainable_components) backbone_trains |= c == Component::Backbone;
  graph.set_bn_mode(Component::Backbone, backbone_trains ? BnMode::Train : BnMode::Eval);
  graph.set_bn_mode(Component::Patch, BnMode::Eval);
  graph.set_bn_mode(Component::Adapter, BnMode::Train);
}

Model build_model(const ModelSpec& spec, ModelKind kind, const BuildOptions& options) {
  spec.validate();
  Model m;
  m.kind = kind;
  Initializer init(options.seed, options.random_init);
  const int classes = options.classes > 0 ? options.classes : spec.classes;
  m.backbone = build_backbone(m.graph, spec, init, {.residual_adapter = kind == ModelKind::ResidualAdapter});

  std::optional<NodeId> adapter_feat;
  if (kind == ModelKind::Udta) {
    m.udta = attach_udta(m.graph, m.backbone, spec, init);
    adapter_feat = m.udta->pooled;
  }
  m.logits = build_classifier(m.graph, m.backbone.pooled, adapter_feat, classes, init);
  m.loss = m.graph.add_node(OpKind::CrossEntropyLoss, "loss", {m.logits}, Component::Classifier);

  switch (kind) {
    case ModelKind::Backbone:
    case ModelKind::FullFT:
      m.trainable_components = {Component::Backbone, Component::Classifier};
      break;
    case ModelKind::TopFT:
      m.trainable_components = {Component::Classifier};
      break;
    case ModelKind::ModelPatch: {
      for (const NodeDesc& d : m.graph.nodes()) {
        if (d.op != OpKind::BatchNorm || d.component != Component::Backbone) continue;
        if (options.patch_from_stage > 0) {
          int stage = -1;
          if (d.name.rfind("backbone.s", 0) == 0 && d.name.size() > 10 && std::isdigit(d.name[10])) {
            stage = std::stoi(d.name.substr(10));
          }
          const bool head = d.name.rfind("backbone.head", 0) == 0;
          if (!head && stage < options.patch_from_stage) continue;
        }
        m.graph.desc(d.id).component = Component::Patch;
      }
      m.trainable_components = {Component::Patch, Component::Classifier};
      break;
    }
    case ModelKind::ResidualAdapter:
      m.trainable_components = {Component::Adapter, Component::Classifier};
      break;
    case ModelKind::Udta:
      m.trainable_components = {Component::Adapter, Component::Classifier};
      if (options.joint_encoder) m.trainable_components.push_back(Component::Encoder);
      break;
  }
  m.graph.set_trainable_components(m.trainable_components);
  m.apply_bn_modes();
  return m;
}

Model build_baseline(const ModelSpec& spec, ModelKind kind, int classes, std::uint64_t seed) {
  if (kind == ModelKind::Udta || kind == ModelKind::Backbone) {
    throw SpecError("build_baseline: '" + std::string(to_string(kind)) + "' is not a baseline kind");
  }
  return build_model(spec, kind, {.seed = seed, .classes = classes});
}

AutoencoderModel build_autoencoder_model(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  AutoencoderModel m;
  Initializer init(seed);
  m.backbone = build_backbone(m.graph, spec, init);
  for (const TapSpec& tap : spec.active_taps()) {
    if (!tap.encode) continue;
    const NodeId src = m.backbone.stage_outputs[static_cast<std::size_t>(tap.stage)];
    const std::string name = "s" + std::to_string(tap.stage);
    AutoencoderHandles ae = build_autoencoder(m.graph, src, spec.encoder_reduction, name, init);
    m.tap_stages.push_back(tap.stage);
    m.autoencoders.push_back(ae);
    m.losses.push_back(m.graph.add_node(OpKind::MseLoss, "ae_loss." + name, {ae.decoder, src},
                                        Component::AuxDecoder));
  }
  const Component trainable[] = {Component::Encoder, Component::AuxDecoder};
  m.graph.set_trainable_components(trainable);
  m.graph.set_bn_mode(Component::Backbone, BnMode::Eval);
  return m;
}

}  // namespace udta
