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

#include "udta/graph.hpp"

#include <algorithm>
#include <string>

#include "udta/errors.hpp"

namespace udta {

NodeSet BackwardTrace::visited() const {
  NodeSet out;
  for (const Entry& e : entries) out.insert(e.id);
  return out;
}

std::uint64_t BackwardTrace::total_flops() const {
  std::uint64_t total = 0;
  for (const Entry& e : entries) total += e.flops;
  return total;
}

std::uint64_t BackwardTrace::flops_of(Component component) const {
  std::uint64_t total = 0;
  for (const Entry& e : entries) {
    if (e.component == component) total += e.flops;
  }
  return total;
}

std::size_t BackwardTrace::count_of(Component component) const {
  return static_cast<std::size_t>(
      std::count_if(entries.begin(), entries.end(), [&](const Entry& e) { return e.component == component; }));
}

nlohmann::json BackwardTrace::to_json() const {
  nlohmann::json visited = nlohmann::json::array();
  for (const Entry& e : entries) {
    visited.push_back({{"id", index_of(e.id)}, {"component", to_string(e.component)}, {"flops", e.flops}});
  }
  return {{"visited", std::move(visited)}, {"total_backward_flops", total_flops()}};
}

namespace {

template <typename T>
std::size_t count_params(const KernelParams<T>& p) {
  std::size_t n = p.weight.size();
  if (p.bias) n += p.bias->size();
  if (p.bn) n += p.bn->gamma.size() + p.bn->beta.size();
  return n;
}

template <typename T>
void accumulate(Tensor<T>& dst, Tensor<T>&& src) {
  if (dst.empty()) {
    dst = std::move(src);
    return;
  }
  if (dst.shape() != src.shape()) {
    throw DimensionError("gradient accumulation shape " + dst.shape().str() + " vs " + src.shape().str());
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <typename T>
Tensor<T> scaled(Tensor<T> t, T s) {
  if (s != T(1)) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] *= s;
  }
  return t;
}

}  // namespace

template <typename T>
NodeId BasicGraph<T>::add_input(std::string name, Shape per_sample, Component component) {
  NodeDesc d;
  d.id = node_id(descs_.size());
  d.name = std::move(name);
  d.op = OpKind::Input;
  d.component = component;
  d.out_shape = per_sample.with_batch(1);
  descs_.push_back(std::move(d));
  params_.emplace_back();
  grads_.emplace_back();
  bn_modes_.push_back(BnMode::Eval);
  return descs_.back().id;
}

template <typename T>
NodeId BasicGraph<T>::add_node(OpKind op, std::string name, std::vector<NodeId> inputs, Component component,
                               KernelParams<T> params, int stride) {
  if (op == OpKind::Input) return add_input(std::move(name), params.weight.shape(), component);
  NodeDesc d;
  d.id = node_id(descs_.size());
  d.name = std::move(name);
  d.op = op;
  d.component = component;
  d.stride = stride;
  for (NodeId in : inputs) {
    if (index_of(in) >= descs_.size()) {
      throw SpecError("node '" + d.name + "' references undefined input " + std::to_string(index_of(in)));
    }
  }
  d.inputs = std::move(inputs);
  d.param_count = count_params(params);
  try {
    d.out_shape = infer_shape(d, params);
  } catch (const DimensionError& e) {
    throw DimensionError("node '" + d.name + "': " + e.what());
  }
  descs_.push_back(std::move(d));
  params_.push_back(std::move(params));
  grads_.emplace_back();
  bn_modes_.push_back(BnMode::Eval);
  required_cache_.clear();
  return descs_.back().id;
}

template <typename T>
Shape BasicGraph<T>::infer_shape(const NodeDesc& d, const KernelParams<T>& p) const {
  auto in = [&](std::size_t i) -> const Shape& {
    if (i >= d.inputs.size()) throw DimensionError("missing input " + std::to_string(i));
    return descs_[index_of(d.inputs[i])].out_shape;
  };
  auto expect_inputs = [&](std::size_t n) {
    if (d.inputs.size() != n) {
      throw DimensionError(std::string(to_string(d.op)) + " takes " + std::to_string(n) + " input(s), got " +
                           std::to_string(d.inputs.size()));
    }
  };
  auto check_stride = [&]() {
    if (d.stride != 1 && d.stride != 2) throw DimensionError("stride must be 1 or 2");
  };
  const Shape& ws = p.weight.shape();
  switch (d.op) {
    case OpKind::Input:
      return d.out_shape;
    case OpKind::Conv1x1:
    case OpKind::Conv3x3: {
      expect_inputs(1);
      check_stride();
      const std::size_t k = d.op == OpKind::Conv1x1 ? 1 : 3;
      if (ws.h != k || ws.w != k || ws.c != in(0).c) {
        throw DimensionError("weight " + ws.str() + " incompatible with input " + in(0).str());
      }
      if (p.bias && p.bias->size() != ws.n) throw DimensionError("bias length mismatch");
      return {1, ws.n, kernels::strided_extent(in(0).h, d.stride), kernels::strided_extent(in(0).w, d.stride)};
    }
    case OpKind::Depthwise3x3: {
      expect_inputs(1);
      check_stride();
      if (ws != Shape{in(0).c, 1, 3, 3}) {
        throw DimensionError("depthwise weight " + ws.str() + " incompatible with input " + in(0).str());
      }
      return {1, in(0).c, kernels::strided_extent(in(0).h, d.stride), kernels::strided_extent(in(0).w, d.stride)};
    }
    case OpKind::BatchNorm: {
      expect_inputs(1);
      if (!p.bn) throw DimensionError("batchnorm node without bn state");
      if (p.bn->gamma.size() != in(0).c || p.bn->beta.size() != in(0).c || p.bn->running_mean.size() != in(0).c ||
          p.bn->running_var.size() != in(0).c) {
        throw DimensionError("bn state length " + std::to_string(p.bn->gamma.size()) + " vs channels " +
                             std::to_string(in(0).c));
      }
      for (std::size_t i = 0; i < p.bn->running_var.size(); ++i) {
        if (!(p.bn->running_var[i] > T(0))) throw DimensionError("running_var must be strictly positive");
      }
      return in(0);
    }
    case OpKind::ReLU6:
      expect_inputs(1);
      return in(0);
    case OpKind::Add:
      expect_inputs(2);
      if (in(0) != in(1)) throw DimensionError("add operands " + in(0).str() + " vs " + in(1).str());
      return in(0);
    case OpKind::Concat:
      expect_inputs(2);
      if (in(0).h != in(1).h || in(0).w != in(1).w) {
        throw DimensionError("concat spatial mismatch " + in(0).str() + " vs " + in(1).str());
      }
      return {1, in(0).c + in(1).c, in(0).h, in(0).w};
    case OpKind::GlobalAvgPool:
      expect_inputs(1);
      return {1, in(0).c, 1, 1};
    case OpKind::ChannelAffine:
      expect_inputs(1);
      check_stride();
      if (ws != Shape{in(0).c, 1, 1, 1}) throw DimensionError("channel affine weight " + ws.str());
      return {1, in(0).c, kernels::strided_extent(in(0).h, d.stride), kernels::strided_extent(in(0).w, d.stride)};
    case OpKind::Linear:
      expect_inputs(1);
      if (ws.h != 1 || ws.w != 1 || ws.c != in(0).per_sample()) {
        throw DimensionError("linear weight " + ws.str() + " vs flattened input " +
                             std::to_string(in(0).per_sample()));
      }
      return {1, ws.n, 1, 1};
    case OpKind::CrossEntropyLoss:
      expect_inputs(1);
      return {1, 1, 1, 1};
    case OpKind::MseLoss:
      expect_inputs(2);
      if (in(0) != in(1)) throw DimensionError("mse operands " + in(0).str() + " vs " + in(1).str());
      return {1, 1, 1, 1};
  }
  throw DimensionError("unknown op");
}

template <typename T>
void BasicGraph<T>::set_bn_mode(Component component, BnMode mode) {
  for (const NodeDesc& d : descs_) {
    if (d.op == OpKind::BatchNorm && d.component == component) bn_modes_[index_of(d.id)] = mode;
  }
}

template <typename T>
std::vector<ParamRef<T>> BasicGraph<T>::parameters(NodeId id) {
  const std::size_t i = index_of(id);
  KernelParams<T>& p = params_.at(i);
  KernelGrads<T>& g = grads_.at(i);
  const std::string& name = descs_.at(i).name;
  std::vector<ParamRef<T>> out;
  if (!p.weight.empty()) out.push_back({name + ".weight", &p.weight, &g.weight});
  if (p.bias) out.push_back({name + ".bias", &*p.bias, &g.bias});
  if (p.bn) {
    out.push_back({name + ".gamma", &p.bn->gamma, &g.gamma});
    out.push_back({name + ".beta", &p.bn->beta, &g.beta});
  }
  return out;
}

template <typename T>
std::vector<ParamRef<T>> BasicGraph<T>::buffers(NodeId id) {
  const std::size_t i = index_of(id);
  KernelParams<T>& p = params_.at(i);
  std::vector<ParamRef<T>> out;
  if (p.bn) {
    const std::string& name = descs_.at(i).name;
    out.push_back({name + ".running_mean", &p.bn->running_mean, nullptr});
    out.push_back({name + ".running_var", &p.bn->running_var, nullptr});
  }
  return out;
}

template <typename T>
std::vector<ParamRef<T>> BasicGraph<T>::state() {
  std::vector<ParamRef<T>> out;
  for (const NodeDesc& d : descs_) {
    for (auto& r : parameters(d.id)) out.push_back(r);
    for (auto& r : buffers(d.id)) out.push_back(r);
  }
  return out;
}

template <typename T>
void BasicGraph<T>::forward(const Tensor<T>& input, const ForwardOptions& options) {
  acts_.assign(descs_.size(), Tensor<T>());
  bn_caches_.assign(descs_.size(), BnCache<T>());
  const std::size_t batch = input.shape().n;
  for (const NodeDesc& d : descs_) {
    const std::size_t i = index_of(d.id);
    auto in = [&](std::size_t k) -> const Tensor<T>& { return acts_[index_of(d.inputs[k])]; };
    try {
      switch (d.op) {
        case OpKind::Input:
          if (input.shape() != d.out_shape.with_batch(batch)) {
            throw DimensionError("input batch " + input.shape().str() + " does not match declared " +
                                 d.out_shape.with_batch(batch).str());
          }
          acts_[i] = input;
          break;
        case OpKind::Conv1x1:
          acts_[i] = kernels::conv1x1_forward(in(0), params_[i], d.stride);
          break;
        case OpKind::Conv3x3:
          acts_[i] = kernels::conv3x3_forward(in(0), params_[i], d.stride);
          break;
        case OpKind::Depthwise3x3:
          acts_[i] = kernels::depthwise3x3_forward(in(0), params_[i], d.stride);
          break;
        case OpKind::BatchNorm:
          acts_[i] = kernels::batchnorm_forward(in(0), params_[i], bn_modes_[i], &bn_caches_[i],
                                                options.update_running_stats);
          break;
        case OpKind::ReLU6:
          acts_[i] = kernels::relu6(in(0));
          break;
        case OpKind::Add:
          acts_[i] = kernels::add(in(0), in(1));
          break;
        case OpKind::Concat:
          acts_[i] = kernels::concat_channels(in(0), in(1));
          break;
        case OpKind::GlobalAvgPool:
          acts_[i] = kernels::global_avgpool(in(0));
          break;
        case OpKind::ChannelAffine:
          acts_[i] = kernels::channel_affine_forward(in(0), params_[i], d.stride);
          break;
        case OpKind::Linear:
          acts_[i] = kernels::linear_forward(in(0), params_[i]);
          break;
        case OpKind::CrossEntropyLoss:
          acts_[i] = Tensor<T>(Shape{1, 1, 1, 1}, kernels::cross_entropy_loss(in(0), std::span(labels_)));
          break;
        case OpKind::MseLoss:
          acts_[i] = Tensor<T>(Shape{1, 1, 1, 1}, kernels::mse_loss(in(0), in(1)));
          break;
      }
    } catch (const DimensionError& e) {
      acts_.clear();
      throw DimensionError("forward at node '" + d.name + "': " + e.what());
    }
    if (!d.is_loss() && acts_[i].shape() != d.out_shape.with_batch(batch)) {
      acts_.clear();
      throw DimensionError("forward at node '" + d.name + "': produced " + acts_[i].shape().str() +
                           ", declared " + d.out_shape.with_batch(batch).str());
    }
  }
}

template <typename T>
const Tensor<T>& BasicGraph<T>::activation(NodeId id) const {
  if (acts_.empty()) throw InvariantError("activation requested before forward");
  return acts_.at(index_of(id));
}

template <typename T>
T BasicGraph<T>::loss(NodeId loss_node) const {
  if (!desc(loss_node).is_loss()) throw SpecError("node '" + desc(loss_node).name + "' is not a loss");
  return activation(loss_node)[0];
}

template <typename T>
const NodeSet& BasicGraph<T>::required_set(NodeId loss, const NodeSet& trainable) {
  auto key = std::make_pair(loss, trainable);
  auto it = required_cache_.find(key);
  if (it == required_cache_.end()) {
    it = required_cache_.emplace(std::move(key), compute_required_set(*this, loss, trainable)).first;
  }
  return it->second;
}

template <typename T>
BackwardTrace BasicGraph<T>::backward(NodeId loss, const NodeSet& trainable, const CostModel& cost,
                                      const BackwardOptions& options) {
  if (acts_.empty()) throw InvariantError("backward called before forward");
  if (!desc(loss).is_loss()) throw SpecError("backward root '" + desc(loss).name + "' is not a loss node");
  const NodeSet& required = required_set(loss, trainable);
  const std::size_t batch = acts_[0].shape().n;

  for (KernelGrads<T>& g : grads_) g = KernelGrads<T>{};
  std::vector<Tensor<T>> grad_out(descs_.size());
  grad_out[index_of(loss)] = Tensor<T>(Shape{1, 1, 1, 1}, T(1));

  BackwardTrace trace;
  for (std::size_t i = index_of(loss) + 1; i-- > 0;) {
    const NodeDesc& d = descs_[i];
    if (!required.contains(d.id)) continue;
    if (options.skip_node && *options.skip_node == d.id) continue;
    if (grad_out[i].empty()) grad_out[i] = Tensor<T>(acts_[i].shape());
    const Tensor<T>& gy = grad_out[i];
    const bool train = trainable.contains(d.id);
    KernelGrads<T>* pg = train ? &grads_[i] : nullptr;
    auto needs = [&](std::size_t k) { return required.contains(d.inputs[k]); };
    auto in = [&](std::size_t k) -> const Tensor<T>& { return acts_[index_of(d.inputs[k])]; };
    auto push = [&](std::size_t k, Tensor<T>&& g) { accumulate(grad_out[index_of(d.inputs[k])], std::move(g)); };

    switch (d.op) {
      case OpKind::Input:
        break;
      case OpKind::Conv1x1:
      case OpKind::Conv3x3:
      case OpKind::Depthwise3x3: {
        Tensor<T> gx;
        Tensor<T>* pgx = needs(0) ? &gx : nullptr;
        if (d.op == OpKind::Conv1x1) {
          kernels::conv1x1_backward(in(0), gy, params_[i], d.stride, pgx, pg);
        } else if (d.op == OpKind::Conv3x3) {
          kernels::conv3x3_backward(in(0), gy, params_[i], d.stride, pgx, pg);
        } else {
          kernels::depthwise3x3_backward(in(0), gy, params_[i], d.stride, pgx, pg);
        }
        if (pgx) push(0, std::move(gx));
        break;
      }
      case OpKind::BatchNorm: {
        Tensor<T> gx;
        kernels::batchnorm_backward(gy, params_[i], bn_caches_[i], needs(0) ? &gx : nullptr, pg);
        if (needs(0)) push(0, std::move(gx));
        break;
      }
      case OpKind::ReLU6:
        if (needs(0)) push(0, kernels::relu6_backward(in(0), gy));
        break;
      case OpKind::Add:
        if (needs(0)) push(0, Tensor<T>(gy));
        if (needs(1)) push(1, Tensor<T>(gy));
        break;
      case OpKind::Concat: {
        Tensor<T> ga;
        Tensor<T> gb;
        kernels::concat_channels_backward(gy, in(0).shape().c, needs(0) ? &ga : nullptr, needs(1) ? &gb : nullptr);
        if (needs(0)) push(0, std::move(ga));
        if (needs(1)) push(1, std::move(gb));
        break;
      }
      case OpKind::GlobalAvgPool:
        if (needs(0)) push(0, kernels::global_avgpool_backward(in(0).shape(), gy));
        break;
      case OpKind::ChannelAffine: {
        Tensor<T> gx;
        kernels::channel_affine_backward(in(0), gy, params_[i], d.stride, needs(0) ? &gx : nullptr, pg);
        if (needs(0)) push(0, std::move(gx));
        break;
      }
      case OpKind::Linear: {
        Tensor<T> gx;
        kernels::linear_backward(in(0), gy, params_[i], needs(0) ? &gx : nullptr, pg);
        if (needs(0)) push(0, std::move(gx));
        break;
      }
      case OpKind::CrossEntropyLoss:
        if (needs(0)) push(0, scaled(kernels::cross_entropy_backward(in(0), std::span(labels_)), gy[0]));
        break;
      case OpKind::MseLoss: {
        Tensor<T> g = scaled(kernels::mse_backward(in(0), in(1)), gy[0]);
        if (needs(1)) push(1, scaled(g, T(-1)));
        if (needs(0)) push(0, std::move(g));
        break;
      }
    }
    trace.entries.push_back({d.id, d.component, backward_flops_per_sample(*this, d.id, train, cost) * batch});
  }
  return trace;
}

template class BasicGraph<float>;
template class BasicGraph<double>;

}  // namespace udta
