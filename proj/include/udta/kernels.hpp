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

// Forward and analytic backward kernels for every layer type the models use.
//
// All kernels are pure functions of their arguments except batchnorm_forward in
// Train mode, which updates the running statistics held in its KernelParams.
// Reductions run in a fixed order so results are bit-stable.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "udta/tensor.hpp"

namespace udta {

template <typename T>
struct BnState {
  Tensor<T> gamma;
  Tensor<T> beta;
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T epsilon = T(1e-5);
  T momentum = T(0.1);

  static BnState identity(std::size_t channels);
};

// Layouts: conv1x1 (c_out, c_in, 1, 1); conv3x3 (c_out, c_in, 3, 3);
// depthwise (c, 1, 3, 3); linear (out, in, 1, 1); channel affine (c, 1, 1, 1).
template <typename T>
struct KernelParams {
  Tensor<T> weight;
  std::optional<Tensor<T>> bias;
  std::optional<BnState<T>> bn;
};

// Parameter gradients; only the slots matching the owning KernelParams are filled.
template <typename T>
struct KernelGrads {
  Tensor<T> weight;
  Tensor<T> bias;
  Tensor<T> gamma;
  Tensor<T> beta;
};

enum class BnMode { Train, Eval };

template <typename T>
struct BnCache {
  Tensor<T> x_hat;
  std::vector<T> inv_std;
  BnMode mode = BnMode::Eval;
};

namespace kernels {

inline std::size_t strided_extent(std::size_t extent, int stride) {
  return (extent + static_cast<std::size_t>(stride) - 1) / static_cast<std::size_t>(stride);
}

// 1x1 convolution, sampling input at (y*stride, x*stride).
template <typename T>
Tensor<T> conv1x1_forward(const Tensor<T>& input, const KernelParams<T>& params, int stride);
template <typename T>
void conv1x1_backward(const Tensor<T>& input, const Tensor<T>& grad_out, const KernelParams<T>& params,
                      int stride, Tensor<T>* grad_in, KernelGrads<T>* grads);

// Dense 3x3 convolution with zero padding 1 (stem layer).
template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const KernelParams<T>& params, int stride);
template <typename T>
void conv3x3_backward(const Tensor<T>& input, const Tensor<T>& grad_out, const KernelParams<T>& params,
                      int stride, Tensor<T>* grad_in, KernelGrads<T>* grads);

// Per-channel 3x3 cross-correlation with zero padding 1.
template <typename T>
Tensor<T> depthwise3x3_forward(const Tensor<T>& input, const KernelParams<T>& params, int stride);
template <typename T>
void depthwise3x3_backward(const Tensor<T>& input, const Tensor<T>& grad_out, const KernelParams<T>& params,
                           int stride, Tensor<T>* grad_in, KernelGrads<T>* grads);

// Train mode normalizes by batch statistics over (n, h, w) and, when
// update_running_stats is set, folds them into the running stats with momentum.
template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, KernelParams<T>& params, BnMode mode,
                            BnCache<T>* cache = nullptr, bool update_running_stats = true);
template <typename T>
void batchnorm_backward(const Tensor<T>& grad_out, const KernelParams<T>& params, const BnCache<T>& cache,
                        Tensor<T>* grad_in, KernelGrads<T>* grads);

template <typename T>
Tensor<T> relu6(const Tensor<T>& input);
// Subgradient 0 at exactly 0 and exactly 6.
template <typename T>
Tensor<T> relu6_backward(const Tensor<T>& input, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> global_avgpool(const Tensor<T>& input);
template <typename T>
Tensor<T> global_avgpool_backward(const Shape& input_shape, const Tensor<T>& grad_out);

// y = W x + b over the flattened per-sample input; output shape (n, out, 1, 1).
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& input, const KernelParams<T>& params);
template <typename T>
void linear_backward(const Tensor<T>& input, const Tensor<T>& grad_out, const KernelParams<T>& params,
                     Tensor<T>* grad_in, KernelGrads<T>* grads);

// y[c, y, x] = scale[c] * x[c, y*stride, x*stride] + bias[c]: a diagonal 1x1 convolution.
template <typename T>
Tensor<T> channel_affine_forward(const Tensor<T>& input, const KernelParams<T>& params, int stride = 1);
template <typename T>
void channel_affine_backward(const Tensor<T>& input, const Tensor<T>& grad_out, const KernelParams<T>& params,
                             int stride, Tensor<T>* grad_in, KernelGrads<T>* grads);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

// Output channels are a's followed by b's.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void concat_channels_backward(const Tensor<T>& grad_out, std::size_t a_channels, Tensor<T>* grad_a,
                              Tensor<T>* grad_b);

// Mean over the batch of -log softmax(logits)[label]. Logits are (n, K, 1, 1).
template <typename T>
T cross_entropy_loss(const Tensor<T>& logits, std::span<const std::int32_t> labels);
template <typename T>
Tensor<T> cross_entropy_backward(const Tensor<T>& logits, std::span<const std::int32_t> labels);

template <typename T>
T mse_loss(const Tensor<T>& x, const Tensor<T>& y);
// Gradient with respect to x; the gradient for y is its negation.
template <typename T>
Tensor<T> mse_backward(const Tensor<T>& x, const Tensor<T>& y);

}  // namespace kernels
}  // namespace udta
