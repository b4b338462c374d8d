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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "udta/errors.hpp"
#include "udta/kernels.hpp"

namespace udta {
namespace {

using kernels::strided_extent;

Tensor<float> random_tensor(Shape s, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> d(lo, hi);
  Tensor<float> t(s);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
  return t;
}

KernelParams<float> with_weight(Tensor<float> w) {
  KernelParams<float> p;
  p.weight = std::move(w);
  return p;
}

// Reference conv1x1 written directly from the definition.
Tensor<float> naive_conv1x1(const Tensor<float>& x, const Tensor<float>& w, int stride) {
  const Shape& s = x.shape();
  const std::size_t oh = strided_extent(s.h, stride), ow = strided_extent(s.w, stride);
  Tensor<float> out(Shape{s.n, w.shape().n, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t o = 0; o < w.shape().n; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = 0;
          for (std::size_t i = 0; i < s.c; ++i) acc += w[o * s.c + i] * x.at(n, i, y * stride, xx * stride);
          out.at(n, o, y, xx) = static_cast<float>(acc);
        }
  return out;
}

Tensor<float> naive_depthwise(const Tensor<float>& x, const Tensor<float>& k, int stride) {
  const Shape& s = x.shape();
  const std::size_t oh = strided_extent(s.h, stride), ow = strided_extent(s.w, stride);
  Tensor<float> out(Shape{s.n, s.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xx = 0; xx < ow; ++xx) {
          double acc = 0;
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const long sy = static_cast<long>(y * stride) + ky - 1;
              const long sx = static_cast<long>(xx * stride) + kx - 1;
              if (sy < 0 || sx < 0 || sy >= static_cast<long>(s.h) || sx >= static_cast<long>(s.w)) continue;
              acc += k[c * 9 + static_cast<std::size_t>(ky * 3 + kx)] *
                     x.at(n, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
            }
          out.at(n, c, y, xx) = static_cast<float>(acc);
        }
  return out;
}

void expect_near_all(const Tensor<float>& a, const Tensor<float>& b, float tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_NEAR(a[i], b[i], tol) << "at " << i;
}

TEST(Conv1x1, IdentityWeightsAreExactIdentity) {
  Tensor<float> w(Shape{3, 3, 1, 1});
  for (std::size_t i = 0; i < 3; ++i) w[i * 3 + i] = 1.0f;
  const auto x = random_tensor(Shape{2, 3, 5, 4}, 1);
  EXPECT_EQ(kernels::conv1x1_forward(x, with_weight(w), 1), x);
}

TEST(Conv1x1, AllOnesSumsInputChannels) {
  const Tensor<float> x(Shape{1, 3, 2, 2}, 1.0f);
  const auto y = kernels::conv1x1_forward(x, with_weight(Tensor<float>(Shape{1, 3, 1, 1}, 1.0f)), 1);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_EQ(y[i], 3.0f);
}

TEST(Conv1x1, StrideTwoHalvesSpatialDims) {
  const auto y = kernels::conv1x1_forward(Tensor<float>(Shape{1, 3, 4, 4}, 1.0f),
                                          with_weight(Tensor<float>(Shape{2, 3, 1, 1}, 1.0f)), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
}

TEST(Conv1x1, MatchesDefinitionOnSmallAndLargePlanes) {
  for (std::size_t extent : {3u, 7u, 9u}) {
    for (int stride : {1, 2}) {
      const auto x = random_tensor(Shape{2, 5, extent, extent}, extent * 10 + stride);
      const auto w = random_tensor(Shape{6, 5, 1, 1}, 99);
      auto p = with_weight(w);
      expect_near_all(kernels::conv1x1_forward(x, p, stride), naive_conv1x1(x, w, stride), 1e-5f);
    }
  }
}

TEST(Conv1x1, ChannelMismatchIsDimensionError) {
  EXPECT_THROW(kernels::conv1x1_forward(Tensor<float>(Shape{1, 4, 2, 2}),
                                        with_weight(Tensor<float>(Shape{2, 3, 1, 1})), 1),
               DimensionError);
  EXPECT_THROW(kernels::conv1x1_forward(Tensor<float>(Shape{1, 3, 2, 2}),
                                        with_weight(Tensor<float>(Shape{2, 3, 1, 1})), 3),
               DimensionError);
}

TEST(Depthwise, CenterTapIsExactIdentity) {
  Tensor<float> k(Shape{4, 1, 3, 3});
  for (std::size_t c = 0; c < 4; ++c) k[c * 9 + 4] = 1.0f;
  const auto x = random_tensor(Shape{2, 4, 6, 5}, 3);
  EXPECT_EQ(kernels::depthwise3x3_forward(x, with_weight(k), 1), x);
}

TEST(Depthwise, OnesKernelCountsTapsInsidePaddedWindow) {
  const auto y = kernels::depthwise3x3_forward(Tensor<float>(Shape{1, 1, 5, 5}, 1.0f),
                                               with_weight(Tensor<float>(Shape{1, 1, 3, 3}, 1.0f)), 1);
  EXPECT_EQ(y.at(0, 0, 2, 2), 9.0f);
  EXPECT_EQ(y.at(0, 0, 0, 0), 4.0f);
  EXPECT_EQ(y.at(0, 0, 4, 4), 4.0f);
  EXPECT_EQ(y.at(0, 0, 0, 2), 6.0f);
}

TEST(Depthwise, StrideTwoMaps14To7) {
  const auto y = kernels::depthwise3x3_forward(Tensor<float>(Shape{1, 96, 14, 14}, 1.0f),
                                               with_weight(Tensor<float>(Shape{96, 1, 3, 3}, 1.0f)), 2);
  EXPECT_EQ(y.shape(), (Shape{1, 96, 7, 7}));
}

TEST(Depthwise, MatchesDefinitionIncludingOddExtents) {
  for (std::size_t extent : {1u, 2u, 5u, 8u}) {
    for (int stride : {1, 2}) {
      const auto x = random_tensor(Shape{2, 3, extent, extent + 1}, extent + 17 * stride);
      const auto k = random_tensor(Shape{3, 1, 3, 3}, 5);
      expect_near_all(kernels::depthwise3x3_forward(x, with_weight(k), stride), naive_depthwise(x, k, stride),
                      1e-5f);
    }
  }
}

TEST(Depthwise, ChannelMismatchIsDimensionError) {
  EXPECT_THROW(kernels::depthwise3x3_forward(Tensor<float>(Shape{1, 4, 3, 3}),
                                             with_weight(Tensor<float>(Shape{3, 1, 3, 3})), 1),
               DimensionError);
}

KernelParams<float> bn(std::size_t c, float gamma, float beta) {
  KernelParams<float> p;
  p.bn = BnState<float>::identity(c);
  p.bn->gamma.fill(gamma);
  p.bn->beta.fill(beta);
  return p;
}

TEST(BatchNorm, EvalWithUnitStatsIsIdentityUpToEpsilon) {
  auto p = bn(3, 1.0f, 0.0f);
  const auto x = random_tensor(Shape{2, 3, 4, 4}, 8);
  const auto y = kernels::batchnorm_forward(x, p, BnMode::Eval);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(y[i], x[i] / std::sqrt(1.0f + 1e-5f), 1e-7f);
}

TEST(BatchNorm, TrainModeNormalizesPerChannel) {
  auto p = bn(2, 1.5f, -0.5f);
  const auto x = random_tensor(Shape{4, 2, 3, 3}, 9, -3.0f, 7.0f);
  const auto y = kernels::batchnorm_forward(x, p, BnMode::Train);
  for (std::size_t c = 0; c < 2; ++c) {
    double sum = 0, sq = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) sum += y.plane(n, c)[i];
    const double mean = sum / 36;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 9; ++i) sq += (y.plane(n, c)[i] - mean) * (y.plane(n, c)[i] - mean);
    EXPECT_NEAR(mean, -0.5, 1e-4);
    EXPECT_NEAR(sq / 36, 1.5 * 1.5, 1e-3);
  }
}

TEST(BatchNorm, EvalAffineMatchesHandValue) {
  auto p = bn(1, 2.0f, 1.0f);
  const auto y = kernels::batchnorm_forward(Tensor<float>(Shape{1, 1, 1, 1}, 3.0f), p, BnMode::Eval);
  EXPECT_NEAR(y[0], 2.0 * 3.0 / std::sqrt(1.0 + 1e-5) + 1.0, 1e-6);
}

TEST(BatchNorm, TrainModeUpdatesRunningStatsWithMomentum) {
  auto p = bn(1, 1.0f, 0.0f);
  const Tensor<float> x(Shape{2, 1, 1, 2}, std::vector<float>{1, 2, 3, 6});
  kernels::batchnorm_forward(x, p, BnMode::Train);
  // mean 3, unbiased variance (4+1+0+9)/3
  EXPECT_NEAR(p.bn->running_mean[0], 0.1 * 3.0, 1e-6);
  EXPECT_NEAR(p.bn->running_var[0], 0.9 + 0.1 * 14.0 / 3.0, 1e-6);
  auto frozen = bn(1, 1.0f, 0.0f);
  kernels::batchnorm_forward<float>(x, frozen, BnMode::Train, nullptr, false);
  EXPECT_EQ(frozen.bn->running_mean[0], 0.0f);
}

TEST(BatchNorm, ChannelMismatchIsDimensionError) {
  auto p = bn(2, 1.0f, 0.0f);
  EXPECT_THROW(kernels::batchnorm_forward(Tensor<float>(Shape{1, 3, 2, 2}), p, BnMode::Eval), DimensionError);
}

TEST(Relu6, ClampsBothEnds) {
  const Tensor<float> x(Shape{1, 1, 1, 3}, std::vector<float>{-1.0f, 3.5f, 8.0f});
  const auto y = kernels::relu6(x);
  EXPECT_EQ(y[0], 0.0f);
  EXPECT_EQ(y[1], 3.5f);
  EXPECT_EQ(y[2], 6.0f);
}

TEST(Relu6, SubgradientIsZeroAtKinks) {
  const Tensor<float> x(Shape{1, 1, 1, 4}, std::vector<float>{0.0f, 6.0f, 1.0f, 7.0f});
  const auto g = kernels::relu6_backward(x, Tensor<float>(Shape{1, 1, 1, 4}, 1.0f));
  EXPECT_EQ(g[0], 0.0f);
  EXPECT_EQ(g[1], 0.0f);
  EXPECT_EQ(g[2], 1.0f);
  EXPECT_EQ(g[3], 0.0f);
}

TEST(AvgPool, ConstantAndArithmeticMean) {
  EXPECT_EQ(kernels::global_avgpool(Tensor<float>(Shape{1, 2, 3, 3}, 4.5f))[1], 4.5f);
  std::vector<float> v(49);
  std::iota(v.begin(), v.end(), 1.0f);
  EXPECT_FLOAT_EQ(kernels::global_avgpool(Tensor<float>(Shape{1, 1, 7, 7}, v))[0], 25.0f);
  EXPECT_EQ(kernels::global_avgpool(Tensor<float>(Shape{1, 1280, 7, 7})).shape(), (Shape{1, 1280, 1, 1}));
}

TEST(AvgPool, PreservesChannelSumsUpToArea) {
  const auto x = random_tensor(Shape{3, 4, 5, 6}, 12);
  const auto y = kernels::global_avgpool(x);
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t c = 0; c < 4; ++c) {
      double sum = 0;
      for (std::size_t i = 0; i < 30; ++i) sum += x.plane(n, c)[i];
      EXPECT_NEAR(y.at(n, c, 0, 0) * 30.0, sum, 1e-4);
    }
}

TEST(Linear, IdentityAndHandSum) {
  Tensor<float> eye(Shape{3, 3, 1, 1});
  for (std::size_t i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0f;
  KernelParams<float> p = with_weight(eye);
  p.bias = Tensor<float>(Shape{3, 1, 1, 1});
  const auto x = random_tensor(Shape{2, 3, 1, 1}, 4);
  EXPECT_EQ(kernels::linear_forward(x, p), x);
  const Tensor<float> v(Shape{1, 4, 1, 1}, std::vector<float>{1, 2, 3, 4});
  EXPECT_EQ(kernels::linear_forward(v, with_weight(Tensor<float>(Shape{1, 4, 1, 1}, 1.0f)))[0], 10.0f);
  EXPECT_THROW(kernels::linear_forward(v, with_weight(Tensor<float>(Shape{1, 5, 1, 1}))), DimensionError);
}

TEST(ChannelAffine, ScalesShiftsAndSubsamples) {
  KernelParams<float> p = with_weight(Tensor<float>(Shape{2, 1, 1, 1}, std::vector<float>{2.0f, -1.0f}));
  p.bias = Tensor<float>(Shape{2, 1, 1, 1}, std::vector<float>{0.5f, 1.0f});
  const auto x = random_tensor(Shape{1, 2, 4, 4}, 6);
  const auto y = kernels::channel_affine_forward(x, p, 2);
  ASSERT_EQ(y.shape(), (Shape{1, 2, 2, 2}));
  EXPECT_FLOAT_EQ(y.at(0, 0, 1, 1), 2.0f * x.at(0, 0, 2, 2) + 0.5f);
  EXPECT_FLOAT_EQ(y.at(0, 1, 0, 1), -x.at(0, 1, 0, 2) + 1.0f);
}

TEST(Concat, StacksChannelsInOrder) {
  const Tensor<float> a(Shape{1, 1280, 1, 1}, 1.0f);
  const Tensor<float> b(Shape{1, 320, 1, 1}, 2.0f);
  const auto y = kernels::concat_channels(a, b);
  ASSERT_EQ(y.shape(), (Shape{1, 1600, 1, 1}));
  EXPECT_EQ(y[1279], 1.0f);
  EXPECT_EQ(y[1280], 2.0f);
  EXPECT_EQ(kernels::concat_channels(a, Tensor<float>(Shape{1, 0, 1, 1})), a);
  EXPECT_THROW(kernels::concat_channels(Tensor<float>(Shape{1, 1, 2, 2}), Tensor<float>(Shape{1, 1, 3, 2})),
               DimensionError);
}

TEST(CrossEntropy, ReferenceValues) {
  const std::vector<std::int32_t> label0{0};
  EXPECT_NEAR(kernels::cross_entropy_loss(Tensor<float>(Shape{1, 5, 1, 1}, 0.3f), std::span(label0)),
              std::log(5.0), 1e-6);
  const Tensor<float> confident(Shape{1, 3, 1, 1}, std::vector<float>{50.0f, 0.0f, 0.0f});
  EXPECT_LT(kernels::cross_entropy_loss(confident, std::span(label0)), 1e-8);
  const Tensor<double> two(Shape{1, 2, 1, 1}, std::vector<double>{0.0, std::log(3.0)});
  EXPECT_NEAR(kernels::cross_entropy_loss(two, std::span(label0)), std::log(4.0), 1e-12);
  const std::vector<std::int32_t> bad{2};
  EXPECT_THROW(kernels::cross_entropy_loss(Tensor<float>(Shape{1, 2, 1, 1}), std::span(bad)), std::exception);
}

TEST(CrossEntropy, StableForHugeLogits) {
  const std::vector<std::int32_t> label{1};
  const Tensor<float> x(Shape{1, 2, 1, 1}, std::vector<float>{1e4f, 0.0f});
  const float l = kernels::cross_entropy_loss(x, std::span(label));
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, 1e4f, 1.0f);
}

TEST(Mse, ReferenceValues) {
  const auto x = random_tensor(Shape{1, 2, 2, 2}, 2);
  EXPECT_EQ(kernels::mse_loss(x, x), 0.0f);
  EXPECT_EQ(kernels::mse_loss(Tensor<float>(Shape{1, 1, 1, 1}, 0.0f), Tensor<float>(Shape{1, 1, 1, 1}, 2.0f)), 4.0f);
  EXPECT_EQ(kernels::mse_loss(Tensor<float>(Shape{1, 2, 1, 1}),
                              Tensor<float>(Shape{1, 2, 1, 1}, std::vector<float>{1.0f, 3.0f})),
            5.0f);
  EXPECT_THROW(kernels::mse_loss(Tensor<float>(Shape{1, 2, 1, 1}), Tensor<float>(Shape{1, 3, 1, 1})),
               DimensionError);
}

TEST(Kernels, DeterministicBitIdenticalOutputs) {
  const auto x = random_tensor(Shape{3, 8, 6, 6}, 21);
  const auto w = random_tensor(Shape{16, 8, 1, 1}, 22);
  const auto k = random_tensor(Shape{8, 1, 3, 3}, 23);
  EXPECT_EQ(kernels::conv1x1_forward(x, with_weight(w), 1), kernels::conv1x1_forward(x, with_weight(w), 1));
  EXPECT_EQ(kernels::depthwise3x3_forward(x, with_weight(k), 2), kernels::depthwise3x3_forward(x, with_weight(k), 2));
}

TEST(Kernels, FiniteOutputsOnFiniteInputs) {
  const auto x = random_tensor(Shape{2, 4, 5, 5}, 30, -100.0f, 100.0f);
  auto p = bn(4, 1.0f, 0.0f);
  EXPECT_TRUE(all_finite(kernels::batchnorm_forward(x, p, BnMode::Train)));
  EXPECT_TRUE(all_finite(kernels::relu6(x)));
  EXPECT_TRUE(all_finite(kernels::global_avgpool(x)));
}

}  // namespace
}  // namespace udta
