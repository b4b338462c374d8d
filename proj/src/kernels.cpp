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

#include "udta/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace udta {

template <typename T>
BnState<T> BnState<T>::identity(std::size_t channels) {
  const Shape s{channels, 1, 1, 1};
  return BnState{Tensor<T>(s, T(1)), Tensor<T>(s, T(0)), Tensor<T>(s, T(0)), Tensor<T>(s, T(1))};
}

namespace kernels {
namespace {

void check_stride(int stride) {
  if (stride != 1 && stride != 2) {
    throw DimensionError("stride must be 1 or 2, got " + std::to_string(stride));
  }
}

template <typename T>
void check_weight(const Tensor<T>& weight, const Shape& expected, const char* what) {
  if (weight.shape() != expected) {
    throw DimensionError(std::string(what) + " weight shape " + weight.shape().str() + " expected " +
                         expected.str());
  }
}

template <typename T>
void check_channels(const Tensor<T>& input, std::size_t expected, const char* what) {
  if (input.shape().c != expected) {
    throw DimensionError(std::string(what) + ": input has " + std::to_string(input.shape().c) +
                         " channels, parameters expect " + std::to_string(expected));
  }
}

// Copies input[:, :, ::stride, ::stride] into a compact tensor.
template <typename T>
Tensor<T> subsample(const Tensor<T>& input, int stride) {
  if (stride == 1) return input;
  const Shape& s = input.shape();
  const std::size_t oh = strided_extent(s.h, stride);
  const std::size_t ow = strided_extent(s.w, stride);
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* src = input.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          dst[y * ow + x] = src[(y * stride) * s.w + x * stride];
        }
      }
    }
  }
  return out;
}

template <typename T>
void scatter_strided(const Tensor<T>& compact, int stride, Tensor<T>* full) {
  const Shape& s = full->shape();
  const Shape& cs = compact.shape();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* src = compact.plane(n, c);
      T* dst = full->plane(n, c);
      for (std::size_t y = 0; y < cs.h; ++y) {
        for (std::size_t x = 0; x < cs.w; ++x) {
          dst[(y * stride) * s.w + x * stride] = src[y * cs.w + x];
        }
      }
    }
  }
}

}  // namespace

// Small planes are handled position-major: each sample is transposed to
// (plane, channels) so the innermost loop runs over channels.
constexpr std::size_t kSmallPlane = 64;

template <typename T>
void to_position_major(const T* src, std::size_t channels, std::size_t plane, T* dst) {
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t p = 0; p < plane; ++p) dst[p * channels + c] = src[c * plane + p];
  }
}

template <typename T>
void to_channel_major(const T* src, std::size_t channels, std::size_t plane, T* dst) {
  for (std::size_t p = 0; p < plane; ++p) {
    for (std::size_t c = 0; c < channels; ++c) dst[c * plane + p] = src[p * channels + c];
  }
}

template <typename T>
Tensor<T> conv1x1_forward(const Tensor<T>& input, const KernelParams<T>& params, int stride) {
  check_stride(stride);
  const std::size_t c_out = params.weight.shape().n;
  const std::size_t c_in = params.weight.shape().c;
  check_weight(params.weight, Shape{c_out, c_in, 1, 1}, "conv1x1");
  check_channels(input, c_in, "conv1x1");
  const Tensor<T> x = subsample(input, stride);
  const Shape& xs = x.shape();
  const std::size_t plane = xs.plane();
  Tensor<T> out(Shape{xs.n, c_out, xs.h, xs.w});
  const T* w = params.weight.ptr();
  if (plane < kSmallPlane) {
    std::vector<T> wt(c_in * c_out);
    for (std::size_t o = 0; o < c_out; ++o) {
      for (std::size_t i = 0; i < c_in; ++i) wt[i * c_out + o] = w[o * c_in + i];
    }
    std::vector<T> xt(plane * c_in);
    std::vector<T> ot(plane * c_out);
    for (std::size_t n = 0; n < xs.n; ++n) {
      to_position_major(x.plane(n, 0), c_in, plane, xt.data());
      for (std::size_t p = 0; p < plane; ++p) {
        T* dst = ot.data() + p * c_out;
        if (params.bias) {
          std::copy(params.bias->ptr(), params.bias->ptr() + c_out, dst);
        } else {
          std::fill(dst, dst + c_out, T(0));
        }
        const T* xp = xt.data() + p * c_in;
        for (std::size_t i = 0; i < c_in; ++i) {
          const T xv = xp[i];
          const T* wr = wt.data() + i * c_out;
          for (std::size_t o = 0; o < c_out; ++o) dst[o] += wr[o] * xv;
        }
      }
      to_channel_major(ot.data(), c_out, plane, out.plane(n, 0));
    }
    return out;
  }
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t o = 0; o < c_out; ++o) {
      T* dst = out.plane(n, o);
      if (params.bias) std::fill(dst, dst + plane, (*params.bias)[o]);
      for (std::size_t i = 0; i < c_in; ++i) {
        const T wv = w[o * c_in + i];
        const T* src = x.plane(n, i);
        for (std::size_t p = 0; p < plane; ++p) dst[p] += wv * src[p];
      }
    }
  }
  return out;
}

template <typename T>
void conv1x1_backward(const Tensor<T>& input, const Tensor<T>& grad_out, const KernelParams<T>& params,
                      int stride, Tensor<T>* grad_in, KernelGrads<T>* grads) {
  check_stride(stride);
  const std::size_t c_out = params.weight.shape().n;
  const std::size_t c_in = params.weight.shape().c;
  const Tensor<T> x = subsample(input, stride);
  const Shape& gs = grad_out.shape();
  if (gs != Shape{x.shape().n, c_out, x.shape().h, x.shape().w}) {
    throw DimensionError("conv1x1 backward: grad_out shape " + gs.str() + " mismatch");
  }
  const std::size_t plane = gs.plane();
  const T* w = params.weight.ptr();
  Tensor<T> compact;
  if (grad_in) compact = Tensor<T>(x.shape());
  if (grads) {
    grads->weight = Tensor<T>(params.weight.shape());
    if (params.bias) grads->bias = Tensor<T>(params.bias->shape());
  }
  if (plane < kSmallPlane) {
    std::vector<T> xt(plane * c_in);
    std::vector<T> gt(plane * c_out);
    std::vector<T> gxt(plane * c_in);
    for (std::size_t n = 0; n < gs.n; ++n) {
      to_position_major(grad_out.plane(n, 0), c_out, plane, gt.data());
      if (grad_in) {
        std::fill(gxt.begin(), gxt.end(), T(0));
        for (std::size_t p = 0; p < plane; ++p) {
          T* dst = gxt.data() + p * c_in;
          const T* gp = gt.data() + p * c_out;
          for (std::size_t o = 0; o < c_out; ++o) {
            const T gv = gp[o];
            const T* wr = w + o * c_in;
            for (std::size_t i = 0; i < c_in; ++i) dst[i] += wr[i] * gv;
          }
        }
        to_channel_major(gxt.data(), c_in, plane, compact.plane(n, 0));
      }
      if (grads) {
        to_position_major(x.plane(n, 0), c_in, plane, xt.data());
        T* gw = grads->weight.ptr();
        for (std::size_t p = 0; p < plane; ++p) {
          const T* gp = gt.data() + p * c_out;
          const T* xp = xt.data() + p * c_in;
          for (std::size_t o = 0; o < c_out; ++o) {
            const T gv = gp[o];
            T* row = gw + o * c_in;
            for (std::size_t i = 0; i < c_in; ++i) row[i] += gv * xp[i];
          }
          if (params.bias) {
            for (std::size_t o = 0; o < c_out; ++o) grads->bias[o] += gp[o];
          }
        }
      }
    }
  } else {
    if (grad_in) {
      for (std::size_t n = 0; n < gs.n; ++n) {
        for (std::size_t i = 0; i < c_in; ++i) {
          T* dst = compact.plane(n, i);
          for (std::size_t o = 0; o < c_out; ++o) {
            const T wv = w[o * c_in + i];
            const T* g = grad_out.plane(n, o);
            for (std::size_t p = 0; p < plane; ++p) dst[p] += wv * g[p];
          }
        }
      }
    }
    if (grads) {
      T* gw = grads->weight.ptr();
      for (std::size_t n = 0; n < gs.n; ++n) {
        for (std::size_t o = 0; o < c_out; ++o) {
          const T* g = grad_out.plane(n, o);
          for (std::size_t i = 0; i < c_in; ++i) {
            const T* src = x.plane(n, i);
            T acc = 0;
            for (std::size_t p = 0; p < plane; ++p) acc += g[p] * src[p];
            gw[o * c_in + i] += acc;
          }
          if (params.bias) {
            T acc = 0;
            for (std::size_t p = 0; p < plane; ++p) acc += g[p];
            grads->bias[o] += acc;
          }
        }
      }
    }
  }
  if (grad_in) {
    if (stride == 1) {
      *grad_in = std::move(compact);
    } else {
      *grad_in = Tensor<T>(input.shape());
      scatter_strided(compact, stride, grad_in);
    }
  }
}

template <typename T>
Tensor<T> conv3x3_forward(const Tensor<T>& input, const KernelParams<T>& params, int stride) {
  check_stride(stride);
  const std::size_t c_out = params.weight.shape().n;
  const std::size_t c_in = params.weight.shape().c;
  check_weight(params.weight, Shape{c_out, c_in, 3, 3}, "conv3x3");
  check_channels(input, c_in, "conv3x3");
  const Shape& s = input.shape();
  const std::size_t oh = strided_extent(s.h, stride);
  const std::size_t ow = strided_extent(s.w, stride);
  Tensor<T> out(Shape{s.n, c_out, oh, ow});
  const auto ih = static_cast<std::ptrdiff_t>(s.h);
  const auto iw = static_cast<std::ptrdiff_t>(s.w);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < c_out; ++o) {
      T* dst = out.plane(n, o);
      if (params.bias) std::fill(dst, dst + oh * ow, (*params.bias)[o]);
      for (std::size_t i = 0; i < c_in; ++i) {
        const T* src = input.plane(n, i);
        const T* k = params.weight.ptr() + (o * c_in + i) * 9;
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t x = 0; x < ow; ++x) {
            T acc = 0;
            for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
              const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) * stride + ky - 1;
              if (sy < 0 || sy >= ih) continue;
              for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) * stride + kx - 1;
                if (sx < 0 || sx >= iw) continue;
                acc += k[ky * 3 + kx] * src[sy * iw + sx];
              }
            }
            dst[y * ow + x] += acc;
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
void conv3x3_backward(const Tensor<T>& input, const Tensor<T>& grad_out, const KernelParams<T>& params,
                      int stride, Tensor<T>* grad_in, KernelGrads<T>* grads) {
  check_stride(stride);
  const std::size_t c_out = params.weight.shape().n;
  const std::size_t c_in = params.weight.shape().c;
  const Shape& s = input.shape();
  const Shape& gs = grad_out.shape();
  const std::size_t oh = gs.h;
  const std::size_t ow = gs.w;
  const auto ih = static_cast<std::ptrdiff_t>(s.h);
  const auto iw = static_cast<std::ptrdiff_t>(s.w);
  if (grad_in) *grad_in = Tensor<T>(s);
  if (grads) {
    grads->weight = Tensor<T>(params.weight.shape());
    if (params.bias) grads->bias = Tensor<T>(params.bias->shape());
  }
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t o = 0; o < c_out; ++o) {
      const T* g = grad_out.plane(n, o);
      if (grads && params.bias) {
        T acc = 0;
        for (std::size_t p = 0; p < oh * ow; ++p) acc += g[p];
        grads->bias[o] += acc;
      }
      for (std::size_t i = 0; i < c_in; ++i) {
        const T* src = input.plane(n, i);
        const T* k = params.weight.ptr() + (o * c_in + i) * 9;
        T* gin = grad_in ? grad_in->plane(n, i) : nullptr;
        T* gk = grads ? grads->weight.ptr() + (o * c_in + i) * 9 : nullptr;
        for (std::size_t y = 0; y < oh; ++y) {
          for (std::size_t x = 0; x < ow; ++x) {
            const T gv = g[y * ow + x];
            for (std::ptrdiff_t ky = 0; ky < 3; ++ky) {
              const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y) * stride + ky - 1;
              if (sy < 0 || sy >= ih) continue;
              for (std::ptrdiff_t kx = 0; kx < 3; ++kx) {
                const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x) * stride + kx - 1;
                if (sx < 0 || sx >= iw) continue;
                if (gin) gin[sy * iw + sx] += k[ky * 3 + kx] * gv;
                if (gk) gk[ky * 3 + kx] += gv * src[sy * iw + sx];
              }
            }
          }
        }
      }
    }
  }
}

// Copies one plane into the interior of a zero-bordered (h+2) x (w+2) buffer.
template <typename T>
void pad_plane(const T* src, std::size_t h, std::size_t w, std::vector<T>& buf) {
  const std::size_t pw = w + 2;
  buf.assign((h + 2) * pw, T(0));
  for (std::size_t y = 0; y < h; ++y) std::copy(src + y * w, src + (y + 1) * w, buf.data() + (y + 1) * pw + 1);
}

template <typename T>
Tensor<T> depthwise3x3_forward(const Tensor<T>& input, const KernelParams<T>& params, int stride) {
  check_stride(stride);
  const Shape& s = input.shape();
  check_weight(params.weight, Shape{s.c, 1, 3, 3}, "depthwise3x3");
  const std::size_t oh = strided_extent(s.h, stride);
  const std::size_t ow = strided_extent(s.w, stride);
  const std::size_t pw = s.w + 2;
  const auto st = static_cast<std::size_t>(stride);
  Tensor<T> out(Shape{s.n, s.c, oh, ow});
  std::vector<T> buf;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      pad_plane(input.plane(n, c), s.h, s.w, buf);
      const T* k = params.weight.ptr() + c * 9;
      const T b = params.bias ? (*params.bias)[c] : T(0);
      T* dst = out.plane(n, c);
      for (std::size_t y = 0; y < oh; ++y) {
        const T* r0 = buf.data() + (y * st) * pw;
        const T* r1 = r0 + pw;
        const T* r2 = r1 + pw;
        T* row = dst + y * ow;
        for (std::size_t x = 0; x < ow; ++x) {
          const std::size_t sx = x * st;
          row[x] = k[0] * r0[sx] + k[1] * r0[sx + 1] + k[2] * r0[sx + 2] + k[3] * r1[sx] + k[4] * r1[sx + 1] +
                   k[5] * r1[sx + 2] + k[6] * r2[sx] + k[7] * r2[sx + 1] + k[8] * r2[sx + 2] + b;
        }
      }
    }
  }
  return out;
}

template <typename T>
void depthwise3x3_backward(const Tensor<T>& input, const Tensor<T>& grad_out, const KernelParams<T>& params,
                           int stride, Tensor<T>* grad_in, KernelGrads<T>* grads) {
  check_stride(stride);
  const Shape& s = input.shape();
  const Shape& gs = grad_out.shape();
  if (gs != Shape{s.n, s.c, strided_extent(s.h, stride), strided_extent(s.w, stride)}) {
    throw DimensionError("depthwise3x3 backward: grad_out shape " + gs.str() + " mismatch");
  }
  const std::size_t pw = s.w + 2;
  const auto st = static_cast<std::size_t>(stride);
  if (grad_in) *grad_in = Tensor<T>(s);
  if (grads) {
    grads->weight = Tensor<T>(params.weight.shape());
    if (params.bias) grads->bias = Tensor<T>(params.bias->shape());
  }
  std::vector<T> src;
  std::vector<T> gin;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* g = grad_out.plane(n, c);
      const T* k = params.weight.ptr() + c * 9;
      if (grad_in) {
        gin.assign((s.h + 2) * pw, T(0));
        for (std::size_t y = 0; y < gs.h; ++y) {
          for (std::size_t ky = 0; ky < 3; ++ky) {
            T* row = gin.data() + (y * st + ky) * pw;
            const T* grow = g + y * gs.w;
            for (std::size_t x = 0; x < gs.w; ++x) {
              const T gv = grow[x];
              const std::size_t sx = x * st;
              row[sx] += k[ky * 3] * gv;
              row[sx + 1] += k[ky * 3 + 1] * gv;
              row[sx + 2] += k[ky * 3 + 2] * gv;
            }
          }
        }
        T* dst = grad_in->plane(n, c);
        for (std::size_t y = 0; y < s.h; ++y) {
          std::copy(gin.data() + (y + 1) * pw + 1, gin.data() + (y + 1) * pw + 1 + s.w, dst + y * s.w);
        }
      }
      if (grads) {
        pad_plane(input.plane(n, c), s.h, s.w, src);
        T* gk = grads->weight.ptr() + c * 9;
        for (std::size_t ky = 0; ky < 3; ++ky) {
          for (std::size_t kx = 0; kx < 3; ++kx) {
            T acc = 0;
            for (std::size_t y = 0; y < gs.h; ++y) {
              const T* row = src.data() + (y * st + ky) * pw + kx;
              const T* grow = g + y * gs.w;
              for (std::size_t x = 0; x < gs.w; ++x) acc += grow[x] * row[x * st];
            }
            gk[ky * 3 + kx] += acc;
          }
        }
        if (params.bias) {
          T gb = 0;
          for (std::size_t p = 0; p < gs.plane(); ++p) gb += g[p];
          grads->bias[c] += gb;
        }
      }
    }
  }
}

template <typename T>
Tensor<T> batchnorm_forward(const Tensor<T>& input, KernelParams<T>& params, BnMode mode, BnCache<T>* cache,
                            bool update_running_stats) {
  if (!params.bn) throw DimensionError("batchnorm: parameters carry no bn state");
  BnState<T>& bn = *params.bn;
  const Shape& s = input.shape();
  if (bn.gamma.size() != s.c || bn.beta.size() != s.c || bn.running_mean.size() != s.c ||
      bn.running_var.size() != s.c) {
    throw DimensionError("batchnorm: input has " + std::to_string(s.c) + " channels, state has " +
                         std::to_string(bn.gamma.size()));
  }
  const std::size_t plane = s.plane();
  const std::size_t count = s.n * plane;
  Tensor<T> x_hat(s);
  std::vector<T> inv_std(s.c);
  for (std::size_t c = 0; c < s.c; ++c) {
    T mean;
    T var;
    if (mode == BnMode::Train) {
      double sum = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* src = input.plane(n, c);
        for (std::size_t p = 0; p < plane; ++p) sum += src[p];
      }
      const double mean_d = sum / static_cast<double>(count);
      double sq = 0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* src = input.plane(n, c);
        for (std::size_t p = 0; p < plane; ++p) sq += (src[p] - mean_d) * (src[p] - mean_d);
      }
      mean = static_cast<T>(mean_d);
      var = static_cast<T>(sq / static_cast<double>(count));
      if (update_running_stats) {
        const T unbiased = count > 1 ? static_cast<T>(sq / static_cast<double>(count - 1)) : var;
        bn.running_mean[c] = (T(1) - bn.momentum) * bn.running_mean[c] + bn.momentum * mean;
        bn.running_var[c] = (T(1) - bn.momentum) * bn.running_var[c] + bn.momentum * unbiased;
      }
    } else {
      mean = bn.running_mean[c];
      var = bn.running_var[c];
    }
    inv_std[c] = T(1) / std::sqrt(var + bn.epsilon);
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* src = input.plane(n, c);
      T* dst = x_hat.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) dst[p] = (src[p] - mean) * inv_std[c];
    }
  }
  Tensor<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T g = bn.gamma[c];
      const T b = bn.beta[c];
      const T* src = x_hat.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) dst[p] = g * src[p] + b;
    }
  }
  if (cache) {
    cache->x_hat = std::move(x_hat);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

template <typename T>
void batchnorm_backward(const Tensor<T>& grad_out, const KernelParams<T>& params, const BnCache<T>& cache,
                        Tensor<T>* grad_in, KernelGrads<T>* grads) {
  const BnState<T>& bn = *params.bn;
  const Shape& s = grad_out.shape();
  if (cache.x_hat.shape() != s) throw DimensionError("batchnorm backward: cache shape mismatch");
  const std::size_t plane = s.plane();
  const auto count = static_cast<double>(s.n * plane);
  std::vector<double> sum_dy(s.c, 0.0);
  std::vector<double> sum_dy_xhat(s.c, 0.0);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* g = grad_out.plane(n, c);
      const T* xh = cache.x_hat.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) {
        sum_dy[c] += g[p];
        sum_dy_xhat[c] += static_cast<double>(g[p]) * xh[p];
      }
    }
  }
  if (grads) {
    grads->gamma = Tensor<T>(bn.gamma.shape());
    grads->beta = Tensor<T>(bn.beta.shape());
    for (std::size_t c = 0; c < s.c; ++c) {
      grads->gamma[c] = static_cast<T>(sum_dy_xhat[c]);
      grads->beta[c] = static_cast<T>(sum_dy[c]);
    }
  }
  if (grad_in) {
    *grad_in = Tensor<T>(s);
    for (std::size_t n = 0; n < s.n; ++n) {
      for (std::size_t c = 0; c < s.c; ++c) {
        const T* g = grad_out.plane(n, c);
        const T* xh = cache.x_hat.plane(n, c);
        T* dst = grad_in->plane(n, c);
        const T scale = bn.gamma[c] * cache.inv_std[c];
        if (cache.mode == BnMode::Train) {
          const auto mean_dy = static_cast<T>(sum_dy[c] / count);
          const auto mean_dy_xhat = static_cast<T>(sum_dy_xhat[c] / count);
          for (std::size_t p = 0; p < plane; ++p) dst[p] = scale * (g[p] - mean_dy - xh[p] * mean_dy_xhat);
        } else {
          for (std::size_t p = 0; p < plane; ++p) dst[p] = scale * g[p];
        }
      }
    }
  }
}

template <typename T>
Tensor<T> relu6(const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = std::min(std::max(input[i], T(0)), T(6));
  return out;
}

template <typename T>
Tensor<T> relu6_backward(const Tensor<T>& input, const Tensor<T>& grad_out) {
  Tensor<T> out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    out[i] = (input[i] > T(0) && input[i] < T(6)) ? grad_out[i] : T(0);
  }
  return out;
}

template <typename T>
Tensor<T> global_avgpool(const Tensor<T>& input) {
  const Shape& s = input.shape();
  if (s.h == 0 || s.w == 0) throw DimensionError("global_avgpool: empty spatial extent");
  Tensor<T> out(Shape{s.n, s.c, 1, 1});
  const std::size_t plane = s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* src = input.plane(n, c);
      T acc = 0;
      for (std::size_t p = 0; p < plane; ++p) acc += src[p];
      out.at(n, c, 0, 0) = acc / static_cast<T>(plane);
    }
  }
  return out;
}

template <typename T>
Tensor<T> global_avgpool_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  Tensor<T> out(input_shape);
  const std::size_t plane = input_shape.plane();
  for (std::size_t n = 0; n < input_shape.n; ++n) {
    for (std::size_t c = 0; c < input_shape.c; ++c) {
      const T g = grad_out.at(n, c, 0, 0) / static_cast<T>(plane);
      std::fill(out.plane(n, c), out.plane(n, c) + plane, g);
    }
  }
  return out;
}

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& input, const KernelParams<T>& params) {
  const std::size_t out_f = params.weight.shape().n;
  const std::size_t in_f = params.weight.shape().c;
  check_weight(params.weight, Shape{out_f, in_f, 1, 1}, "linear");
  const Shape& s = input.shape();
  if (s.per_sample() != in_f) {
    throw DimensionError("linear: flattened input length " + std::to_string(s.per_sample()) +
                         " does not match in_features " + std::to_string(in_f));
  }
  Tensor<T> out(Shape{s.n, out_f, 1, 1});
  const T* w = params.weight.ptr();
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* x = input.ptr() + n * in_f;
    for (std::size_t o = 0; o < out_f; ++o) {
      T acc = params.bias ? (*params.bias)[o] : T(0);
      const T* row = w + o * in_f;
      for (std::size_t i = 0; i < in_f; ++i) acc += row[i] * x[i];
      out[n * out_f + o] = acc;
    }
  }
  return out;
}

template <typename T>
void linear_backward(const Tensor<T>& input, const Tensor<T>& grad_out, const KernelParams<T>& params,
                     Tensor<T>* grad_in, KernelGrads<T>* grads) {
  const std::size_t out_f = params.weight.shape().n;
  const std::size_t in_f = params.weight.shape().c;
  const std::size_t batch = input.shape().n;
  const T* w = params.weight.ptr();
  if (grad_in) {
    *grad_in = Tensor<T>(input.shape());
    for (std::size_t n = 0; n < batch; ++n) {
      T* dst = grad_in->ptr() + n * in_f;
      for (std::size_t o = 0; o < out_f; ++o) {
        const T g = grad_out[n * out_f + o];
        const T* row = w + o * in_f;
        for (std::size_t i = 0; i < in_f; ++i) dst[i] += g * row[i];
      }
    }
  }
  if (grads) {
    grads->weight = Tensor<T>(params.weight.shape());
    if (params.bias) grads->bias = Tensor<T>(params.bias->shape());
    for (std::size_t n = 0; n < batch; ++n) {
      const T* x = input.ptr() + n * in_f;
      for (std::size_t o = 0; o < out_f; ++o) {
        const T g = grad_out[n * out_f + o];
        T* row = grads->weight.ptr() + o * in_f;
        for (std::size_t i = 0; i < in_f; ++i) row[i] += g * x[i];
        if (params.bias) grads->bias[o] += g;
      }
    }
  }
}

template <typename T>
Tensor<T> channel_affine_forward(const Tensor<T>& input, const KernelParams<T>& params, int stride) {
  check_stride(stride);
  const Tensor<T> x = subsample(input, stride);
  const Shape& s = x.shape();
  check_weight(params.weight, Shape{s.c, 1, 1, 1}, "channel_affine");
  Tensor<T> out(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T a = params.weight[c];
      const T b = params.bias ? (*params.bias)[c] : T(0);
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (std::size_t p = 0; p < s.plane(); ++p) dst[p] = a * src[p] + b;
    }
  }
  return out;
}

template <typename T>
void channel_affine_backward(const Tensor<T>& input, const Tensor<T>& grad_out, const KernelParams<T>& params,
                             int stride, Tensor<T>* grad_in, KernelGrads<T>* grads) {
  check_stride(stride);
  const Tensor<T> x = subsample(input, stride);
  const Shape& s = x.shape();
  if (grad_out.shape() != s) throw DimensionError("channel_affine backward: grad_out shape mismatch");
  Tensor<T> compact;
  if (grad_in) compact = Tensor<T>(s);
  if (grads) {
    grads->weight = Tensor<T>(params.weight.shape());
    if (params.bias) grads->bias = Tensor<T>(params.bias->shape());
  }
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* src = x.plane(n, c);
      const T* g = grad_out.plane(n, c);
      if (grad_in) {
        T* dst = compact.plane(n, c);
        for (std::size_t p = 0; p < s.plane(); ++p) dst[p] = params.weight[c] * g[p];
      }
      if (grads) {
        T ga = 0;
        T gb = 0;
        for (std::size_t p = 0; p < s.plane(); ++p) {
          ga += g[p] * src[p];
          gb += g[p];
        }
        grads->weight[c] += ga;
        if (params.bias) grads->bias[c] += gb;
      }
    }
  }
  if (grad_in) {
    if (stride == 1) {
      *grad_in = std::move(compact);
    } else {
      *grad_in = Tensor<T>(input.shape());
      scatter_strided(compact, stride, grad_in);
    }
  }
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sb.c == 0 || b.empty()) return a;
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw DimensionError("concat_channels: spatial/batch mismatch " + sa.str() + " vs " + sb.str());
  }
  Tensor<T> out(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t plane = sa.plane();
  for (std::size_t n = 0; n < sa.n; ++n) {
    std::copy(a.plane(n, 0), a.plane(n, 0) + sa.c * plane, out.plane(n, 0));
    std::copy(b.plane(n, 0), b.plane(n, 0) + sb.c * plane, out.plane(n, sa.c));
  }
  return out;
}

template <typename T>
void concat_channels_backward(const Tensor<T>& grad_out, std::size_t a_channels, Tensor<T>* grad_a,
                              Tensor<T>* grad_b) {
  const Shape& s = grad_out.shape();
  const std::size_t b_channels = s.c - a_channels;
  const std::size_t plane = s.plane();
  if (grad_a) *grad_a = Tensor<T>(Shape{s.n, a_channels, s.h, s.w});
  if (grad_b) *grad_b = Tensor<T>(Shape{s.n, b_channels, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    if (grad_a) std::copy(grad_out.plane(n, 0), grad_out.plane(n, 0) + a_channels * plane, grad_a->plane(n, 0));
    if (grad_b) {
      std::copy(grad_out.plane(n, a_channels), grad_out.plane(n, a_channels) + b_channels * plane,
                grad_b->plane(n, 0));
    }
  }
}

namespace {

template <typename T>
void check_labels(const Tensor<T>& logits, std::span<const std::int32_t> labels) {
  const Shape& s = logits.shape();
  if (labels.size() != s.n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(s.n));
  }
  const std::size_t k = s.per_sample();
  for (const std::int32_t label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw DimensionError("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                           std::to_string(k) + ")");
    }
  }
}

}  // namespace

template <typename T>
T cross_entropy_loss(const Tensor<T>& logits, std::span<const std::int32_t> labels) {
  check_labels(logits, labels);
  const std::size_t k = logits.shape().per_sample();
  T total = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const T* z = logits.ptr() + n * k;
    const T zmax = *std::max_element(z, z + k);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) sum += std::exp(z[j] - zmax);
    total += std::log(sum) + zmax - z[labels[n]];
  }
  return total / static_cast<T>(labels.size());
}

template <typename T>
Tensor<T> cross_entropy_backward(const Tensor<T>& logits, std::span<const std::int32_t> labels) {
  check_labels(logits, labels);
  const std::size_t k = logits.shape().per_sample();
  const auto batch = static_cast<T>(labels.size());
  Tensor<T> grad(logits.shape());
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const T* z = logits.ptr() + n * k;
    T* g = grad.ptr() + n * k;
    const T zmax = *std::max_element(z, z + k);
    T sum = 0;
    for (std::size_t j = 0; j < k; ++j) {
      g[j] = std::exp(z[j] - zmax);
      sum += g[j];
    }
    for (std::size_t j = 0; j < k; ++j) g[j] = g[j] / sum / batch;
    g[labels[n]] -= T(1) / batch;
  }
  return grad;
}

template <typename T>
T mse_loss(const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape()) {
    throw DimensionError("mse_loss: shape " + x.shape().str() + " vs " + y.shape().str());
  }
  if (x.empty()) return T(0);
  T acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return acc / static_cast<T>(x.size());
}

template <typename T>
Tensor<T> mse_backward(const Tensor<T>& x, const Tensor<T>& y) {
  if (x.shape() != y.shape()) {
    throw DimensionError("mse_backward: shape " + x.shape().str() + " vs " + y.shape().str());
  }
  Tensor<T> grad(x.shape());
  const T scale = T(2) / static_cast<T>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) grad[i] = scale * (x[i] - y[i]);
  return grad;
}

#define UDTA_INSTANTIATE_KERNELS(T)                                                                         \
  template Tensor<T> conv1x1_forward(const Tensor<T>&, const KernelParams<T>&, int);                        \
  template void conv1x1_backward(const Tensor<T>&, const Tensor<T>&, const KernelParams<T>&, int, Tensor<T>*, \
                                 KernelGrads<T>*);                                                          \
  template Tensor<T> conv3x3_forward(const Tensor<T>&, const KernelParams<T>&, int);                        \
  template void conv3x3_backward(const Tensor<T>&, const Tensor<T>&, const KernelParams<T>&, int, Tensor<T>*, \
                                 KernelGrads<T>*);                                                          \
  template Tensor<T> depthwise3x3_forward(const Tensor<T>&, const KernelParams<T>&, int);                   \
  template void depthwise3x3_backward(const Tensor<T>&, const Tensor<T>&, const KernelParams<T>&, int,       \
                                      Tensor<T>*, KernelGrads<T>*);                                         \
  template Tensor<T> batchnorm_forward(const Tensor<T>&, KernelParams<T>&, BnMode, BnCache<T>*, bool);      \
  template void batchnorm_backward(const Tensor<T>&, const KernelParams<T>&, const BnCache<T>&, Tensor<T>*,  \
                                   KernelGrads<T>*);                                                        \
  template Tensor<T> relu6(const Tensor<T>&);                                                               \
  template Tensor<T> relu6_backward(const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> global_avgpool(const Tensor<T>&);                                                      \
  template Tensor<T> global_avgpool_backward(const Shape&, const Tensor<T>&);                               \
  template Tensor<T> linear_forward(const Tensor<T>&, const KernelParams<T>&);                              \
  template void linear_backward(const Tensor<T>&, const Tensor<T>&, const KernelParams<T>&, Tensor<T>*,      \
                                KernelGrads<T>*);                                                           \
  template Tensor<T> channel_affine_forward(const Tensor<T>&, const KernelParams<T>&, int);                 \
  template void channel_affine_backward(const Tensor<T>&, const Tensor<T>&, const KernelParams<T>&, int,     \
                                        Tensor<T>*, KernelGrads<T>*);                                       \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                               \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                   \
  template void concat_channels_backward(const Tensor<T>&, std::size_t, Tensor<T>*, Tensor<T>*);            \
  template T cross_entropy_loss(const Tensor<T>&, std::span<const std::int32_t>);                           \
  template Tensor<T> cross_entropy_backward(const Tensor<T>&, std::span<const std::int32_t>);               \
  template T mse_loss(const Tensor<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> mse_backward(const Tensor<T>&, const Tensor<T>&);

UDTA_INSTANTIATE_KERNELS(float)
UDTA_INSTANTIATE_KERNELS(double)

#undef UDTA_INSTANTIATE_KERNELS

}  // namespace kernels

template struct BnState<float>;
template struct BnState<double>;

}  // namespace udta
