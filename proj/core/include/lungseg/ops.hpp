/*
 * Copyright 2026 The lungseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Differentiable primitives. Every forward operation has a hand-derived
// backward that computes the exact adjoint.

#include <cstddef>
#include <span>
#include <vector>

#include "lungseg/tensor.hpp"

namespace lungseg {

/// Geometry of a 2-D (optionally dilated) convolution. Padding is zero fill,
/// symmetric on all four sides.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
  /// floor((in + 2 pad - dilation (k - 1) - 1) / stride) + 1; throws ShapeError
  /// when the result would be < 1.
  std::size_t output_rows(std::size_t in_rows) const;
  std::size_t output_cols(std::size_t in_cols) const;
  Shape weight_shape() const { return {out_channels, in_channels, kernel_h, kernel_w}; }
};

template <typename T>
struct Conv2dGradients {
  Tensor<T> input;  // empty when not requested
  Tensor<T> weight;
  std::vector<T> bias;  // empty when the convolution has no bias
};

/// y[n,o,i,j] = bias[o] + sum_{c,a,b} x[n,c,i*s + a*r - p, j*s + b*r - p] w[o,c,a,b]
///
/// An empty `bias` means no bias term. Taps are accumulated in (c, a, b)
/// order with fused multiply-adds, then the bias is added.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weight,
                 std::span<const T> bias);

template <typename T>
Conv2dGradients<T> conv2d_backward(const Tensor<T>& input, const ConvSpec& spec,
                                   const Tensor<T>& weight, bool has_bias,
                                   const Tensor<T>& grad_output,
                                   bool want_input_grad = true);

/// Half-pixel-center bilinear resampling with edge clamping.
template <typename T>
Tensor<T> bilinear_resize(const Tensor<T>& input, std::size_t out_h, std::size_t out_w);

template <typename T>
Tensor<T> bilinear_resize_backward(const Tensor<T>& grad_output, std::size_t in_h,
                                   std::size_t in_w);

enum class Mode { kTrain, kEval };

struct BatchNormOptions {
  double epsilon = 1e-5;
  double momentum = 0.1;
};

/// Per-channel running statistics. Empty until the first training pass.
template <typename T>
struct RunningStats {
  std::vector<T> mean;
  std::vector<T> var;

  bool empty() const { return mean.empty(); }
  static RunningStats identity(std::size_t channels) {
    return {std::vector<T>(channels, T(0)), std::vector<T>(channels, T(1))};
  }
};

/// Intermediates retained by batch_norm for its backward pass.
template <typename T>
struct BatchNormCache {
  Mode mode = Mode::kTrain;
  std::vector<T> inv_std;
  Tensor<T> normalized;
};

template <typename T>
struct BatchNormGradients {
  Tensor<T> input;
  std::vector<T> gamma;
  std::vector<T> beta;
};

/// Train mode normalizes with batch statistics (biased variance) and folds
/// them into `stats` by exponential moving average (unbiased variance).
/// Eval mode normalizes with `stats` and throws ConfigError if none exist.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, std::span<const T> gamma,
                     std::span<const T> beta, RunningStats<T>& stats, Mode mode,
                     const BatchNormOptions& options = {},
                     BatchNormCache<T>* cache = nullptr);

template <typename T>
BatchNormGradients<T> batch_norm_backward(const Tensor<T>& grad_output,
                                          std::span<const T> gamma,
                                          const BatchNormCache<T>& cache);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

/// Passes the gradient where the forward input was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output);

/// Mean over each (sample, channel) plane; output is (n, c, 1, 1).
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input);

template <typename T>
Tensor<T> global_avg_pool_backward(const Tensor<T>& grad_output, std::size_t in_h,
                                   std::size_t in_w);

/// Stacks `first` and `second` along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& first, const Tensor<T>& second);

/// Channels [begin, begin + count) of `input`.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& input, std::size_t begin, std::size_t count);

}  // namespace lungseg
