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

// Encoder / ASPP / decoder segmentation network with hand-written backward.
//
// Topology (strides relative to the input):
//
//   stem      3x3 s2                                  /2
//   stage1    2 x 3x3, first s2                       /4
//   stage2    2 x 3x3                                 /4   -> low-level tap
//   stage3    2 x 3x3, first s2                       /8
//   stage4    2 x 3x3, first s2, second dilation 2    /16  -> encoder output
//   aspp      1x1 | 3x3 at each rate | image pooling -> concat -> 1x1
//   decoder   upsample to /4, concat 1x1-projected tap, 2 x 3x3, 1x1 classifier,
//             upsample to input size
//
// Every convolution except the classifier is followed by batch norm and ReLU
// and carries no bias.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lungseg/ops.hpp"
#include "lungseg/tensor.hpp"

namespace lungseg {

struct AsppConfig {
  std::vector<std::size_t> rates{6, 12, 18};
  std::size_t branch_channels = 256;
  std::size_t out_channels = 256;

  void validate() const;
  friend bool operator==(const AsppConfig&, const AsppConfig&) = default;
};

struct NetworkConfig {
  std::size_t input_channels = 1;
  std::size_t num_classes = 2;
  std::size_t output_stride = 16;
  std::size_t low_level_stride = 4;
  std::vector<std::size_t> encoder_widths{32, 64, 128, 256};
  AsppConfig aspp;
  std::size_t decoder_channels = 256;
  std::size_t low_level_projection_channels = 48;
  BatchNormOptions batch_norm;

  /// Throws ConfigError naming the violated constraint.
  void validate() const;
  friend bool operator==(const NetworkConfig& a, const NetworkConfig& b) {
    return a.input_channels == b.input_channels && a.num_classes == b.num_classes &&
           a.output_stride == b.output_stride && a.low_level_stride == b.low_level_stride &&
           a.encoder_widths == b.encoder_widths && a.aspp == b.aspp &&
           a.decoder_channels == b.decoder_channels &&
           a.low_level_projection_channels == b.low_level_projection_channels &&
           a.batch_norm.epsilon == b.batch_norm.epsilon &&
           a.batch_norm.momentum == b.batch_norm.momentum;
  }
};

/// A trainable tensor with its gradient. `dims` is the declared shape
/// (e.g. {C} for a batch-norm scale) while `value` stores it as NCHW.
template <typename T>
struct Parameter {
  std::string name;
  std::vector<std::size_t> dims;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Non-trainable state (batch-norm running statistics).
template <typename T>
struct Buffer {
  std::string name;
  std::vector<T>* values;
};

/// conv -> batch norm -> ReLU, keeping what its backward pass needs.
template <typename T>
class ConvBnRelu {
 public:
  ConvBnRelu() = default;
  ConvBnRelu(std::string name, const ConvSpec& spec);

  Tensor<T> forward_train(const Tensor<T>& input, const BatchNormOptions& options);
  Tensor<T> forward_eval(const Tensor<T>& input, const BatchNormOptions& options) const;
  /// Accumulates parameter gradients; returns the input gradient if requested.
  Tensor<T> backward(const Tensor<T>& grad_output, bool want_input_grad = true);

  const std::string& name() const { return name_; }
  const ConvSpec& spec() const { return spec_; }
  Parameter<T>& weight() { return weight_; }
  Parameter<T>& gamma() { return gamma_; }
  Parameter<T>& beta() { return beta_; }
  const Parameter<T>& weight() const { return weight_; }
  const Parameter<T>& gamma() const { return gamma_; }
  const Parameter<T>& beta() const { return beta_; }
  RunningStats<T>& stats() { return stats_; }
  const RunningStats<T>& stats() const { return stats_; }
  /// Output of the last training forward (post-ReLU).
  const Tensor<T>& output() const { return output_; }

 private:
  std::string name_;
  ConvSpec spec_;
  Parameter<T> weight_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  RunningStats<T> stats_;
  Tensor<T> input_;
  Tensor<T> output_;
  BatchNormCache<T> bn_cache_;
};

/// Atrous spatial pyramid pooling: parallel 1x1 conv, 3x3 convs at each
/// dilation rate (padding = rate), and image pooling (global average ->
/// 1x1 conv -> bilinear broadcast), concatenated and fused by a 1x1 conv.
template <typename T>
class AsppBlock {
 public:
  AsppBlock() = default;
  AsppBlock(const std::string& prefix, std::size_t in_channels, const AsppConfig& config);

  Tensor<T> forward_train(const Tensor<T>& features, const BatchNormOptions& options);
  Tensor<T> forward_eval(const Tensor<T>& features, const BatchNormOptions& options) const;
  Tensor<T> backward(const Tensor<T>& grad_output);

  /// 1x1 branch, then one branch per rate, in config order.
  std::vector<ConvBnRelu<T>>& branches() { return branches_; }
  const std::vector<ConvBnRelu<T>>& branches() const { return branches_; }
  ConvBnRelu<T>& pooling() { return pooling_; }
  const ConvBnRelu<T>& pooling() const { return pooling_; }
  ConvBnRelu<T>& projection() { return projection_; }
  const ConvBnRelu<T>& projection() const { return projection_; }
  std::size_t concat_channels() const {
    return (branches_.size() + 1) * branch_channels_;
  }

 private:
  std::vector<ConvBnRelu<T>> branches_;
  ConvBnRelu<T> pooling_;
  ConvBnRelu<T> projection_;
  std::size_t branch_channels_ = 0;
  Shape feature_shape_;
};

template <typename T>
class Network {
 public:
  /// Deterministic in (config, seed): He-normal conv weights, zero biases,
  /// unit batch-norm scales, zero shifts, identity running statistics.
  static Network build(const NetworkConfig& config, std::uint64_t seed);

  const NetworkConfig& config() const { return config_; }

  /// Logits (n, num_classes, H, W). Train mode caches intermediates for
  /// backward() and updates running statistics; eval mode is const-pure.
  /// Throws ShapeError unless H and W are divisible by the output stride.
  Tensor<T> forward(const Tensor<T>& batch, Mode mode);
  Tensor<T> predict(const Tensor<T>& batch) const;

  /// Fills every parameter's gradient (overwriting previous values) with the
  /// adjoint of the last training forward. Throws Error without one.
  void backward(const Tensor<T>& logit_grad);

  std::vector<Parameter<T>*> parameters();
  std::vector<const Parameter<T>*> parameters() const;
  std::vector<Buffer<T>> buffers();
  std::size_t parameter_count() const;

  /// Shapes of named intermediates from the last forward.
  const std::vector<std::pair<std::string, Shape>>& intermediate_shapes() const {
    return shapes_;
  }

  /// When enabled, training forwards hash every ReLU's active set into
  /// activation_signature(); used to detect kinks in finite differences.
  void set_kink_tracking(bool enabled) { track_kinks_ = enabled; }
  std::uint64_t activation_signature() const;

  /// Blocks in forward order (stem .. decoder refinement).
  std::vector<ConvBnRelu<T>*> blocks();
  AsppBlock<T>& aspp() { return aspp_; }
  const AsppBlock<T>& aspp() const { return aspp_; }
  Parameter<T>& classifier_weight() { return classifier_weight_; }
  Parameter<T>& classifier_bias() { return classifier_bias_; }
  const ConvSpec& classifier_spec() const { return classifier_spec_; }

 private:
  Network() = default;

  template <typename Block>
  Tensor<T> run(Block& block, const Tensor<T>& x, const char* label);
  void check_input(const Shape& s) const;

  NetworkConfig config_;
  std::vector<ConvBnRelu<T>> encoder_;  // stem, stage1 (2), stage2 (2), stage3 (2), stage4 (2)
  AsppBlock<T> aspp_;
  ConvBnRelu<T> low_level_;
  ConvBnRelu<T> refine1_;
  ConvBnRelu<T> refine2_;
  ConvSpec classifier_spec_;
  Parameter<T> classifier_weight_;
  Parameter<T> classifier_bias_;

  // Training caches.
  bool has_cache_ = false;
  Shape input_shape_;
  Shape decoder_shape_;
  std::size_t aspp_channels_ = 0;
  Tensor<T> refined_;
  std::vector<std::pair<std::string, Shape>> shapes_;
  bool track_kinks_ = false;
  std::uint64_t signature_ = 0;

  template <typename U>
  friend class Network;
  template <typename To, typename From>
  friend Network<To> convert_network(const Network<From>& source);
};

/// Copies every parameter and buffer into a network of another precision.
template <typename To, typename From>
Network<To> convert_network(const Network<From>& source);

/// Index of the encoder block whose output is the low-level tap.
inline constexpr std::size_t kLowLevelTapBlock = 4;

}  // namespace lungseg
