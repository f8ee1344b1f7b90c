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
#include "lungseg/net.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lungseg/random.hpp"

namespace lungseg {

void AsppConfig::validate() const {
  if (rates.empty()) throw ConfigError("aspp.rates must not be empty");
  std::set<std::size_t> seen;
  for (std::size_t r : rates) {
    if (r < 2) throw ConfigError("aspp.rates must all be >= 2 (got " + std::to_string(r) + ")");
    if (!seen.insert(r).second) {
      throw ConfigError("aspp.rates must be distinct (" + std::to_string(r) + " repeats)");
    }
  }
  if (branch_channels == 0) throw ConfigError("aspp.branch_channels must be positive");
  if (out_channels == 0) throw ConfigError("aspp.out_channels must be positive");
}

void NetworkConfig::validate() const {
  if (input_channels == 0) throw ConfigError("input_channels must be positive");
  if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
  if (output_stride != 16) throw ConfigError("output_stride must be 16");
  if (low_level_stride != 4) throw ConfigError("low_level_stride must be 4");
  if (encoder_widths.size() != 4) {
    throw ConfigError("encoder_widths must list 4 stage widths");
  }
  for (std::size_t w : encoder_widths) {
    if (w == 0) throw ConfigError("encoder_widths entries must be positive");
  }
  aspp.validate();
  if (decoder_channels == 0) throw ConfigError("decoder_channels must be positive");
  if (low_level_projection_channels == 0) {
    throw ConfigError("low_level_projection_channels must be positive");
  }
  if (!(batch_norm.epsilon > 0.0)) throw ConfigError("batch_norm.epsilon must be > 0");
  if (!(batch_norm.momentum >= 0.0 && batch_norm.momentum <= 1.0)) {
    throw ConfigError("batch_norm.momentum must lie in [0, 1]");
  }
}

namespace {

ConvSpec conv3x3(std::size_t in, std::size_t out, std::size_t stride = 1,
                 std::size_t dilation = 1) {
  return {in, out, 3, 3, stride, dilation, dilation};
}

ConvSpec conv1x1(std::size_t in, std::size_t out) { return {in, out, 1, 1, 1, 1, 0}; }

template <typename T>
Parameter<T> make_parameter(std::string name, std::vector<std::size_t> dims) {
  Shape shape{dims.at(0), dims.size() > 1 ? dims[1] : 1, dims.size() > 2 ? dims[2] : 1,
              dims.size() > 3 ? dims[3] : 1};
  return {std::move(name), std::move(dims), Tensor<T>(shape), Tensor<T>(shape)};
}

template <typename T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  if (dst.shape() != src.shape()) {
    throw ShapeError("gradient accumulation shape mismatch " + dst.shape().to_string() +
                     " vs " + src.shape().to_string());
  }
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t k = 0; k < dst.size(); ++k) d[k] += s[k];
}

template <typename T>
Tensor<T> concat_many(const std::vector<const Tensor<T>*>& parts) {
  const Shape& first = parts.front()->shape();
  std::size_t channels = 0;
  for (const Tensor<T>* p : parts) {
    const Shape& s = p->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat shape mismatch " + s.to_string() + " vs " + first.to_string());
    }
    channels += s.c;
  }
  Tensor<T> out({first.n, channels, first.h, first.w});
  for (std::size_t n = 0; n < first.n; ++n) {
    std::size_t offset = 0;
    for (const Tensor<T>* p : parts) {
      std::copy_n(p->plane(n, 0), p->shape().c * first.plane(), out.plane(n, offset));
      offset += p->shape().c;
    }
  }
  return out;
}

std::uint64_t hash_active(std::uint64_t h, const float* x, std::size_t count) {
  for (std::size_t k = 0; k < count; ++k) h = (h ^ (x[k] > 0.0f ? 1u : 0u)) * 0x100000001b3ULL;
  return h;
}
std::uint64_t hash_active(std::uint64_t h, const double* x, std::size_t count) {
  for (std::size_t k = 0; k < count; ++k) h = (h ^ (x[k] > 0.0 ? 1u : 0u)) * 0x100000001b3ULL;
  return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// ConvBnRelu

template <typename T>
ConvBnRelu<T>::ConvBnRelu(std::string name, const ConvSpec& spec)
    : name_(std::move(name)), spec_(spec) {
  spec_.validate();
  weight_ = make_parameter<T>(name_ + ".conv.weight",
                              {spec.out_channels, spec.in_channels, spec.kernel_h, spec.kernel_w});
  gamma_ = make_parameter<T>(name_ + ".bn.gamma", {spec.out_channels});
  beta_ = make_parameter<T>(name_ + ".bn.beta", {spec.out_channels});
  gamma_.value.fill(T(1));
  stats_ = RunningStats<T>::identity(spec.out_channels);
}

template <typename T>
Tensor<T> ConvBnRelu<T>::forward_train(const Tensor<T>& input, const BatchNormOptions& options) {
  input_ = input;
  Tensor<T> conv = conv2d<T>(input, spec_, weight_.value, {});
  Tensor<T> normed = batch_norm<T>(conv, gamma_.value.values(), beta_.value.values(), stats_,
                                   Mode::kTrain, options, &bn_cache_);
  output_ = relu(normed);
  return output_;
}

template <typename T>
Tensor<T> ConvBnRelu<T>::forward_eval(const Tensor<T>& input,
                                      const BatchNormOptions& options) const {
  Tensor<T> conv = conv2d<T>(input, spec_, weight_.value, {});
  RunningStats<T> stats = stats_;
  return relu(batch_norm<T>(conv, gamma_.value.values(), beta_.value.values(), stats,
                            Mode::kEval, options));
}

template <typename T>
Tensor<T> ConvBnRelu<T>::backward(const Tensor<T>& grad_output, bool want_input_grad) {
  if (output_.empty()) throw Error("backward on '" + name_ + "' without a training forward");
  // ReLU passes where its output is positive, which is where its input was.
  Tensor<T> g = relu_backward(output_, grad_output);
  BatchNormGradients<T> bn = batch_norm_backward<T>(g, gamma_.value.values(), bn_cache_);
  T* dg = gamma_.grad.data();
  T* db = beta_.grad.data();
  for (std::size_t c = 0; c < spec_.out_channels; ++c) {
    dg[c] += bn.gamma[c];
    db[c] += bn.beta[c];
  }
  Conv2dGradients<T> conv =
      conv2d_backward<T>(input_, spec_, weight_.value, false, bn.input, want_input_grad);
  add_into(weight_.grad, conv.weight);
  return std::move(conv.input);
}

// ---------------------------------------------------------------------------
// AsppBlock

template <typename T>
AsppBlock<T>::AsppBlock(const std::string& prefix, std::size_t in_channels,
                        const AsppConfig& config)
    : branch_channels_(config.branch_channels) {
  config.validate();
  branches_.emplace_back(prefix + ".conv1x1", conv1x1(in_channels, config.branch_channels));
  for (std::size_t rate : config.rates) {
    branches_.emplace_back(prefix + ".rate" + std::to_string(rate),
                           conv3x3(in_channels, config.branch_channels, 1, rate));
  }
  pooling_ = ConvBnRelu<T>(prefix + ".pool", conv1x1(in_channels, config.branch_channels));
  projection_ =
      ConvBnRelu<T>(prefix + ".project", conv1x1(concat_channels(), config.out_channels));
}

template <typename T>
Tensor<T> AsppBlock<T>::forward_train(const Tensor<T>& features,
                                      const BatchNormOptions& options) {
  const Shape& s = features.shape();
  if (s.h < 1 || s.w < 1) throw ShapeError("aspp input must be at least 1x1");
  feature_shape_ = s;
  std::vector<Tensor<T>> outputs;
  outputs.reserve(branches_.size() + 1);
  for (ConvBnRelu<T>& branch : branches_) outputs.push_back(branch.forward_train(features, options));
  Tensor<T> pooled = pooling_.forward_train(global_avg_pool(features), options);
  outputs.push_back(bilinear_resize(pooled, s.h, s.w));
  std::vector<const Tensor<T>*> parts;
  for (const Tensor<T>& t : outputs) parts.push_back(&t);
  return projection_.forward_train(concat_many(parts), options);
}

template <typename T>
Tensor<T> AsppBlock<T>::forward_eval(const Tensor<T>& features,
                                     const BatchNormOptions& options) const {
  const Shape& s = features.shape();
  if (s.h < 1 || s.w < 1) throw ShapeError("aspp input must be at least 1x1");
  std::vector<Tensor<T>> outputs;
  outputs.reserve(branches_.size() + 1);
  for (const ConvBnRelu<T>& branch : branches_) {
    outputs.push_back(branch.forward_eval(features, options));
  }
  Tensor<T> pooled = pooling_.forward_eval(global_avg_pool(features), options);
  outputs.push_back(bilinear_resize(pooled, s.h, s.w));
  std::vector<const Tensor<T>*> parts;
  for (const Tensor<T>& t : outputs) parts.push_back(&t);
  return projection_.forward_eval(concat_many(parts), options);
}

template <typename T>
Tensor<T> AsppBlock<T>::backward(const Tensor<T>& grad_output) {
  Tensor<T> grad_concat = projection_.backward(grad_output);
  Tensor<T> grad_features(feature_shape_);
  for (std::size_t b = 0; b < branches_.size(); ++b) {
    Tensor<T> slice = slice_channels(grad_concat, b * branch_channels_, branch_channels_);
    add_into(grad_features, branches_[b].backward(slice));
  }
  Tensor<T> slice =
      slice_channels(grad_concat, branches_.size() * branch_channels_, branch_channels_);
  Tensor<T> grad_pooled = bilinear_resize_backward(slice, 1, 1);
  Tensor<T> grad_mean = pooling_.backward(grad_pooled);
  add_into(grad_features, global_avg_pool_backward(grad_mean, feature_shape_.h, feature_shape_.w));
  return grad_features;
}

// ---------------------------------------------------------------------------
// Network

template <typename T>
Network<T> Network<T>::build(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config_ = config;
  const auto& w = config.encoder_widths;
  auto& enc = net.encoder_;
  enc.emplace_back("stem", conv3x3(config.input_channels, w[0], 2));
  enc.emplace_back("stage1.block1", conv3x3(w[0], w[0], 2));
  enc.emplace_back("stage1.block2", conv3x3(w[0], w[0]));
  enc.emplace_back("stage2.block1", conv3x3(w[0], w[1]));
  enc.emplace_back("stage2.block2", conv3x3(w[1], w[1]));
  enc.emplace_back("stage3.block1", conv3x3(w[1], w[2], 2));
  enc.emplace_back("stage3.block2", conv3x3(w[2], w[2]));
  enc.emplace_back("stage4.block1", conv3x3(w[2], w[3], 2));
  enc.emplace_back("stage4.block2", conv3x3(w[3], w[3], 1, 2));
  net.aspp_ = AsppBlock<T>("aspp", w[3], config.aspp);
  net.low_level_ = ConvBnRelu<T>("decoder.low_level",
                                 conv1x1(w[1], config.low_level_projection_channels));
  net.refine1_ = ConvBnRelu<T>(
      "decoder.refine1",
      conv3x3(config.aspp.out_channels + config.low_level_projection_channels,
              config.decoder_channels));
  net.refine2_ =
      ConvBnRelu<T>("decoder.refine2", conv3x3(config.decoder_channels, config.decoder_channels));
  net.classifier_spec_ = conv1x1(config.decoder_channels, config.num_classes);
  net.classifier_weight_ = make_parameter<T>(
      "classifier.weight", {config.num_classes, config.decoder_channels, 1, 1});
  net.classifier_bias_ = make_parameter<T>("classifier.bias", {config.num_classes});

  // He-normal initialization of every convolution weight, in parameter order.
  Rng rng(seed);
  for (Parameter<T>* p : net.parameters()) {
    if (p->dims.size() != 4) continue;
    const double fan_in = static_cast<double>(p->dims[1] * p->dims[2] * p->dims[3]);
    const double stddev = std::sqrt(2.0 / fan_in);
    for (T& v : p->value.values()) v = static_cast<T>(stddev * rng.normal());
  }
  return net;
}

template <typename T>
std::vector<Parameter<T>*> Network<T>::parameters() {
  std::vector<Parameter<T>*> out;
  auto add_block = [&out](ConvBnRelu<T>& b) {
    out.push_back(&b.weight());
    out.push_back(&b.gamma());
    out.push_back(&b.beta());
  };
  for (ConvBnRelu<T>* b : blocks()) add_block(*b);
  out.push_back(&classifier_weight_);
  out.push_back(&classifier_bias_);
  return out;
}

template <typename T>
std::vector<const Parameter<T>*> Network<T>::parameters() const {
  std::vector<const Parameter<T>*> out;
  for (Parameter<T>* p : const_cast<Network*>(this)->parameters()) out.push_back(p);
  return out;
}

template <typename T>
std::vector<Buffer<T>> Network<T>::buffers() {
  std::vector<Buffer<T>> out;
  for (ConvBnRelu<T>* b : blocks()) {
    out.push_back({b->name() + ".bn.running_mean", &b->stats().mean});
    out.push_back({b->name() + ".bn.running_var", &b->stats().var});
  }
  return out;
}

template <typename T>
std::vector<ConvBnRelu<T>*> Network<T>::blocks() {
  std::vector<ConvBnRelu<T>*> out;
  for (ConvBnRelu<T>& b : encoder_) out.push_back(&b);
  for (ConvBnRelu<T>& b : aspp_.branches()) out.push_back(&b);
  out.push_back(&aspp_.pooling());
  out.push_back(&aspp_.projection());
  out.push_back(&low_level_);
  out.push_back(&refine1_);
  out.push_back(&refine2_);
  return out;
}

template <typename T>
std::size_t Network<T>::parameter_count() const {
  std::size_t total = 0;
  for (const Parameter<T>* p : parameters()) {
    std::size_t count = 1;
    for (std::size_t d : p->dims) count *= d;
    total += count;
  }
  return total;
}

template <typename T>
void Network<T>::check_input(const Shape& s) const {
  if (s.c != config_.input_channels) {
    throw ShapeError("network input has " + std::to_string(s.c) + " channels, expected " +
                     std::to_string(config_.input_channels));
  }
  if (s.n == 0) throw ShapeError("network input batch is empty");
  if (s.h == 0 || s.w == 0 || s.h % config_.output_stride != 0 ||
      s.w % config_.output_stride != 0) {
    throw ShapeError("network input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                     " is not divisible by output stride " +
                     std::to_string(config_.output_stride));
  }
}

template <typename T>
template <typename Block>
Tensor<T> Network<T>::run(Block& block, const Tensor<T>& x, const char* label) {
  Tensor<T> y = block.forward_train(x, config_.batch_norm);
  shapes_.emplace_back(label, y.shape());
  if (track_kinks_) signature_ = hash_active(signature_, y.data(), y.size());
  return y;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& batch, Mode mode) {
  if (mode == Mode::kEval) return predict(batch);
  const Shape& s = batch.shape();
  check_input(s);
  shapes_.clear();
  signature_ = 0xcbf29ce484222325ULL;
  has_cache_ = false;
  input_shape_ = s;

  Tensor<T> x = batch;
  Tensor<T> low;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    x = run(encoder_[i], x, encoder_[i].name().c_str());
    if (i == kLowLevelTapBlock) low = x;
  }
  shapes_.emplace_back("encoder", x.shape());
  shapes_.emplace_back("low_level", low.shape());
  Tensor<T> context = aspp_.forward_train(x, config_.batch_norm);
  shapes_.emplace_back("aspp", context.shape());
  if (track_kinks_) {
    for (const ConvBnRelu<T>& b : aspp_.branches()) {
      signature_ = hash_active(signature_, b.output().data(), b.output().size());
    }
    signature_ = hash_active(signature_, aspp_.pooling().output().data(),
                             aspp_.pooling().output().size());
    signature_ = hash_active(signature_, context.data(), context.size());
  }
  aspp_channels_ = context.shape().c;
  Tensor<T> up = bilinear_resize(context, low.shape().h, low.shape().w);
  Tensor<T> projected = run(low_level_, low, "decoder.low_level");
  Tensor<T> merged = concat_channels(up, projected);
  decoder_shape_ = merged.shape();
  Tensor<T> r = run(refine1_, merged, "decoder.refine1");
  refined_ = run(refine2_, r, "decoder.refine2");
  Tensor<T> coarse = conv2d<T>(refined_, classifier_spec_, classifier_weight_.value,
                               classifier_bias_.value.values());
  shapes_.emplace_back("classifier", coarse.shape());
  Tensor<T> logits = bilinear_resize(coarse, s.h, s.w);
  shapes_.emplace_back("logits", logits.shape());
  has_cache_ = true;
  return logits;
}

template <typename T>
Tensor<T> Network<T>::predict(const Tensor<T>& batch) const {
  const Shape& s = batch.shape();
  check_input(s);
  const BatchNormOptions& bn = config_.batch_norm;
  Tensor<T> x = batch;
  Tensor<T> low;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    x = encoder_[i].forward_eval(x, bn);
    if (i == kLowLevelTapBlock) low = x;
  }
  Tensor<T> context = aspp_.forward_eval(x, bn);
  Tensor<T> up = bilinear_resize(context, low.shape().h, low.shape().w);
  Tensor<T> merged = concat_channels(up, low_level_.forward_eval(low, bn));
  Tensor<T> refined = refine2_.forward_eval(refine1_.forward_eval(merged, bn), bn);
  Tensor<T> coarse = conv2d<T>(refined, classifier_spec_, classifier_weight_.value,
                               classifier_bias_.value.values());
  return bilinear_resize(coarse, s.h, s.w);
}

template <typename T>
void Network<T>::backward(const Tensor<T>& logit_grad) {
  if (!has_cache_) throw Error("backward called without a preceding training forward");
  const Shape expected{input_shape_.n, config_.num_classes, input_shape_.h, input_shape_.w};
  if (logit_grad.shape() != expected) {
    throw ShapeError("logit gradient shape " + logit_grad.shape().to_string() + " != " +
                     expected.to_string());
  }
  for (Parameter<T>* p : parameters()) p->grad.fill(T(0));

  Tensor<T> g = bilinear_resize_backward(logit_grad, refined_.shape().h, refined_.shape().w);
  Conv2dGradients<T> cls = conv2d_backward<T>(refined_, classifier_spec_,
                                              classifier_weight_.value, true, g, true);
  add_into(classifier_weight_.grad, cls.weight);
  std::copy(cls.bias.begin(), cls.bias.end(), classifier_bias_.grad.data());
  g = refine2_.backward(cls.input);
  g = refine1_.backward(g);
  Tensor<T> grad_up = slice_channels(g, 0, aspp_channels_);
  Tensor<T> grad_projected =
      slice_channels(g, aspp_channels_, decoder_shape_.c - aspp_channels_);
  Tensor<T> grad_low = low_level_.backward(grad_projected);
  const Shape& enc_out = encoder_.back().output().shape();
  Tensor<T> grad_context = bilinear_resize_backward(grad_up, enc_out.h, enc_out.w);
  Tensor<T> grad_x = aspp_.backward(grad_context);
  for (std::size_t i = encoder_.size(); i-- > 0;) {
    if (i == kLowLevelTapBlock) add_into(grad_x, grad_low);
    grad_x = encoder_[i].backward(grad_x, i > 0);
  }
}

template <typename T>
std::uint64_t Network<T>::activation_signature() const {
  return signature_;
}

template <typename To, typename From>
Network<To> convert_network(const Network<From>& source) {
  Network<To> out = Network<To>::build(source.config(), 0);
  auto& src = const_cast<Network<From>&>(source);
  auto dst_params = out.parameters();
  auto src_params = src.parameters();
  for (std::size_t i = 0; i < dst_params.size(); ++i) {
    const auto values = src_params[i]->value.values();
    std::copy(values.begin(), values.end(), dst_params[i]->value.values().begin());
  }
  auto dst_buffers = out.buffers();
  auto src_buffers = src.buffers();
  for (std::size_t i = 0; i < dst_buffers.size(); ++i) {
    dst_buffers[i].values->assign(src_buffers[i].values->begin(), src_buffers[i].values->end());
  }
  return out;
}

template class ConvBnRelu<float>;
template class ConvBnRelu<double>;
template class AsppBlock<float>;
template class AsppBlock<double>;
template class Network<float>;
template class Network<double>;
template Network<double> convert_network<double, float>(const Network<float>&);
template Network<float> convert_network<float, double>(const Network<double>&);
template Network<float> convert_network<float, float>(const Network<float>&);
template Network<double> convert_network<double, double>(const Network<double>&);

}  // namespace lungseg
