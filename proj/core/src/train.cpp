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
#include "lungseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "lungseg/error.hpp"

namespace lungseg {
namespace {

constexpr std::uint64_t kShuffleStream = 0x5348554646ull;  // "SHUFF"
constexpr std::uint64_t kSplitStream = 0x53504c4954ull;    // "SPLIT"

}  // namespace

void AugmentPolicy::validate() const {
  if (!(scale_range.first > 0.0) || !(scale_range.first <= scale_range.second)) {
    throw ConfigError("augment scale_range must satisfy 0 < low <= high");
  }
  if (!(shift_fraction >= 0.0 && shift_fraction <= 0.5)) {
    throw ConfigError("augment shift_fraction must lie within [0, 0.5]");
  }
  if (!(rotation_deg >= 0.0 && rotation_deg <= 180.0)) {
    throw ConfigError("augment rotation_deg must lie within [0, 180]");
  }
}

AugmentDraw draw_augmentation(const AugmentPolicy& policy, Rng& rng) {
  AugmentDraw d;
  if (!policy.enabled) return d;
  d.scale = rng.uniform(policy.scale_range.first, policy.scale_range.second);
  d.shift_x = rng.uniform(-policy.shift_fraction, policy.shift_fraction);
  d.shift_y = rng.uniform(-policy.shift_fraction, policy.shift_fraction);
  d.rotation_deg = rng.uniform(-policy.rotation_deg, policy.rotation_deg);
  return d;
}

std::pair<GrayImage, BinaryMask> augment_sample(const GrayImage& image, const BinaryMask& mask,
                                                const AugmentPolicy& policy,
                                                const AugmentDraw& draw) {
  if (image.height != mask.height() || image.width != mask.width()) {
    throw ShapeError("augment_sample: image is " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + " but mask is " +
                     std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
  }
  if (!(draw.scale > 0.0)) throw ConfigError("augment draw scale must be positive");
  const std::size_t h = image.height;
  const std::size_t w = image.width;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double tx = draw.shift_x * static_cast<double>(w);
  const double ty = draw.shift_y * static_cast<double>(h);
  const double theta = draw.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  const double max_x = static_cast<double>(w) - 1.0;
  const double max_y = static_cast<double>(h) - 1.0;

  GrayImage out_image(h, w, policy.fill_value);
  BinaryMask out_mask(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      // Inverse of p' = center + shift + scale * R(theta) * (p - center).
      const double u = static_cast<double>(j) - cx - tx;
      const double v = static_cast<double>(i) - cy - ty;
      const double x = cx + (c * u + s * v) / draw.scale;
      const double y = cy + (-s * u + c * v) / draw.scale;

      if (x >= 0.0 && x <= max_x && y >= 0.0 && y <= max_y) {
        const auto x0 = static_cast<std::size_t>(x);
        const auto y0 = static_cast<std::size_t>(y);
        const std::size_t x1 = std::min(x0 + 1, w - 1);
        const std::size_t y1 = std::min(y0 + 1, h - 1);
        const double fx = x - static_cast<double>(x0);
        const double fy = y - static_cast<double>(y0);
        const double top = image.at(y0, x0) * (1.0 - fx) + image.at(y0, x1) * fx;
        const double bottom = image.at(y1, x0) * (1.0 - fx) + image.at(y1, x1) * fx;
        out_image.at(i, j) = static_cast<float>(top * (1.0 - fy) + bottom * fy);
      }
      const double mx = std::round(x);
      const double my = std::round(y);
      if (mx >= 0.0 && mx <= max_x && my >= 0.0 && my <= max_y) {
        out_mask.set(i, j, mask.at(static_cast<std::size_t>(my), static_cast<std::size_t>(mx)));
      }
    }
  }
  return {std::move(out_image), std::move(out_mask)};
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train batch_size must be >= 1");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train learning_rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("train momentum must lie within [0, 1)");
  }
  if (input_size < 1) throw ConfigError("train input_size must be positive");
  if (!(split_ratio > 0.0 && split_ratio < 1.0)) {
    throw ConfigError("train split_ratio must lie within (0, 1)");
  }
  augment.validate();
}

ClassWeights compute_class_weights(std::span<const BinaryMask> masks, ClassWeightMode mode) {
  std::array<std::size_t, 2> counts{0, 0};
  for (const BinaryMask& m : masks) {
    const std::size_t fg = m.foreground();
    counts[1] += fg;
    counts[0] += m.size() - fg;
  }
  static const char* kNames[2] = {"background", "lung"};
  for (int c = 0; c < 2; ++c) {
    if (counts[c] == 0) {
      throw TrainError(std::string("class weights: no ") + kNames[c] +
                       " pixels in the training masks");
    }
  }
  if (mode == ClassWeightMode::kUniform) return {1.0, 1.0};
  const double total = static_cast<double>(counts[0] + counts[1]);
  const double f0 = static_cast<double>(counts[0]) / total;
  const double f1 = static_cast<double>(counts[1]) / total;
  const double median = (f0 + f1) / 2.0;
  return {median / f0, median / f1};
}

template <typename T>
CrossEntropyResult<T> weighted_cross_entropy(const Tensor<T>& logits,
                                             std::span<const std::uint8_t> labels,
                                             std::span<const double> weights) {
  const Shape& s = logits.shape();
  if (weights.size() != s.c) {
    throw ShapeError("cross entropy: " + std::to_string(weights.size()) +
                     " class weights for " + std::to_string(s.c) + " logit channels");
  }
  if (labels.size() != s.n * s.plane()) {
    throw ShapeError("cross entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     s.to_string());
  }
  for (double w : weights) {
    if (!(w > 0.0) || !std::isfinite(w)) throw ConfigError("cross entropy weights must be positive");
  }
  const std::size_t plane = s.plane();
  double weight_sum = 0.0;
  for (std::uint8_t y : labels) {
    if (y >= s.c) {
      throw Error("cross entropy: label " + std::to_string(y) + " outside [0, " +
                  std::to_string(s.c) + ")");
    }
    weight_sum += weights[y];
  }

  CrossEntropyResult<T> out;
  out.grad = Tensor<T>(s);
  if (labels.empty()) return out;
  std::vector<double> prob(s.c);
  double numerator = 0.0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::uint8_t y = labels[n * plane + p];
      double top = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < s.c; ++c) {
        top = std::max(top, static_cast<double>(logits.plane(n, c)[p]));
      }
      double total = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        prob[c] = std::exp(static_cast<double>(logits.plane(n, c)[p]) - top);
        total += prob[c];
      }
      const double log_total = std::log(total);
      numerator += weights[y] * (log_total - (static_cast<double>(logits.plane(n, y)[p]) - top));
      const double scale = weights[y] / weight_sum;
      for (std::size_t c = 0; c < s.c; ++c) {
        const double target = c == y ? 1.0 : 0.0;
        out.grad.plane(n, c)[p] = static_cast<T>(scale * (prob[c] / total - target));
      }
    }
  }
  out.loss = numerator / weight_sum;
  return out;
}

template <typename T>
CrossEntropyResult<T> weighted_cross_entropy(const Tensor<T>& logits,
                                             std::span<const BinaryMask> masks,
                                             const ClassWeights& weights) {
  const Shape& s = logits.shape();
  if (masks.size() != s.n) {
    throw ShapeError("cross entropy: " + std::to_string(masks.size()) + " masks for logits " +
                     s.to_string());
  }
  std::vector<std::uint8_t> labels;
  labels.reserve(s.n * s.plane());
  for (const BinaryMask& m : masks) {
    if (m.height() != s.h || m.width() != s.w) {
      throw ShapeError("cross entropy: mask " + std::to_string(m.height()) + "x" +
                       std::to_string(m.width()) + " does not match logits " + s.to_string());
    }
    labels.insert(labels.end(), m.values().begin(), m.values().end());
  }
  return weighted_cross_entropy(logits, std::span<const std::uint8_t>(labels),
                                std::span<const double>(weights));
}

template <typename T>
OptimizerState<T> OptimizerState<T>::zeros_like(std::span<Parameter<T>* const> params) {
  OptimizerState<T> state;
  for (const Parameter<T>* p : params) state.velocity.emplace(p->name, Tensor<T>(p->value.shape()));
  return state;
}

template <typename T>
void sgd_momentum_step(std::span<Parameter<T>* const> params, OptimizerState<T>& state,
                       double learning_rate, double momentum) {
  if (params.size() != state.velocity.size()) {
    throw ConfigError("optimizer state holds " + std::to_string(state.velocity.size()) +
                      " velocities for " + std::to_string(params.size()) + " parameters");
  }
  for (const Parameter<T>* p : params) {
    auto it = state.velocity.find(p->name);
    if (it == state.velocity.end()) {
      throw ConfigError("optimizer state has no velocity for '" + p->name + "'");
    }
    if (it->second.shape() != p->value.shape() || p->grad.shape() != p->value.shape()) {
      throw ShapeError("optimizer: shape mismatch for '" + p->name + "'");
    }
  }
  const T lr = static_cast<T>(learning_rate);
  const T mu = static_cast<T>(momentum);
  for (Parameter<T>* p : params) {
    T* v = state.velocity.at(p->name).data();
    T* value = p->value.data();
    const T* g = p->grad.data();
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      v[k] = mu * v[k] + g[k];
      value[k] = value[k] - lr * v[k];
    }
  }
}

std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& manifest,
                                                          double ratio, std::uint64_t seed) {
  if (manifest.samples.empty()) throw ConfigError("cannot split an empty manifest");
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("split ratio must lie within [0, 1]");
  std::vector<std::size_t> order(manifest.samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, kSplitStream));
  shuffle(order, rng);
  const auto n_train =
      static_cast<std::size_t>(std::llround(ratio * static_cast<double>(order.size())));
  std::pair<DatasetManifest, DatasetManifest> out;
  out.first.provenance = manifest.provenance;
  out.second.provenance = manifest.provenance;
  for (std::size_t k = 0; k < order.size(); ++k) {
    Sample s = manifest.samples[order[k]];
    s.split = k < n_train ? Split::kTrain : Split::kTest;
    (k < n_train ? out.first : out.second).samples.push_back(std::move(s));
  }
  return out;
}

TrainingSet load_training_set(const DatasetManifest& manifest, std::size_t size) {
  TrainingSet set;
  for (const Sample& s : manifest.samples) {
    if (!s.mask) throw TrainError("sample '" + s.id + "' has no mask");
    try {
      const GrayImage image = load_image(s.image);
      const BinaryMask mask = load_mask(*s.mask);
      auto [img, msk] = resize_pair(image, mask, size);
      set.ids.push_back(s.id);
      set.images.push_back(std::move(img));
      set.masks.push_back(std::move(msk));
    } catch (const Error& e) {
      throw TrainError("cannot load sample '" + s.id + "': " + e.what());
    }
  }
  return set;
}

TrainSummary fit(Network<float>& net, const TrainingSet& data, const TrainConfig& config,
                 const TrainEventSink& sink) {
  config.validate();
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = data.images.size();
  if (n == 0) throw TrainError("training set is empty");
  if (data.masks.size() != n || data.ids.size() != n) {
    throw TrainError("training set ids, images and masks differ in count");
  }
  if (net.config().input_channels != 1) {
    throw ConfigError("training expects a single-channel network input");
  }
  const std::size_t size = config.input_size;
  for (std::size_t i = 0; i < n; ++i) {
    if (data.images[i].height != size || data.images[i].width != size ||
        data.masks[i].height() != size || data.masks[i].width() != size) {
      throw TrainError("sample '" + data.ids[i] + "' is not " + std::to_string(size) + "x" +
                       std::to_string(size));
    }
  }

  TrainSummary summary;
  summary.class_weights = compute_class_weights(data.masks, config.class_weight_mode);
  std::vector<Parameter<float>*> params = net.parameters();
  OptimizerState<float> state = OptimizerState<float>::zeros_like(params);

  const std::size_t batch = std::min(config.batch_size, n);
  const std::size_t batches_per_epoch = n / batch;
  std::vector<std::uint64_t> id_hashes(n);
  for (std::size_t i = 0; i < n; ++i) id_hashes[i] = hash_string(data.ids[i]);

  for (std::size_t epoch = 1; epoch <= config.epochs && !summary.stopped_by_sink; ++epoch) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng order_rng(derive_seed(config.seed, kShuffleStream, epoch));
    shuffle(order, order_rng);

    double epoch_loss = 0.0;
    std::size_t epoch_steps = 0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      Tensor<float> input({batch, 1, size, size});
      std::vector<BinaryMask> masks;
      masks.reserve(batch);
      for (std::size_t k = 0; k < batch; ++k) {
        const std::size_t idx = order[b * batch + k];
        const GrayImage* image = &data.images[idx];
        std::pair<GrayImage, BinaryMask> augmented;
        if (config.augment.enabled) {
          Rng rng(derive_seed(config.seed, id_hashes[idx], epoch));
          augmented = augment_sample(*image, data.masks[idx], config.augment,
                                     draw_augmentation(config.augment, rng));
          image = &augmented.first;
          masks.push_back(std::move(augmented.second));
        } else {
          masks.push_back(data.masks[idx]);
        }
        std::copy(image->values.begin(), image->values.end(), input.plane(k, 0));
      }

      const Tensor<float> logits = net.forward(input, Mode::kTrain);
      const CrossEntropyResult<float> ce =
          weighted_cross_entropy(logits, std::span<const BinaryMask>(masks), summary.class_weights);
      const std::size_t iteration = summary.iterations + 1;
      if (!std::isfinite(ce.loss)) {
        throw TrainError("non-finite loss at iteration " + std::to_string(iteration));
      }
      net.backward(ce.grad);
      sgd_momentum_step(std::span<Parameter<float>* const>(params), state, config.learning_rate,
                        config.momentum);
      summary.iterations = iteration;
      epoch_loss += ce.loss;
      ++epoch_steps;
      if (sink && !sink({TrainEvent::Kind::kIteration, iteration, epoch, ce.loss,
                         config.learning_rate})) {
        summary.stopped_by_sink = true;
        break;
      }
    }
    summary.epochs_completed = epoch;
    summary.final_mean_loss = epoch_loss / static_cast<double>(epoch_steps);
    if (sink && !sink({TrainEvent::Kind::kEpoch, summary.iterations, epoch,
                       summary.final_mean_loss, config.learning_rate})) {
      summary.stopped_by_sink = true;
    }
  }
  summary.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return summary;
}

TrainSummary fit(Network<float>& net, const DatasetManifest& manifest, const TrainConfig& config,
                 const TrainEventSink& sink) {
  config.validate();
  return fit(net, load_training_set(manifest, config.input_size), config, sink);
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

}  // namespace

TrainLog::TrainLog(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::app) {
  if (!out_) throw IoError("cannot open training log '" + path.string() + "'");
}

void TrainLog::record(const TrainEvent& event) {
  const nlohmann::json line = {
      {"type", event.kind == TrainEvent::Kind::kIteration ? "iteration" : "epoch"},
      {"iteration", event.iteration},
      {"epoch", event.epoch},
      {"loss", event.loss},
      {"learning_rate", event.learning_rate},
      {"timestamp", utc_timestamp()}};
  out_ << line.dump() << '\n';
  out_.flush();
  if (!out_) throw IoError("failed writing training log '" + path_.string() + "'");
}

void TrainLog::finish(const TrainSummary& summary) {
  const nlohmann::json line = {{"type", "summary"},
                               {"epochs", summary.epochs_completed},
                               {"iterations", summary.iterations},
                               {"wall_seconds", summary.wall_seconds},
                               {"final_mean_loss", summary.final_mean_loss},
                               {"class_weights", summary.class_weights},
                               {"timestamp", utc_timestamp()}};
  out_ << line.dump() << '\n';
  out_.flush();
  if (!out_) throw IoError("failed writing training log '" + path_.string() + "'");
}

TrainEventSink TrainLog::sink() {
  return [this](const TrainEvent& e) {
    record(e);
    return true;
  };
}

#define LUNGSEG_INSTANTIATE(T)                                                                 \
  template CrossEntropyResult<T> weighted_cross_entropy(                                       \
      const Tensor<T>&, std::span<const std::uint8_t>, std::span<const double>);               \
  template CrossEntropyResult<T> weighted_cross_entropy(                                       \
      const Tensor<T>&, std::span<const BinaryMask>, const ClassWeights&);                     \
  template struct OptimizerState<T>;                                                           \
  template void sgd_momentum_step(std::span<Parameter<T>* const>, OptimizerState<T>&, double, \
                                  double);

LUNGSEG_INSTANTIATE(float)
LUNGSEG_INSTANTIATE(double)
#undef LUNGSEG_INSTANTIATE

}  // namespace lungseg
