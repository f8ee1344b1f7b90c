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

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lungseg/data.hpp"
#include "lungseg/net.hpp"
#include "lungseg/postproc.hpp"
#include "lungseg/random.hpp"
#include "lungseg/tensor.hpp"

namespace lungseg {

/// Ranges for random affine augmentation. Shifts are fractions of the
/// image extent along each axis; rotation is in degrees.
struct AugmentPolicy {
  bool enabled = true;
  std::pair<double, double> scale_range{0.8, 1.2};
  double shift_fraction = 0.10;
  double rotation_deg = 10.0;
  float fill_value = 0.0f;

  void validate() const;
};

/// One concrete transform.
struct AugmentDraw {
  double scale = 1.0;
  double shift_x = 0.0;  // fraction of width
  double shift_y = 0.0;  // fraction of height
  double rotation_deg = 0.0;

  bool is_identity() const {
    return scale == 1.0 && shift_x == 0.0 && shift_y == 0.0 && rotation_deg == 0.0;
  }
};

/// Uniform draw from each range of the policy; identity when disabled.
AugmentDraw draw_augmentation(const AugmentPolicy& policy, Rng& rng);

/// Applies `draw` about the image center by inverse mapping: bilinear for the
/// image, nearest for the mask. Exposed pixels take the fill value and
/// background respectively.
std::pair<GrayImage, BinaryMask> augment_sample(const GrayImage& image, const BinaryMask& mask,
                                                const AugmentPolicy& policy,
                                                const AugmentDraw& draw);

enum class ClassWeightMode { kMedianFrequency, kUniform };

struct TrainConfig {
  std::size_t batch_size = 8;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 40;
  std::uint64_t seed = 0;
  ClassWeightMode class_weight_mode = ClassWeightMode::kMedianFrequency;
  AugmentPolicy augment;
  std::size_t input_size = 256;
  double split_ratio = 0.7;

  void validate() const;
};

/// Per-class loss weights, background first.
using ClassWeights = std::array<double, 2>;

/// Median-frequency weights over all pixels of `masks` (uniform mode
/// returns ones). Throws TrainError naming a class with no pixels.
ClassWeights compute_class_weights(std::span<const BinaryMask> masks, ClassWeightMode mode);

template <typename T>
struct CrossEntropyResult {
  double loss = 0.0;
  Tensor<T> grad;  // d loss / d logits
};

/// Softmax cross-entropy over (n, C, h, w) logits with per-class weights,
/// normalized by the total applied weight. `labels` holds n*h*w class
/// indices in raster order.
template <typename T>
CrossEntropyResult<T> weighted_cross_entropy(const Tensor<T>& logits,
                                             std::span<const std::uint8_t> labels,
                                             std::span<const double> weights);

template <typename T>
CrossEntropyResult<T> weighted_cross_entropy(const Tensor<T>& logits,
                                             std::span<const BinaryMask> masks,
                                             const ClassWeights& weights);

/// Momentum velocities keyed by parameter name.
template <typename T>
struct OptimizerState {
  std::map<std::string, Tensor<T>> velocity;

  static OptimizerState zeros_like(std::span<Parameter<T>* const> params);
};

/// v <- momentum * v + grad; value <- value - lr * v. The state must hold
/// exactly the parameters' names with matching shapes.
template <typename T>
void sgd_momentum_step(std::span<Parameter<T>* const> params, OptimizerState<T>& state,
                       double learning_rate, double momentum);

/// Seeded shuffle, then the first round(ratio * N) samples go to train.
/// Output samples carry their split tag.
std::pair<DatasetManifest, DatasetManifest> split_dataset(const DatasetManifest& manifest,
                                                          double ratio, std::uint64_t seed);

/// In-place Fisher-Yates shuffle driven by `rng`.
template <typename Item>
void shuffle(std::vector<Item>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[rng.below(i)]);
  }
}

struct TrainEvent {
  enum class Kind { kIteration, kEpoch };
  Kind kind = Kind::kIteration;
  std::size_t iteration = 0;  // 1-based, global
  std::size_t epoch = 0;      // 1-based
  double loss = 0.0;          // batch loss, or epoch mean
  double learning_rate = 0.0;
};

/// Returning false stops training after the current step.
using TrainEventSink = std::function<bool(const TrainEvent&)>;

struct TrainSummary {
  std::size_t epochs_completed = 0;
  std::size_t iterations = 0;
  double final_mean_loss = 0.0;
  double wall_seconds = 0.0;
  ClassWeights class_weights{1.0, 1.0};
  bool stopped_by_sink = false;
};

/// Training samples resized to the network input size.
struct TrainingSet {
  std::vector<std::string> ids;
  std::vector<GrayImage> images;
  std::vector<BinaryMask> masks;
};

/// Loads every sample (which must carry a mask) and resizes it to `size`.
/// Throws TrainError naming the sample that failed.
TrainingSet load_training_set(const DatasetManifest& manifest, std::size_t size);

TrainSummary fit(Network<float>& net, const TrainingSet& data, const TrainConfig& config,
                 const TrainEventSink& sink = {});
TrainSummary fit(Network<float>& net, const DatasetManifest& manifest, const TrainConfig& config,
                 const TrainEventSink& sink = {});

/// Appends one JSON object per event to a file.
class TrainLog {
 public:
  explicit TrainLog(const std::filesystem::path& path);

  void record(const TrainEvent& event);
  void finish(const TrainSummary& summary);
  /// Sink that records every event and never stops training.
  TrainEventSink sink();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace lungseg
