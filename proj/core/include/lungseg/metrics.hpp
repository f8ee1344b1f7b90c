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

// Segmentation quality metrics: pixel confusion counts, region overlap
// scores, boundary F1, and dataset aggregation.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lungseg/postproc.hpp"

namespace lungseg {

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Throws ShapeError on a dimension mismatch.
ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& gt);

struct RegionMetrics {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double jaccard = 0.0;
  double dice_region = 0.0;
};

/// Ratios with a zero denominator are 1.0 when the prediction matches the
/// ground truth on the class involved (nothing to find and nothing falsely
/// found) and 0.0 otherwise. Throws Error when total() == 0.
RegionMetrics region_metrics(const ConfusionCounts& counts);

/// Foreground pixels with at least one background 8-neighbor or lying on the
/// image edge.
BinaryMask boundary_pixels(const BinaryMask& mask);

/// Exact squared Euclidean distance from every pixel to the nearest set
/// pixel of `mask` (infinity when the mask is empty).
std::vector<double> squared_distance_transform(const BinaryMask& mask);

/// F1 over boundary pixels matched within `tolerance` pixels (Euclidean).
/// 1.0 when both boundaries are empty; 0.0 when precision + recall is 0.
double boundary_f1(const BinaryMask& pred, const BinaryMask& gt, double tolerance);

/// 0.75% of the image diagonal, rounded to the nearest pixel.
double default_boundary_tolerance(std::size_t height, std::size_t width);

struct MetricValues {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double jaccard = 0.0;
  double dice_region = 0.0;
  double boundary_f1 = 0.0;
};

struct ImageMetrics {
  std::string id;
  MetricValues values;
};

struct MetricsReport {
  std::vector<ImageMetrics> per_image;
  MetricValues mean;
  double tolerance_px = 0.0;
};

ImageMetrics evaluate_image(const std::string& id, const BinaryMask& pred,
                            const BinaryMask& gt, double tolerance);

/// Arithmetic means in record order. Throws Error when `records` is empty.
MetricsReport aggregate(std::vector<ImageMetrics> records, double tolerance_px);

/// {"per_image": [{"id", metrics...}], "mean": {...}, "tolerance_px": t}
nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);

}  // namespace lungseg
