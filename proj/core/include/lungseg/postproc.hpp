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

// False-positive removal for predicted lung masks: connected-component
// labeling and area filtering that keeps the k largest components.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lungseg/error.hpp"

namespace lungseg {

/// Per-pixel labels in {0 = background, 1 = lung}, row-major.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(std::size_t h, std::size_t w) : h_(h), w_(w), values_(h * w, 0) {}
  /// Throws ShapeError on a length mismatch and Error on non-binary values.
  BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> values);

  std::size_t height() const { return h_; }
  std::size_t width() const { return w_; }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::uint8_t at(std::size_t i, std::size_t j) const { return values_[i * w_ + j]; }
  void set(std::size_t i, std::size_t j, bool on) { values_[i * w_ + j] = on ? 1 : 0; }
  const std::vector<std::uint8_t>& values() const { return values_; }
  std::size_t foreground() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<std::uint8_t> values_;
};

enum class Connectivity { kFour = 4, kEight = 8 };

/// Throws ConfigError unless `value` is 4 or 8.
Connectivity connectivity_from_int(int value);

struct ComponentLabeling {
  std::size_t height = 0;
  std::size_t width = 0;
  /// 0 for background, 1..K for components, dense.
  std::vector<std::uint32_t> labels;
  /// areas[k - 1] is the pixel count of component k.
  std::vector<std::size_t> areas;

  std::size_t count() const { return areas.size(); }
  std::uint32_t at(std::size_t i, std::size_t j) const { return labels[i * width + j]; }
};

/// Labels maximal connected foreground regions. Component ids follow the
/// raster order of each component's first pixel.
ComponentLabeling label_components(const BinaryMask& mask,
                                   Connectivity connectivity = Connectivity::kEight);

/// Restricts the foreground to the k largest components; equal areas keep the
/// component that appears first in raster order. Throws ConfigError if k < 1.
BinaryMask keep_largest_k(const BinaryMask& mask, std::size_t k = 2,
                          Connectivity connectivity = Connectivity::kEight);

}  // namespace lungseg
