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
#include "lungseg/postproc.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace lungseg {

BinaryMask::BinaryMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> values)
    : h_(h), w_(w), values_(std::move(values)) {
  if (values_.size() != h_ * w_) {
    throw ShapeError("mask data length " + std::to_string(values_.size()) + " != " +
                     std::to_string(h_) + "x" + std::to_string(w_));
  }
  for (std::uint8_t v : values_) {
    if (v > 1) throw Error("mask values must be 0 or 1 (found " + std::to_string(v) + ")");
  }
}

std::size_t BinaryMask::foreground() const {
  return static_cast<std::size_t>(std::count(values_.begin(), values_.end(), 1));
}

Connectivity connectivity_from_int(int value) {
  if (value == 4) return Connectivity::kFour;
  if (value == 8) return Connectivity::kEight;
  throw ConfigError("connectivity must be 4 or 8 (got " + std::to_string(value) + ")");
}

namespace {

class DisjointSets {
 public:
  std::uint32_t make() {
    parent_.push_back(static_cast<std::uint32_t>(parent_.size()));
    return parent_.back();
  }
  std::uint32_t find(std::uint32_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::uint32_t a, std::uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;
  }

 private:
  std::vector<std::uint32_t> parent_;
};

}  // namespace

ComponentLabeling label_components(const BinaryMask& mask, Connectivity connectivity) {
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  ComponentLabeling out{h, w, std::vector<std::uint32_t>(h * w, 0), {}};
  std::vector<std::uint32_t> provisional(h * w, 0);
  DisjointSets sets;
  sets.make();  // slot 0 is background

  // First pass: provisional labels from the already-visited neighbors.
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      if (!mask.at(i, j)) continue;
      std::uint32_t label = 0;
      auto visit = [&](std::size_t y, std::size_t x) {
        const std::uint32_t n = provisional[y * w + x];
        if (n == 0) return;
        if (label == 0) {
          label = n;
        } else {
          sets.unite(label, n);
        }
      };
      if (j > 0) visit(i, j - 1);
      if (i > 0) {
        visit(i - 1, j);
        if (connectivity == Connectivity::kEight) {
          if (j > 0) visit(i - 1, j - 1);
          if (j + 1 < w) visit(i - 1, j + 1);
        }
      }
      provisional[i * w + j] = label ? label : sets.make();
    }
  }

  // Second pass: dense ids in raster order of first appearance.
  std::vector<std::uint32_t> final_id(h * w + 1, 0);
  for (std::size_t p = 0; p < h * w; ++p) {
    if (provisional[p] == 0) continue;
    const std::uint32_t root = sets.find(provisional[p]);
    std::uint32_t& id = final_id[root];
    if (id == 0) {
      out.areas.push_back(0);
      id = static_cast<std::uint32_t>(out.areas.size());
    }
    out.labels[p] = id;
    ++out.areas[id - 1];
  }
  return out;
}

BinaryMask keep_largest_k(const BinaryMask& mask, std::size_t k, Connectivity connectivity) {
  if (k < 1) throw ConfigError("keep_largest_k needs k >= 1");
  const ComponentLabeling labeling = label_components(mask, connectivity);
  if (labeling.count() <= k) return mask;
  std::vector<std::uint32_t> order(labeling.count());
  std::iota(order.begin(), order.end(), 1u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return labeling.areas[a - 1] > labeling.areas[b - 1];
  });
  std::vector<std::uint8_t> keep(labeling.count() + 1, 0);
  for (std::size_t r = 0; r < k; ++r) keep[order[r]] = 1;
  std::vector<std::uint8_t> values(mask.size(), 0);
  for (std::size_t p = 0; p < values.size(); ++p) values[p] = keep[labeling.labels[p]];
  return BinaryMask(mask.height(), mask.width(), std::move(values));
}

}  // namespace lungseg
