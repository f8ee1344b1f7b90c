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
#include "lungseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace lungseg {
namespace {

void check_same_size(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw ShapeError(std::string(what) + ": prediction " + std::to_string(a.height()) + "x" +
                     std::to_string(a.width()) + " vs ground truth " +
                     std::to_string(b.height()) + "x" + std::to_string(b.width()));
  }
}

double ratio(std::uint64_t num, std::uint64_t den, bool vacuous) {
  if (den == 0) return vacuous ? 1.0 : 0.0;
  return static_cast<double>(num) / static_cast<double>(den);
}

// One pass of the Felzenszwalb-Huttenlocher lower envelope of parabolas.
void distance_1d(const double* f, std::size_t n, double* d, std::vector<std::size_t>& v,
                 std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] < inf) {
      first = q;
      break;
    }
  }
  if (first == n) {
    std::fill(d, d + n, inf);
    return;
  }
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (f[q] == inf) continue;
    const double fq = f[q] + static_cast<double>(q * q);
    double s = 0.0;
    while (true) {
      const double p = static_cast<double>(v[k]);
      s = (fq - (f[v[k]] + p * p)) / (2.0 * (static_cast<double>(q) - p));
      if (s > z[k]) break;
      --k;  // z[0] = -inf stops this at k = 0
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < static_cast<double>(q)) ++k;
    const double diff = static_cast<double>(q) - static_cast<double>(v[k]);
    d[q] = diff * diff + f[v[k]];
  }
}

}  // namespace

ConfusionCounts confusion_counts(const BinaryMask& pred, const BinaryMask& gt) {
  check_same_size(pred, gt, "confusion_counts");
  ConfusionCounts c;
  const auto& p = pred.values();
  const auto& g = gt.values();
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] && g[k]) {
      ++c.tp;
    } else if (p[k]) {
      ++c.fp;
    } else if (g[k]) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

RegionMetrics region_metrics(const ConfusionCounts& c) {
  if (c.total() == 0) throw Error("region_metrics needs at least one pixel");
  RegionMetrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  m.sensitivity = ratio(c.tp, c.tp + c.fn, c.fp == 0);
  m.specificity = ratio(c.tn, c.tn + c.fp, c.fn == 0);
  m.jaccard = ratio(c.tp, c.tp + c.fp + c.fn, true);
  m.dice_region = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, true);
  return m;
}

BinaryMask boundary_pixels(const BinaryMask& mask) {
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  BinaryMask out(h, w);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      if (!mask.at(i, j)) continue;
      bool edge = i == 0 || j == 0 || i + 1 == h || j + 1 == w;
      for (int di = -1; di <= 1 && !edge; ++di) {
        for (int dj = -1; dj <= 1 && !edge; ++dj) {
          edge = !mask.at(i + di, j + dj);
        }
      }
      if (edge) out.set(i, j, true);
    }
  }
  return out;
}

std::vector<double> squared_distance_transform(const BinaryMask& mask) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  const std::size_t h = mask.height();
  const std::size_t w = mask.width();
  std::vector<double> grid(h * w);
  for (std::size_t p = 0; p < grid.size(); ++p) grid[p] = mask.values()[p] ? 0.0 : inf;
  std::vector<double> f(std::max(h, w));
  std::vector<double> d(std::max(h, w));
  std::vector<std::size_t> v;
  std::vector<double> z;
  for (std::size_t j = 0; j < w; ++j) {
    for (std::size_t i = 0; i < h; ++i) f[i] = grid[i * w + j];
    distance_1d(f.data(), h, d.data(), v, z);
    for (std::size_t i = 0; i < h; ++i) grid[i * w + j] = d[i];
  }
  for (std::size_t i = 0; i < h; ++i) {
    distance_1d(grid.data() + i * w, w, d.data(), v, z);
    std::copy_n(d.data(), w, grid.data() + i * w);
  }
  return grid;
}

double boundary_f1(const BinaryMask& pred, const BinaryMask& gt, double tolerance) {
  check_same_size(pred, gt, "boundary_f1");
  if (!(tolerance >= 0.0)) throw ConfigError("boundary_f1 tolerance must be >= 0");
  const BinaryMask pb = boundary_pixels(pred);
  const BinaryMask gb = boundary_pixels(gt);
  const std::size_t np = pb.foreground();
  const std::size_t ng = gb.foreground();
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const double limit = tolerance * tolerance;
  auto matched = [limit](const BinaryMask& from, const std::vector<double>& dist) {
    std::size_t hits = 0;
    for (std::size_t p = 0; p < dist.size(); ++p) {
      if (from.values()[p] && dist[p] <= limit) ++hits;
    }
    return hits;
  };
  const double precision =
      static_cast<double>(matched(pb, squared_distance_transform(gb))) / static_cast<double>(np);
  const double recall =
      static_cast<double>(matched(gb, squared_distance_transform(pb))) / static_cast<double>(ng);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double default_boundary_tolerance(std::size_t height, std::size_t width) {
  const double diagonal = std::hypot(static_cast<double>(height), static_cast<double>(width));
  return std::round(0.0075 * diagonal);
}

ImageMetrics evaluate_image(const std::string& id, const BinaryMask& pred,
                            const BinaryMask& gt, double tolerance) {
  const RegionMetrics r = region_metrics(confusion_counts(pred, gt));
  return {id,
          {r.accuracy, r.sensitivity, r.specificity, r.jaccard, r.dice_region,
           boundary_f1(pred, gt, tolerance)}};
}

MetricsReport aggregate(std::vector<ImageMetrics> records, double tolerance_px) {
  if (records.empty()) throw Error("aggregate needs at least one per-image record");
  MetricsReport report;
  report.tolerance_px = tolerance_px;
  MetricValues sum;
  for (const ImageMetrics& r : records) {
    sum.accuracy += r.values.accuracy;
    sum.sensitivity += r.values.sensitivity;
    sum.specificity += r.values.specificity;
    sum.jaccard += r.values.jaccard;
    sum.dice_region += r.values.dice_region;
    sum.boundary_f1 += r.values.boundary_f1;
  }
  const double n = static_cast<double>(records.size());
  report.mean = {sum.accuracy / n,    sum.sensitivity / n, sum.specificity / n,
                 sum.jaccard / n,     sum.dice_region / n, sum.boundary_f1 / n};
  report.per_image = std::move(records);
  return report;
}

namespace {
nlohmann::json values_to_json(const MetricValues& v) {
  return {{"accuracy", v.accuracy},       {"sensitivity", v.sensitivity},
          {"specificity", v.specificity}, {"jaccard", v.jaccard},
          {"dice_region", v.dice_region}, {"boundary_f1", v.boundary_f1}};
}
MetricValues values_from_json(const nlohmann::json& j) {
  return {j.at("accuracy").get<double>(),    j.at("sensitivity").get<double>(),
          j.at("specificity").get<double>(), j.at("jaccard").get<double>(),
          j.at("dice_region").get<double>(), j.at("boundary_f1").get<double>()};
}
}  // namespace

nlohmann::json report_to_json(const MetricsReport& report) {
  nlohmann::json per_image = nlohmann::json::array();
  for (const ImageMetrics& r : report.per_image) {
    nlohmann::json item = values_to_json(r.values);
    item["id"] = r.id;
    per_image.push_back(std::move(item));
  }
  return {{"per_image", std::move(per_image)},
          {"mean", values_to_json(report.mean)},
          {"tolerance_px", report.tolerance_px}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport report;
  for (const nlohmann::json& item : j.at("per_image")) {
    report.per_image.push_back({item.at("id").get<std::string>(), values_from_json(item)});
  }
  report.mean = values_from_json(j.at("mean"));
  report.tolerance_px = j.at("tolerance_px").get<double>();
  return report;
}

}  // namespace lungseg
