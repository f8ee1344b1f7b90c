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
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "lungseg/error.hpp"
#include "lungseg/metrics.hpp"
#include "oracles.hpp"

namespace lungseg {
namespace {

BinaryMask square(std::size_t h, std::size_t w, std::size_t top, std::size_t left,
                  std::size_t size) {
  BinaryMask m(h, w);
  for (std::size_t i = top; i < top + size; ++i) {
    for (std::size_t j = left; j < left + size; ++j) m.set(i, j, true);
  }
  return m;
}

BinaryMask complement(const BinaryMask& m) {
  BinaryMask out(m.height(), m.width());
  for (std::size_t p = 0; p < m.size(); ++p) out.set(p / m.width(), p % m.width(), !m.values()[p]);
  return out;
}

TEST(Confusion, IdentityAndComplement) {
  Rng rng(41);
  const BinaryMask gt = testing::random_mask(16, 16, 0.4, rng);
  const ConfusionCounts same = confusion_counts(gt, gt);
  EXPECT_EQ(same.fp, 0u);
  EXPECT_EQ(same.fn, 0u);
  const ConfusionCounts inv = confusion_counts(complement(gt), gt);
  EXPECT_EQ(inv.tp, 0u);
  EXPECT_EQ(inv.tn, 0u);
  EXPECT_THROW(confusion_counts(BinaryMask(2, 3), BinaryMask(3, 2)), ShapeError);
}

TEST(Confusion, MatchesPixelTally) {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    const BinaryMask p = testing::random_mask(16, 16, rng.uniform(), rng);
    const BinaryMask g = testing::random_mask(16, 16, rng.uniform(), rng);
    ConfusionCounts want;
    for (std::size_t i = 0; i < 16; ++i) {
      for (std::size_t j = 0; j < 16; ++j) {
        const bool a = p.at(i, j);
        const bool b = g.at(i, j);
        (a && b ? want.tp : a ? want.fp : b ? want.fn : want.tn) += 1;
      }
    }
    EXPECT_EQ(confusion_counts(p, g), want);
  }
}

TEST(RegionMetrics, FormulaExample) {
  const RegionMetrics m = region_metrics({50, 10, 10, 30});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.8);
  EXPECT_DOUBLE_EQ(m.sensitivity, 50.0 / 60.0);
  EXPECT_DOUBLE_EQ(m.specificity, 0.75);
  EXPECT_DOUBLE_EQ(m.jaccard, 50.0 / 70.0);
  EXPECT_DOUBLE_EQ(m.dice_region, 100.0 / 120.0);
  EXPECT_NEAR(m.jaccard, 0.7143, 5e-5);
  EXPECT_NEAR(m.dice_region, 0.8333, 5e-5);
}

TEST(RegionMetrics, PerfectAndDegenerate) {
  const RegionMetrics perfect = region_metrics({5, 0, 0, 7});
  EXPECT_EQ(perfect.accuracy, 1.0);
  EXPECT_EQ(perfect.sensitivity, 1.0);
  EXPECT_EQ(perfect.specificity, 1.0);
  EXPECT_EQ(perfect.jaccard, 1.0);
  EXPECT_EQ(perfect.dice_region, 1.0);
  // No foreground anywhere: vacuously perfect overlap.
  const RegionMetrics empty = region_metrics({0, 0, 0, 9});
  EXPECT_EQ(empty.sensitivity, 1.0);
  EXPECT_EQ(empty.jaccard, 1.0);
  EXPECT_EQ(empty.dice_region, 1.0);
  // All foreground, all found: specificity vacuous.
  EXPECT_EQ(region_metrics({4, 0, 0, 0}).specificity, 1.0);
  // Nothing to find but something predicted.
  const RegionMetrics spurious = region_metrics({0, 3, 0, 6});
  EXPECT_EQ(spurious.sensitivity, 0.0);
  EXPECT_EQ(spurious.jaccard, 0.0);
  EXPECT_EQ(spurious.dice_region, 0.0);
  EXPECT_THROW(region_metrics({0, 0, 0, 0}), Error);
}

TEST(RegionMetrics, DiceJaccardIdentityOnRandomCounts) {
  Rng rng(43);
  for (int trial = 0; trial < 1000; ++trial) {
    const ConfusionCounts c{rng.below(1000), rng.below(1000), rng.below(1000), 1 + rng.below(1000)};
    const RegionMetrics m = region_metrics(c);
    EXPECT_NEAR(m.dice_region, 2.0 * m.jaccard / (1.0 + m.jaccard), 1e-12);
    for (double v : {m.accuracy, m.sensitivity, m.specificity, m.jaccard, m.dice_region}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(Boundary, EdgeAndInteriorPixels) {
  const BinaryMask m = square(5, 5, 0, 0, 4);
  const BinaryMask b = boundary_pixels(m);
  EXPECT_TRUE(b.at(0, 0));
  EXPECT_TRUE(b.at(0, 2));  // image edge
  EXPECT_TRUE(b.at(3, 1));  // next to background
  EXPECT_FALSE(b.at(1, 1));
  EXPECT_FALSE(b.at(2, 2));
  EXPECT_FALSE(b.at(4, 4));
}

TEST(DistanceTransform, MatchesBruteForce) {
  Rng rng(44);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t h = 1 + rng.below(20);
    const std::size_t w = 1 + rng.below(20);
    const BinaryMask m = testing::random_mask(h, w, rng.uniform(0.0, 0.2), rng);
    const std::vector<double> d = squared_distance_transform(m);
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t y = 0; y < h; ++y) {
          for (std::size_t x = 0; x < w; ++x) {
            if (!m.at(y, x)) continue;
            const double dy = static_cast<double>(y) - static_cast<double>(i);
            const double dx = static_cast<double>(x) - static_cast<double>(j);
            best = std::min(best, dy * dy + dx * dx);
          }
        }
        ASSERT_EQ(d[i * w + j], best);
      }
    }
  }
}

TEST(BoundaryF1, Examples) {
  const BinaryMask a = square(20, 20, 5, 5, 6);
  EXPECT_EQ(boundary_f1(a, a, 0.0), 1.0);
  const BinaryMask shifted = square(20, 20, 5, 6, 6);
  EXPECT_EQ(boundary_f1(a, shifted, 1.0), 1.0);
  EXPECT_EQ(testing::brute_force_boundary_f1(a, shifted, 1.0), 1.0);
  const BinaryMask far = square(20, 20, 14, 14, 4);
  const BinaryMask near = square(20, 20, 0, 0, 4);
  EXPECT_EQ(boundary_f1(far, near, 3.0), 0.0);
  EXPECT_EQ(boundary_f1(BinaryMask(4, 4), BinaryMask(4, 4), 2.0), 1.0);
  EXPECT_EQ(boundary_f1(a, BinaryMask(20, 20), 2.0), 0.0);
  EXPECT_THROW(boundary_f1(a, BinaryMask(20, 21), 2.0), ShapeError);
}

TEST(BoundaryF1, MatchesBruteForceAndIsMonotone) {
  Rng rng(45);
  for (int trial = 0; trial < 100; ++trial) {
    const BinaryMask p = testing::random_blob_mask(24, 24, rng);
    const BinaryMask g = testing::random_blob_mask(24, 24, rng);
    double previous = -1.0;
    for (double tol : {0.0, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0}) {
      const double f = boundary_f1(p, g, tol);
      ASSERT_NEAR(f, testing::brute_force_boundary_f1(p, g, tol), 1e-12);
      ASSERT_GE(f, previous);
      ASSERT_GE(f, 0.0);
      ASSERT_LE(f, 1.0);
      previous = f;
    }
  }
}

TEST(BoundaryF1, DefaultTolerance) {
  EXPECT_EQ(default_boundary_tolerance(256, 256), 3.0);  // 0.0075 * 362.04 = 2.7
  EXPECT_EQ(default_boundary_tolerance(128, 128), 1.0);
}

TEST(Aggregate, MeansAndErrors) {
  EXPECT_THROW(aggregate({}, 2.0), Error);
  ImageMetrics a{"a", {0.9, 0.8, 0.7, 0.4, 0.5, 0.6}};
  ImageMetrics b{"b", {0.7, 0.6, 0.5, 0.8, 0.3, 0.2}};
  const MetricsReport single = aggregate({a}, 2.0);
  EXPECT_EQ(single.mean.jaccard, 0.4);
  EXPECT_EQ(single.mean.boundary_f1, 0.6);
  const MetricsReport two = aggregate({a, b}, 2.0);
  EXPECT_DOUBLE_EQ(two.mean.jaccard, 0.6);
  EXPECT_EQ(two.per_image.size(), 2u);
}

TEST(Aggregate, MatchesSummationOracle) {
  Rng rng(46);
  std::vector<ImageMetrics> records;
  long double sums[6] = {};
  for (int i = 0; i < 50; ++i) {
    MetricValues v{rng.uniform(), rng.uniform(), rng.uniform(),
                   rng.uniform(), rng.uniform(), rng.uniform()};
    const double fields[6] = {v.accuracy, v.sensitivity, v.specificity,
                              v.jaccard,  v.dice_region, v.boundary_f1};
    for (int k = 0; k < 6; ++k) sums[k] += fields[k];
    records.push_back({"r" + std::to_string(i), v});
  }
  const MetricsReport r = aggregate(records, 1.0);
  const double got[6] = {r.mean.accuracy, r.mean.sensitivity, r.mean.specificity,
                         r.mean.jaccard,  r.mean.dice_region, r.mean.boundary_f1};
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(got[k], static_cast<double>(sums[k] / 50), 1e-12);
}

TEST(Report, JsonRoundTrip) {
  const MetricsReport r =
      aggregate({{"x", {0.9, 0.8, 0.7, 0.4, 0.5, 0.6}}, {"y", {1, 1, 1, 1, 1, 1}}}, 3.0);
  const nlohmann::json j = report_to_json(r);
  for (const char* key : {"accuracy", "sensitivity", "specificity", "jaccard", "dice_region",
                          "boundary_f1"}) {
    EXPECT_TRUE(j["mean"].contains(key)) << key;
  }
  const MetricsReport back = report_from_json(j);
  EXPECT_EQ(back.per_image.size(), 2u);
  EXPECT_EQ(back.per_image[0].id, "x");
  EXPECT_EQ(back.mean.jaccard, r.mean.jaccard);
  EXPECT_EQ(back.tolerance_px, 3.0);
}

}  // namespace
}  // namespace lungseg
