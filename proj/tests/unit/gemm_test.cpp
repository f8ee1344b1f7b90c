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
#include <cstring>
#include <tuple>
#include <vector>

#include "lungseg/detail/gemm.hpp"
#include "lungseg/random.hpp"

namespace lungseg {
namespace {

using detail::Transpose;

template <typename T>
void check_against_naive(Transpose ta, Transpose tb, std::size_t m, std::size_t n, std::size_t k,
                         Rng& rng) {
  const std::size_t lda = (ta == Transpose::kNo ? k : m) + 3;
  const std::size_t ldb = (tb == Transpose::kNo ? n : k) + 1;
  const std::size_t ldc = n + 2;
  std::vector<T> a((ta == Transpose::kNo ? m : k) * lda);
  std::vector<T> b((tb == Transpose::kNo ? k : n) * ldb);
  std::vector<T> c(m * ldc);
  for (T& v : a) v = static_cast<T>(rng.normal());
  for (T& v : b) v = static_cast<T>(rng.normal());
  for (T& v : c) v = static_cast<T>(rng.normal());
  std::vector<T> expected = c;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = expected[i * ldc + j];
      for (std::size_t p = 0; p < k; ++p) {
        const T av = ta == Transpose::kNo ? a[i * lda + p] : a[p * lda + i];
        const T bv = tb == Transpose::kNo ? b[p * ldb + j] : b[j * ldb + p];
        acc = std::fma(av, bv, acc);
      }
      expected[i * ldc + j] = acc;
    }
  }
  detail::gemm(ta, tb, m, n, k, a.data(), lda, b.data(), ldb, c.data(), ldc);
  ASSERT_EQ(std::memcmp(c.data(), expected.data(), c.size() * sizeof(T)), 0)
      << "m=" << m << " n=" << n << " k=" << k;
}

TEST(Gemm, FloatMatchesFixedOrderLoopBitwise) {
  Rng rng(11);
  const std::vector<std::tuple<int, int, int>> shapes{
      {1, 1, 1}, {7, 5, 3}, {8, 32, 16}, {9, 33, 17}, {130, 70, 300}, {3, 1100, 20}, {64, 64, 600}};
  for (const auto& [m, n, k] : shapes) {
    for (Transpose ta : {Transpose::kNo, Transpose::kYes}) {
      for (Transpose tb : {Transpose::kNo, Transpose::kYes}) {
        check_against_naive<float>(ta, tb, m, n, k, rng);
      }
    }
  }
}

TEST(Gemm, DoubleMatchesFixedOrderLoopBitwise) {
  Rng rng(12);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t m = 1 + rng.below(40);
    const std::size_t n = 1 + rng.below(40);
    const std::size_t k = 1 + rng.below(300);
    check_against_naive<double>(rng.below(2) ? Transpose::kYes : Transpose::kNo,
                                rng.below(2) ? Transpose::kYes : Transpose::kNo, m, n, k, rng);
  }
}

TEST(Gemm, ZeroDepthLeavesOutputUntouched) {
  std::vector<float> c{1.5f, -2.0f};
  detail::gemm<float>(Transpose::kNo, Transpose::kNo, 1, 2, 0, nullptr, 1, nullptr, 2, c.data(), 2);
  EXPECT_EQ(c, (std::vector<float>{1.5f, -2.0f}));
}

}  // namespace
}  // namespace lungseg
