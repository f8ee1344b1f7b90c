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

#include <cstddef>

namespace lungseg::detail {

enum class Transpose { kNo, kYes };

// C[m x n] += op(A)[m x k] * op(B)[k x n], all row-major.
//
// Every element of C is accumulated with fused multiply-adds in ascending k
// order, starting from its current value. Blocking and vectorization never
// reorder that reduction, so the result equals the naive loop
//   for (p = 0; p < k; ++p) c = fma(a[p], b[p], c);
// bit for bit.
template <typename T>
void gemm(Transpose trans_a, Transpose trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T* c, std::size_t ldc);

}  // namespace lungseg::detail
