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
#include "lungseg/detail/gemm.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#if defined(__AVX512F__)
#include <immintrin.h>
#endif

namespace lungseg::detail {
namespace {

constexpr std::size_t kBlockK = 256;
constexpr std::size_t kBlockM = 128;
constexpr std::size_t kBlockN = 1024;

template <typename T>
struct KernelShape {
  static constexpr std::size_t kRows = 4;
  static constexpr std::size_t kCols = 8;
};

#if defined(__AVX512F__)
template <>
struct KernelShape<float> {
  static constexpr std::size_t kRows = 8;
  static constexpr std::size_t kCols = 32;
};
template <>
struct KernelShape<double> {
  static constexpr std::size_t kRows = 8;
  static constexpr std::size_t kCols = 16;
};
#endif

template <typename T>
class MatrixView {
 public:
  MatrixView(const T* data, std::size_t ld, Transpose trans)
      : data_(data), ld_(ld), trans_(trans) {}
  T operator()(std::size_t row, std::size_t col) const {
    return trans_ == Transpose::kNo ? data_[row * ld_ + col]
                                    : data_[col * ld_ + row];
  }

 private:
  const T* data_;
  std::size_t ld_;
  Transpose trans_;
};

// Packs rows [row0, row0 + rows) x depth [k0, k0 + depth) of A into panels of
// kRows rows, depth-major within a panel. Rows past the end are zero.
template <typename T>
void pack_a(const MatrixView<T>& a, std::size_t row0, std::size_t rows,
            std::size_t k0, std::size_t depth, T* out) {
  constexpr std::size_t mr = KernelShape<T>::kRows;
  for (std::size_t panel = 0; panel < rows; panel += mr) {
    const std::size_t valid = std::min(mr, rows - panel);
    for (std::size_t p = 0; p < depth; ++p) {
      for (std::size_t r = 0; r < mr; ++r) {
        *out++ = r < valid ? a(row0 + panel + r, k0 + p) : T(0);
      }
    }
  }
}

template <typename T>
void pack_b(const MatrixView<T>& b, std::size_t col0, std::size_t cols,
            std::size_t k0, std::size_t depth, T* out) {
  constexpr std::size_t nr = KernelShape<T>::kCols;
  for (std::size_t panel = 0; panel < cols; panel += nr) {
    const std::size_t valid = std::min(nr, cols - panel);
    for (std::size_t p = 0; p < depth; ++p) {
      for (std::size_t c = 0; c < nr; ++c) {
        *out++ = c < valid ? b(k0 + p, col0 + panel + c) : T(0);
      }
    }
  }
}

template <typename T>
void micro_kernel_generic(std::size_t depth, const T* a, const T* b, T* c,
                          std::size_t ldc) {
  constexpr std::size_t mr = KernelShape<T>::kRows;
  constexpr std::size_t nr = KernelShape<T>::kCols;
  T acc[mr][nr];
  for (std::size_t r = 0; r < mr; ++r) {
    for (std::size_t j = 0; j < nr; ++j) acc[r][j] = c[r * ldc + j];
  }
  for (std::size_t p = 0; p < depth; ++p) {
    for (std::size_t r = 0; r < mr; ++r) {
      const T ar = a[p * mr + r];
      for (std::size_t j = 0; j < nr; ++j) {
        acc[r][j] = std::fma(ar, b[p * nr + j], acc[r][j]);
      }
    }
  }
  for (std::size_t r = 0; r < mr; ++r) {
    for (std::size_t j = 0; j < nr; ++j) c[r * ldc + j] = acc[r][j];
  }
}

template <typename T>
void micro_kernel(std::size_t depth, const T* a, const T* b, T* c,
                  std::size_t ldc) {
  micro_kernel_generic(depth, a, b, c, ldc);
}

#if defined(__AVX512F__)
template <>
void micro_kernel<float>(std::size_t depth, const float* a, const float* b,
                         float* c, std::size_t ldc) {
  __m512 acc[8][2];
  for (int r = 0; r < 8; ++r) {
    acc[r][0] = _mm512_loadu_ps(c + r * ldc);
    acc[r][1] = _mm512_loadu_ps(c + r * ldc + 16);
  }
  for (std::size_t p = 0; p < depth; ++p) {
    const __m512 b0 = _mm512_loadu_ps(b);
    const __m512 b1 = _mm512_loadu_ps(b + 16);
    for (int r = 0; r < 8; ++r) {
      const __m512 ar = _mm512_set1_ps(a[r]);
      acc[r][0] = _mm512_fmadd_ps(ar, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_ps(ar, b1, acc[r][1]);
    }
    a += 8;
    b += 32;
  }
  for (int r = 0; r < 8; ++r) {
    _mm512_storeu_ps(c + r * ldc, acc[r][0]);
    _mm512_storeu_ps(c + r * ldc + 16, acc[r][1]);
  }
}

template <>
void micro_kernel<double>(std::size_t depth, const double* a, const double* b,
                          double* c, std::size_t ldc) {
  __m512d acc[8][2];
  for (int r = 0; r < 8; ++r) {
    acc[r][0] = _mm512_loadu_pd(c + r * ldc);
    acc[r][1] = _mm512_loadu_pd(c + r * ldc + 8);
  }
  for (std::size_t p = 0; p < depth; ++p) {
    const __m512d b0 = _mm512_loadu_pd(b);
    const __m512d b1 = _mm512_loadu_pd(b + 8);
    for (int r = 0; r < 8; ++r) {
      const __m512d ar = _mm512_set1_pd(a[r]);
      acc[r][0] = _mm512_fmadd_pd(ar, b0, acc[r][0]);
      acc[r][1] = _mm512_fmadd_pd(ar, b1, acc[r][1]);
    }
    a += 8;
    b += 16;
  }
  for (int r = 0; r < 8; ++r) {
    _mm512_storeu_pd(c + r * ldc, acc[r][0]);
    _mm512_storeu_pd(c + r * ldc + 8, acc[r][1]);
  }
}
#endif

}  // namespace

template <typename T>
void gemm(Transpose trans_a, Transpose trans_b, std::size_t m, std::size_t n,
          std::size_t k, const T* a, std::size_t lda, const T* b,
          std::size_t ldb, T* c, std::size_t ldc) {
  if (m == 0 || n == 0 || k == 0) return;
  constexpr std::size_t mr = KernelShape<T>::kRows;
  constexpr std::size_t nr = KernelShape<T>::kCols;
  const MatrixView<T> av(a, lda, trans_a);
  const MatrixView<T> bv(b, ldb, trans_b);

  auto round_up = [](std::size_t v, std::size_t to) {
    return (v + to - 1) / to * to;
  };
  thread_local std::vector<T> packed_a;
  thread_local std::vector<T> packed_b;
  packed_a.resize(round_up(std::min(m, kBlockM), mr) * kBlockK);
  packed_b.resize(round_up(std::min(n, kBlockN), nr) * kBlockK);

  T edge[mr * nr];
  for (std::size_t jc = 0; jc < n; jc += kBlockN) {
    const std::size_t nc = std::min(kBlockN, n - jc);
    // The depth loop is outermost over C tiles so each element keeps its
    // ascending-k accumulation order.
    for (std::size_t pc = 0; pc < k; pc += kBlockK) {
      const std::size_t kc = std::min(kBlockK, k - pc);
      pack_b(bv, jc, nc, pc, kc, packed_b.data());
      for (std::size_t ic = 0; ic < m; ic += kBlockM) {
        const std::size_t mc = std::min(kBlockM, m - ic);
        pack_a(av, ic, mc, pc, kc, packed_a.data());
        for (std::size_t jr = 0; jr < nc; jr += nr) {
          const std::size_t cols = std::min(nr, nc - jr);
          const T* bp = packed_b.data() + jr * kc;
          for (std::size_t ir = 0; ir < mc; ir += mr) {
            const std::size_t rows = std::min(mr, mc - ir);
            const T* ap = packed_a.data() + ir * kc;
            T* ct = c + (ic + ir) * ldc + jc + jr;
            if (rows == mr && cols == nr) {
              micro_kernel<T>(kc, ap, bp, ct, ldc);
              continue;
            }
            for (std::size_t r = 0; r < mr; ++r) {
              for (std::size_t j = 0; j < nr; ++j) {
                edge[r * nr + j] = r < rows && j < cols ? ct[r * ldc + j] : T(0);
              }
            }
            micro_kernel<T>(kc, ap, bp, edge, nr);
            for (std::size_t r = 0; r < rows; ++r) {
              for (std::size_t j = 0; j < cols; ++j) {
                ct[r * ldc + j] = edge[r * nr + j];
              }
            }
          }
        }
      }
    }
  }
}

template void gemm<float>(Transpose, Transpose, std::size_t, std::size_t,
                          std::size_t, const float*, std::size_t, const float*,
                          std::size_t, float*, std::size_t);
template void gemm<double>(Transpose, Transpose, std::size_t, std::size_t,
                           std::size_t, const double*, std::size_t,
                           const double*, std::size_t, double*, std::size_t);

}  // namespace lungseg::detail
