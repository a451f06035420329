/*
 * Copyright 2026 The mgd Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 *
 * SPDX-License-Identifier: Apache-2.0
 */

// AVX2 variants. This translation unit is compiled with -mavx2 (and without
// -mfma) so the compiler cannot fuse the explicit mul/add pairs below.

#include "mgd/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__)

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace mgd::kernels {
namespace {

constexpr std::size_t kLanes = 4;

template <typename VecOp, typename ScalarOp>
inline void binary(const double* a, const double* b, double* out, std::size_t n, VecOp vop, ScalarOp sop) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    _mm256_storeu_pd(out + i, vop(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = sop(a[i], b[i]);
}

void add_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_add_pd(x, y); },
         [](double x, double y) { return x + y; });
}

void sub_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_sub_pd(x, y); },
         [](double x, double y) { return x - y; });
}

void mul_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_mul_pd(x, y); },
         [](double x, double y) { return x * y; });
}

void div_avx2(const double* a, const double* b, double* out, std::size_t n) {
  binary(a, b, out, n, [](__m256d x, __m256d y) { return _mm256_div_pd(x, y); },
         [](double x, double y) { return x / y; });
}

void scale_avx2(const double* a, double s, double* out, std::size_t n) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
  for (; i < n; ++i) out[i] = a[i] * s;
}

void sqrt_avx2(const double* a, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) _mm256_storeu_pd(out + i, _mm256_sqrt_pd(_mm256_loadu_pd(a + i)));
  for (; i < n; ++i) out[i] = std::sqrt(a[i]);
}

// max_pd(lo, x) == (lo > x ? lo : x) and min_pd(hi, y) == (hi < y ? hi : y)
// match std::max / std::min including the sign of zero.
void clamp_avx2(const double* a, double lo, double hi, double* out, std::size_t n) {
  const __m256d lov = _mm256_set1_pd(lo);
  const __m256d hiv = _mm256_set1_pd(hi);
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const __m256d v = _mm256_max_pd(lov, _mm256_loadu_pd(a + i));
    _mm256_storeu_pd(out + i, _mm256_min_pd(hiv, v));
  }
  for (; i < n; ++i) out[i] = std::min(std::max(a[i], lo), hi);
}

// Vectorized across output columns; each C[i,j] still sums p in order.
void matmul_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  constexpr std::size_t kBlock = 4 * kLanes;
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    std::size_t j = 0;
    for (; j + kBlock <= n; j += kBlock) {
      __m256d c0 = _mm256_setzero_pd();
      __m256d c1 = _mm256_setzero_pd();
      __m256d c2 = _mm256_setzero_pd();
      __m256d c3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        const __m256d av = _mm256_set1_pd(arow[p]);
        const double* brow = b + p * n + j;
        c0 = _mm256_add_pd(c0, _mm256_mul_pd(av, _mm256_loadu_pd(brow)));
        c1 = _mm256_add_pd(c1, _mm256_mul_pd(av, _mm256_loadu_pd(brow + kLanes)));
        c2 = _mm256_add_pd(c2, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 2 * kLanes)));
        c3 = _mm256_add_pd(c3, _mm256_mul_pd(av, _mm256_loadu_pd(brow + 3 * kLanes)));
      }
      _mm256_storeu_pd(crow + j, c0);
      _mm256_storeu_pd(crow + j + kLanes, c1);
      _mm256_storeu_pd(crow + j + 2 * kLanes, c2);
      _mm256_storeu_pd(crow + j + 3 * kLanes, c3);
    }
    for (; j + kLanes <= n; j += kLanes) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t p = 0; p < k; ++p) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(arow[p]), _mm256_loadu_pd(b + p * n + j)));
      }
      _mm256_storeu_pd(crow + j, acc);
    }
    for (; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * b[p * n + j];
      crow[j] = acc;
    }
  }
}

void accumulate_rows_avx2(const double* x, double* acc, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) add_avx2(acc, x + i * cols, acc, cols);
}

void add_row_avx2(const double* x, const double* row, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) add_avx2(x + i * cols, row, out + i * cols, cols);
}

constexpr KernelTable kAvx2Table{
    Isa::kAvx2, add_avx2,   sub_avx2,    mul_avx2,             div_avx2,     scale_avx2,
    sqrt_avx2,  clamp_avx2, matmul_avx2, accumulate_rows_avx2, add_row_avx2,
};

}  // namespace

namespace detail {
const KernelTable* avx2_table_or_null() {
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &kAvx2Table : nullptr;
}
}  // namespace detail

}  // namespace mgd::kernels

#else

namespace mgd::kernels::detail {
const KernelTable* avx2_table_or_null() { return nullptr; }
}  // namespace mgd::kernels::detail

#endif
