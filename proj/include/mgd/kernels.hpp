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

#pragma once

#include <cstddef>
#include <string_view>

// Arithmetic inner loops behind the autodiff ops.
//
// Every kernel has a scalar reference implementation and, where the host
// supports it, a SIMD variant selected at runtime. SIMD variants never reorder
// a reduction and never contract a multiply-add into an FMA, so they produce
// results bit-identical to the scalar reference. Replay determinism relies on
// that: a state re-instantiated on a different ISA must hash the same.

namespace mgd::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

struct KernelTable {
  Isa isa;
  // out[i] = a[i] (op) b[i]
  void (*add)(const double* a, const double* b, double* out, std::size_t n);
  void (*sub)(const double* a, const double* b, double* out, std::size_t n);
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  void (*div)(const double* a, const double* b, double* out, std::size_t n);
  // out[i] = a[i] * s
  void (*scale)(const double* a, double s, double* out, std::size_t n);
  // out[i] = sqrt(a[i])
  void (*sqrt)(const double* a, double* out, std::size_t n);
  // out[i] = min(max(a[i], lo), hi)
  void (*clamp)(const double* a, double lo, double hi, double* out, std::size_t n);
  // C[m,n] = A[m,k] * B[k,n]; each C[i,j] accumulates p = 0..k-1 in order.
  void (*matmul)(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
  // acc[j] += x[i,j] for i = 0..rows-1 in order.
  void (*accumulate_rows)(const double* x, double* acc, std::size_t rows, std::size_t cols);
  // out[i,j] = x[i,j] + row[j]
  void (*add_row)(const double* x, const double* row, double* out, std::size_t rows, std::size_t cols);
};

const KernelTable& scalar_table();
/// Table for `isa`; throws std::runtime_error if the host cannot run it.
const KernelTable& table(Isa isa);
bool isa_available(Isa isa);

/// Best available table, unless MGD_SIMD=scalar is set in the environment.
const KernelTable& active();
Isa active_isa();

/// Overrides the active ISA for the current scope (tests, benchmarks).
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa);
  ~ScopedIsa();
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  const KernelTable* previous_;
};

namespace detail {
const KernelTable* avx2_table_or_null();
}  // namespace detail

}  // namespace mgd::kernels
