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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "mgd/kernels.hpp"

namespace mgd::kernels {
namespace {

void add_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void div_scalar(const double* a, const double* b, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
}

void scale_scalar(const double* a, double s, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void sqrt_scalar(const double* a, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(a[i]);
}

void clamp_scalar(const double* a, double lo, double hi, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::min(std::max(a[i], lo), hi);
}

void matmul_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
  std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void accumulate_rows_scalar(const double* x, double* acc, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double* xr = x + i * cols;
    for (std::size_t j = 0; j < cols; ++j) acc[j] += xr[j];
  }
}

void add_row_scalar(const double* x, const double* row, double* out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) out[i * cols + j] = x[i * cols + j] + row[j];
  }
}

constexpr KernelTable kScalarTable{
    Isa::kScalar,  add_scalar,    sub_scalar,    mul_scalar,           div_scalar,    scale_scalar,
    sqrt_scalar,   clamp_scalar,  matmul_scalar, accumulate_rows_scalar, add_row_scalar,
};

const KernelTable* pick_default() {
  if (const char* env = std::getenv("MGD_SIMD"); env != nullptr && std::string(env) == "scalar") {
    return &kScalarTable;
  }
  if (const KernelTable* t = detail::avx2_table_or_null()) return t;
  return &kScalarTable;
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{pick_default()};
  return slot;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& scalar_table() { return kScalarTable; }

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return true;
    case Isa::kAvx2:
      return detail::avx2_table_or_null() != nullptr;
  }
  return false;
}

const KernelTable& table(Isa isa) {
  if (isa == Isa::kScalar) return kScalarTable;
  const KernelTable* t = detail::avx2_table_or_null();
  if (t == nullptr) throw std::runtime_error("ISA not available on this host: " + std::string(isa_name(isa)));
  return *t;
}

const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

Isa active_isa() { return active().isa; }

ScopedIsa::ScopedIsa(Isa isa) : previous_(&active()) { active_slot().store(&table(isa)); }

ScopedIsa::~ScopedIsa() { active_slot().store(previous_); }

}  // namespace mgd::kernels
