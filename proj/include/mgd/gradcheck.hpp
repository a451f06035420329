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
#include <cstdint>
#include <functional>

#include "mgd/autodiff.hpp"

namespace mgd::ad {

struct GradCheckReport {
  double max_rel_err = 0.0;
  /// Coordinate (or probe direction, in directional mode) with the worst error.
  std::size_t worst_coordinate = 0;
  double h = 0.0;
  std::size_t probes = 0;
  bool directional = false;
};

struct GradCheckOptions {
  /// Inputs larger than this are checked along random unit directions.
  std::size_t max_coordinates = 512;
  std::size_t directions = 16;
  std::uint64_t seed = 0;
  /// Denominator floor: errors on entries smaller than this are absolute.
  double floor = 1e-8;
  /// Per-coordinate floor as a fraction of the largest gradient entry, so a
  /// near-zero coordinate is judged on the scale of the whole gradient
  /// rather than against finite-difference roundoff.
  double relative_floor = 1e-3;
};

/// Scalar function of a single tensor, recorded on the given tape.
using ScalarBuilder = std::function<Var(Tape&, Var)>;

/// Compares the reverse-mode gradient with central differences. The relative
/// error per probe is |a - n| / max(|a|, |n|, floor'), where floor' also
/// includes relative_floor * max|a| in coordinate mode; 0 when a == n.
GradCheckReport check_gradient(const ScalarBuilder& fn, const Tensor& point, double h,
                               const GradCheckOptions& options = {});

/// Reverse-mode gradient of a scalar builder at `point`.
Tensor gradient(const ScalarBuilder& fn, const Tensor& point);

}  // namespace mgd::ad
