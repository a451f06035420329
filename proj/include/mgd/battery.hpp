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
#include <string>
#include <vector>

namespace mgd::ad {

struct BatteryResult {
  std::string name;
  double max_rel_err = 0.0;
  std::size_t points = 0;
};

/// Every primitive (and composite) checked against central differences at
/// `points` random inputs. Outputs are reduced to a scalar with random weights.
std::vector<BatteryResult> first_order_battery(std::size_t points, std::uint64_t seed, double h = 1e-5);

/// Scalar compositions whose second derivative is known in closed form,
/// differentiated twice through the tape.
std::vector<BatteryResult> second_order_battery(std::size_t points, std::uint64_t seed);

}  // namespace mgd::ad
