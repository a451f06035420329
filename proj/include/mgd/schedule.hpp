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
#include <span>
#include <vector>

namespace mgd::train {

using Batch = std::vector<std::size_t>;

/// One seeded permutation per epoch, cut into floor(n / batch_size) batches;
/// the ragged tail of each epoch is dropped so every step sees the same shape.
std::vector<Batch> deterministic_batches(std::uint64_t seed, std::size_t n, std::size_t batch_size,
                                         std::size_t epochs);

/// Exactly `steps` batches, cycling through as many epochs as needed.
std::vector<Batch> batches_for_steps(std::uint64_t seed, std::size_t n, std::size_t batch_size, std::size_t steps);

/// Position of step t on a k-keypoint grid spanning [0, T]: keypoint `lower`
/// gets weight 1 - frac and the next one frac. Exact at grid points.
struct KeypointWeights {
  std::size_t lower = 0;
  double frac = 0.0;
};
KeypointWeights keypoint_weights(std::size_t keypoints, std::size_t t, std::size_t total_steps);

/// Piecewise-linear learning rate through keypoints placed at fractions
/// i / (k - 1) of training.
double lr_schedule_value(std::span<const double> keypoints, std::size_t t, std::size_t total_steps);

}  // namespace mgd::train
