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

#include "mgd/schedule.hpp"

#include <stdexcept>

#include "mgd/rng.hpp"

namespace mgd::train {

std::vector<Batch> deterministic_batches(std::uint64_t seed, std::size_t n, std::size_t batch_size,
                                         std::size_t epochs) {
  if (batch_size == 0 || batch_size > n) throw std::invalid_argument("batch size must be in [1, n]");
  std::vector<Batch> out;
  const std::size_t per_epoch = n / batch_size;
  for (std::size_t e = 0; e < epochs; ++e) {
    const std::vector<std::size_t> perm = Rng::stream(seed, "batch-order", e).permutation(n);
    for (std::size_t b = 0; b < per_epoch; ++b) {
      out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b * batch_size),
                       perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch_size));
    }
  }
  return out;
}

std::vector<Batch> batches_for_steps(std::uint64_t seed, std::size_t n, std::size_t batch_size, std::size_t steps) {
  if (batch_size == 0 || batch_size > n) throw std::invalid_argument("batch size must be in [1, n]");
  const std::size_t per_epoch = n / batch_size;
  std::vector<Batch> out = deterministic_batches(seed, n, batch_size, (steps + per_epoch - 1) / per_epoch);
  out.resize(steps);
  return out;
}

KeypointWeights keypoint_weights(std::size_t keypoints, std::size_t t, std::size_t total_steps) {
  if (keypoints < 2) throw std::invalid_argument("a keypoint schedule needs at least 2 keypoints");
  if (total_steps == 0 || t > total_steps) throw std::invalid_argument("keypoint schedule: t outside [0, T]");
  // Exact integer position first so grid points hit their keypoint exactly.
  const std::size_t scaled = t * (keypoints - 1);
  KeypointWeights w;
  w.lower = scaled / total_steps;
  const std::size_t rem = scaled % total_steps;
  if (w.lower >= keypoints - 1) {
    w.lower = keypoints - 2;
    w.frac = 1.0;
  } else {
    w.frac = static_cast<double>(rem) / static_cast<double>(total_steps);
  }
  return w;
}

double lr_schedule_value(std::span<const double> keypoints, std::size_t t, std::size_t total_steps) {
  const KeypointWeights w = keypoint_weights(keypoints.size(), t, total_steps);
  if (w.frac == 0.0) return keypoints[w.lower];
  if (w.frac == 1.0) return keypoints[w.lower + 1];
  return (1.0 - w.frac) * keypoints[w.lower] + w.frac * keypoints[w.lower + 1];
}

}  // namespace mgd::train
