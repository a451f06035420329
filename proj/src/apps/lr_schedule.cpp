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

#include <cmath>
#include <limits>
#include <stdexcept>

#include "mgd/apps.hpp"

namespace mgd::apps {

LrResult optimize_lr_schedule(const train::TrainPlan& plan, std::vector<double> init, const train::OutputFn& target,
                              const train::OutputFn& test, const LrConfig& config) {
  const auto* meta = std::get_if<train::LearningRate>(&plan.meta());
  if (!meta || meta->mode != train::LearningRate::Mode::kKeypoints) {
    throw std::invalid_argument("schedule search needs a keypoint learning-rate plan");
  }
  if (init.size() != meta->keypoints) throw ShapeError("initial schedule has the wrong number of keypoints");
  if (!(config.alpha >= 0.0)) throw std::invalid_argument("schedule step size must be >= 0");
  if (!(config.floor > 0.0)) throw std::invalid_argument("keypoint floor must be > 0");
  for (double& v : init) v = std::max(v, config.floor);

  LrResult result;
  result.best_target_loss = std::numeric_limits<double>::infinity();
  std::vector<double> current = init, last_good = init;
  Tensor last_grad;
  double alpha = config.alpha;

  for (std::size_t round = 0;; ++round) {
    LrRound row;
    row.round = round;
    row.keypoints = current;
    row.alpha = alpha;
    Tensor grad;
    try {
      const Tensor z = Tensor::vector(current);
      const replay::MetagradReport report = replay::metagrad_replay(plan, z, target, config.k);
      row.target_loss = report.output_value;
      row.test_loss = train::evaluate(test, plan.model(), train::train(plan, z));
      grad = report.zbar;
    } catch (const NumericalError&) {
      if (round == 0) throw;
      row.status = "diverged";
      row.target_loss = row.test_loss = std::numeric_limits<double>::quiet_NaN();
    }
    result.trajectory.push_back(row);

    if (row.status == "ok") {
      if (round == 0) result.initial_target_loss = row.target_loss;
      if (row.target_loss < result.best_target_loss) {
        result.best_target_loss = row.target_loss;
        result.keypoints = current;
      }
      last_good = current;
      last_grad = grad;
    } else {
      // Skip the iterate: step again from the last good one with half the size.
      alpha *= 0.5;
    }
    if (round == config.rounds) break;

    current = last_good;
    for (std::size_t i = 0; i < current.size(); ++i) {
      const double s = static_cast<double>((last_grad[i] > 0.0) - (last_grad[i] < 0.0));
      current[i] = std::max(config.floor, current[i] - alpha * s);
    }
  }
  return result;
}

}  // namespace mgd::apps
