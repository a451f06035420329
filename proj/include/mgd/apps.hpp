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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mgd/replay.hpp"
#include "mgd/rng.hpp"

namespace mgd::apps {

/// Model and optimizer shared by every retraining inside an MGD loop.
struct TrainSetup {
  std::shared_ptr<const train::Model> model;
  train::UpdateRule rule;
  std::size_t batch_size = 16;
  std::size_t steps = 64;
  std::uint64_t seed = 0;
  ad::Precision precision = ad::Precision::kF64;

  train::TrainPlan plan(std::shared_ptr<const data::Dataset> train, train::Metaparam meta = train::NoMeta{}) const;
};

/// Mean loss of the model trained by `plan` at z, on `eval`.
double trained_loss(const train::TrainPlan& plan, const Tensor& z, std::shared_ptr<const data::Dataset> eval);

// ---------------------------------------------------------------- selection

/// Non-negative copy counts, one per pool sample.
using DataCounts = std::vector<std::size_t>;

/// c_i copies of pool row i, in pool order.
data::Dataset expand(const data::Dataset& pool, const DataCounts& counts);

/// Metagradient of the output with respect to per-sample weights added to
/// the loss at one iteration of training on the expanded dataset, at z = 0.
struct SurrogateGrad {
  Tensor g;
  /// Output of the plain run (z = 0).
  double output_value = 0.0;
};
SurrogateGrad surrogate_metagrad(std::shared_ptr<const data::Dataset> pool, const DataCounts& counts,
                                 const TrainSetup& setup, std::size_t iteration, double scale,
                                 const train::OutputFn& output, std::size_t k);

/// Default surrogate iteration: floor(0.9 T), kept below T.
std::size_t default_surrogate_iteration(std::size_t steps);

/// c' = max(0, c - sign(g) * m) with m_i ~ Bernoulli(p); sign(0) = 0.
DataCounts counts_update(const DataCounts& counts, const Tensor& g, double p, Rng& rng);

struct SelectionConfig {
  double p = 0.5;
  std::size_t rounds = 10;
  std::optional<std::size_t> surrogate_iteration;
  double weight_scale = 1.0;
  /// Fraction of the target set scored per round.
  double eval_fraction = 1.0;
  /// Pairs every decrement with an increment so the total stays fixed.
  bool fixed_size = false;
  std::size_t k = 4;
  std::uint64_t seed = 0;
  /// Pool rows whose mean count is tracked per round (e.g. flipped labels).
  std::vector<std::size_t> tracked;
};

struct SelectionRound {
  std::size_t round = 0;
  double target_loss = 0.0;
  double val_loss = 0.0;
  std::size_t selected_size = 0;
  double tracked_mean_count = 0.0;
};

struct SelectionResult {
  /// Counts of the round with the lowest validation loss.
  DataCounts counts;
  std::size_t best_round = 0;
  std::vector<SelectionRound> trajectory;
  std::vector<DataCounts> history;
};

SelectionResult select_data_mgd(std::shared_ptr<const data::Dataset> pool, std::shared_ptr<const data::Dataset> target,
                                std::shared_ptr<const data::Dataset> val, const TrainSetup& setup,
                                const SelectionConfig& config);

/// `size` draws cycling through fresh seeded permutations of the pool, so
/// no row repeats while size <= n.
DataCounts random_counts(std::size_t n, std::size_t size, std::uint64_t seed);
std::size_t total(const DataCounts& counts);

// ---------------------------------------------------------------- poisoning

/// Euclidean projection onto the probability simplex.
std::vector<double> project_simplex(std::span<const double> v);

/// Clamps the first `feature_dim` columns to [0, 1] and projects the rest
/// of each row onto the simplex. Returns the projected copy.
Tensor project_samples(const Tensor& z, std::size_t feature_dim);

/// Rows of z that leave the box or the simplex by more than `tol`.
std::size_t constraint_violations(const Tensor& z, std::size_t feature_dim, double tol = 1e-9);

struct PoisonConfig {
  double budget = 0.025;
  double step = 0.05;
  std::size_t rounds = 50;
  /// Fraction of the validation set scored per round.
  double val_fraction = 0.5;
  std::size_t k = 4;
  std::uint64_t seed = 0;
  /// Retrain with a new seed every round (the final evaluation always uses setup.seed).
  bool fresh_seed_per_round = true;
};

struct PoisonRound {
  std::size_t round = 0;
  /// Held-out loss after training on the current poisons.
  double test_loss = 0.0;
  /// Loss on the round's validation minibatch (the ascent objective).
  double val_loss = 0.0;
  std::size_t constraint_violations = 0;
};

struct PoisonResult {
  std::vector<std::size_t> rows;
  Tensor poisons;
  data::Dataset poisoned;
  double clean_test_loss = 0.0;
  std::vector<PoisonRound> trajectory;
};

std::size_t poison_count(std::size_t n, double budget);

PoisonResult poison_mgd(std::shared_ptr<const data::Dataset> train, std::shared_ptr<const data::Dataset> val,
                        std::shared_ptr<const data::Dataset> test, const TrainSetup& setup,
                        const PoisonConfig& config);

struct TransferSeed {
  std::uint64_t seed = 0;
  double clean_loss = 0.0;
  double poisoned_loss = 0.0;
  double delta() const { return poisoned_loss - clean_loss; }
};

/// Trains `standard` on clean and poisoned data for each seed and compares
/// held-out loss.
std::vector<TransferSeed> poison_transfer_eval(std::shared_ptr<const data::Dataset> clean,
                                               std::shared_ptr<const data::Dataset> poisoned,
                                               std::shared_ptr<const data::Dataset> test, const TrainSetup& standard,
                                               std::span<const std::uint64_t> seeds);

// ---------------------------------------------------------------- LR schedule

struct LrConfig {
  double alpha = 0.01;
  std::size_t rounds = 20;
  /// Keypoints never drop below this.
  double floor = 1e-4;
  std::size_t k = 4;
};

struct LrRound {
  std::size_t round = 0;
  double target_loss = 0.0;
  double test_loss = 0.0;
  std::vector<double> keypoints;
  double alpha = 0.0;
  /// "ok" or "diverged".
  std::string status = "ok";
};

struct LrResult {
  /// Keypoints with the lowest target loss seen.
  std::vector<double> keypoints;
  double best_target_loss = 0.0;
  double initial_target_loss = 0.0;
  std::vector<LrRound> trajectory;
};

/// Signed descent on learning-rate keypoints. `plan` must carry a keypoint
/// learning-rate metaparameter; its seed stays frozen.
LrResult optimize_lr_schedule(const train::TrainPlan& plan, std::vector<double> init, const train::OutputFn& target,
                              const train::OutputFn& test, const LrConfig& config);

}  // namespace mgd::apps
