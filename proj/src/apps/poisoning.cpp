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
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mgd/apps.hpp"

namespace mgd::apps {

std::vector<double> project_simplex(std::span<const double> v) {
  if (v.empty()) return {};
  // Sort-based projection: find the shift tau with sum(max(v - tau, 0)) = 1.
  std::vector<double> sorted(v.begin(), v.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  double running = 0.0, tau = 0.0;
  for (std::size_t j = 0; j < sorted.size(); ++j) {
    running += sorted[j];
    const double candidate = (running - 1.0) / static_cast<double>(j + 1);
    if (sorted[j] - candidate > 0.0) tau = candidate;
  }
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = std::max(v[i] - tau, 0.0);
  return out;
}

Tensor project_samples(const Tensor& z, std::size_t feature_dim) {
  if (z.rank() != 2 || z.cols() < feature_dim) throw ShapeError("samples must be [rows, features + labels]");
  Tensor out = z;
  const std::size_t width = z.cols();
  for (std::size_t r = 0; r < z.rows(); ++r) {
    for (std::size_t c = 0; c < feature_dim; ++c) out.at(r, c) = std::clamp(z.at(r, c), 0.0, 1.0);
    if (width == feature_dim) continue;
    std::vector<double> label(width - feature_dim);
    for (std::size_t c = feature_dim; c < width; ++c) label[c - feature_dim] = z.at(r, c);
    const std::vector<double> projected = project_simplex(label);
    for (std::size_t c = feature_dim; c < width; ++c) out.at(r, c) = projected[c - feature_dim];
  }
  return out;
}

std::size_t constraint_violations(const Tensor& z, std::size_t feature_dim, double tol) {
  std::size_t bad = 0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    bool ok = true;
    for (std::size_t c = 0; c < feature_dim; ++c) ok = ok && z.at(r, c) >= -tol && z.at(r, c) <= 1.0 + tol;
    if (z.cols() > feature_dim) {
      double sum = 0.0;
      for (std::size_t c = feature_dim; c < z.cols(); ++c) {
        ok = ok && z.at(r, c) >= -tol;
        sum += z.at(r, c);
      }
      ok = ok && std::abs(sum - 1.0) <= tol * static_cast<double>(z.cols());
    }
    bad += ok ? 0 : 1;
  }
  return bad;
}

std::size_t poison_count(std::size_t n, double budget) {
  if (!(budget > 0.0 && budget < 1.0)) throw std::invalid_argument("poison budget must be in (0, 1)");
  const auto count = static_cast<std::size_t>(std::floor(budget * static_cast<double>(n)));
  if (count == 0) throw std::invalid_argument("poison budget selects no samples");
  return count;
}

namespace {

data::Dataset with_rows(const data::Dataset& ds, std::span<const std::size_t> rows, const Tensor& z) {
  data::Dataset out = ds;
  const std::size_t d = ds.feature_dim(), c = ds.label_dim();
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (std::size_t f = 0; f < d; ++f) out.features.at(rows[j], f) = z.at(j, f);
    for (std::size_t f = 0; f < c; ++f) out.labels.at(rows[j], f) = z.at(j, d + f);
  }
  out.provenance = ds.provenance + " poisoned";
  return out;
}

// Validation minibatch for a round: consecutive slices of one seeded
// permutation per pass over the validation set.
std::vector<std::size_t> val_rows(std::size_t n, double fraction, std::uint64_t seed, std::size_t round) {
  const std::size_t m = std::clamp<std::size_t>(static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n))), 1, n);
  const std::size_t per_epoch = n / m;
  const std::size_t epoch = round / per_epoch, slot = round % per_epoch;
  const std::vector<std::size_t> perm = Rng::stream(seed, "val-minibatch", epoch).permutation(n);
  std::vector<std::size_t> rows(perm.begin() + static_cast<std::ptrdiff_t>(slot * m),
                                perm.begin() + static_cast<std::ptrdiff_t>((slot + 1) * m));
  std::sort(rows.begin(), rows.end());
  return rows;
}

}  // namespace

PoisonResult poison_mgd(std::shared_ptr<const data::Dataset> train, std::shared_ptr<const data::Dataset> val,
                        std::shared_ptr<const data::Dataset> test, const TrainSetup& setup,
                        const PoisonConfig& config) {
  if (!train || !val || !test) throw std::invalid_argument("poisoning needs training, validation and test sets");
  if (train->regression) throw std::invalid_argument("poisoning expects a classification dataset");
  if (!(config.step >= 0.0)) throw std::invalid_argument("poison step size must be >= 0");
  if (!(config.val_fraction > 0.0 && config.val_fraction <= 1.0)) {
    throw std::invalid_argument("validation fraction must be in (0, 1]");
  }
  PoisonResult result;
  result.rows.resize(poison_count(train->size(), config.budget));
  std::iota(result.rows.begin(), result.rows.end(), std::size_t{0});
  const train::TrainPlan plan = setup.plan(train, train::SamplePerturbation{result.rows, true});
  const std::size_t d = train->feature_dim();

  Tensor z = plan.default_meta();
  train::OutputFn val_loss, test_loss;
  val_loss.eval = val;
  test_loss.eval = test;
  auto record = [&](std::size_t round) {
    const train::OptimizerState trained = train::train(plan, z);
    PoisonRound row;
    row.round = round;
    row.test_loss = train::evaluate(test_loss, plan.model(), trained);
    row.val_loss = train::evaluate(val_loss, plan.model(), trained);
    row.constraint_violations = constraint_violations(z, d);
    result.trajectory.push_back(row);
  };
  record(0);
  result.clean_test_loss = result.trajectory.front().test_loss;

  for (std::size_t round = 1; round <= config.rounds; ++round) {
    const std::uint64_t seed =
        config.fresh_seed_per_round ? derive_seed(config.seed, "poison-train", round) : setup.seed;
    train::OutputFn objective;
    objective.eval = val;
    objective.rows = val_rows(val->size(), config.val_fraction, config.seed, round - 1);
    const Tensor g = replay::metagrad_replay(plan.with_seed(seed), z, objective, config.k).zbar;
    Tensor ascended = z;
    for (std::size_t i = 0; i < z.size(); ++i) {
      ascended[i] += config.step * static_cast<double>((g[i] > 0.0) - (g[i] < 0.0));
    }
    z = project_samples(ascended, d);
    record(round);
  }
  result.poisons = z;
  result.poisoned = with_rows(*train, result.rows, z);
  return result;
}

std::vector<TransferSeed> poison_transfer_eval(std::shared_ptr<const data::Dataset> clean,
                                               std::shared_ptr<const data::Dataset> poisoned,
                                               std::shared_ptr<const data::Dataset> test, const TrainSetup& standard,
                                               std::span<const std::uint64_t> seeds) {
  std::vector<TransferSeed> out;
  for (std::uint64_t seed : seeds) {
    TrainSetup setup = standard;
    setup.seed = seed;
    TransferSeed row;
    row.seed = seed;
    const train::TrainPlan clean_plan = setup.plan(clean);
    const train::TrainPlan poisoned_plan = setup.plan(poisoned);
    row.clean_loss = trained_loss(clean_plan, clean_plan.default_meta(), test);
    row.poisoned_loss = trained_loss(poisoned_plan, poisoned_plan.default_meta(), test);
    out.push_back(row);
  }
  return out;
}

}  // namespace mgd::apps
