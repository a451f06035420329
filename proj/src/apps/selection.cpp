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
#include <limits>
#include <numeric>
#include <stdexcept>

#include "mgd/apps.hpp"

namespace mgd::apps {

train::TrainPlan TrainSetup::plan(std::shared_ptr<const data::Dataset> train, train::Metaparam meta) const {
  if (!model) throw std::invalid_argument("train setup needs a model");
  const std::size_t batch = std::min(batch_size, train ? train->size() : std::size_t{0});
  return train::TrainPlan(model, rule, std::move(train), batch, steps, seed, std::move(meta), precision);
}

double trained_loss(const train::TrainPlan& plan, const Tensor& z, std::shared_ptr<const data::Dataset> eval) {
  train::OutputFn out;
  out.eval = std::move(eval);
  return train::evaluate(out, plan.model(), train::train(plan, z));
}

data::Dataset expand(const data::Dataset& pool, const DataCounts& counts) {
  if (counts.size() != pool.size()) throw ShapeError("counts do not match the pool size");
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < counts.size(); ++i) rows.insert(rows.end(), counts[i], i);
  if (rows.empty()) throw std::invalid_argument("all counts are zero: the training set would be empty");
  data::Dataset out = pool.subset(rows);
  out.provenance = pool.provenance + " expanded";
  return out;
}

std::size_t total(const DataCounts& counts) { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::size_t default_surrogate_iteration(std::size_t steps) {
  if (steps == 0) throw std::invalid_argument("surrogate iteration needs at least one training step");
  return std::min(steps * 9 / 10, steps - 1);
}

SurrogateGrad surrogate_metagrad(std::shared_ptr<const data::Dataset> pool, const DataCounts& counts,
                                 const TrainSetup& setup, std::size_t iteration, double scale,
                                 const train::OutputFn& output, std::size_t k) {
  auto expanded = std::make_shared<const data::Dataset>(expand(*pool, counts));
  const train::TrainPlan plan = setup.plan(expanded, train::DataWeights{pool, iteration, scale});
  const replay::MetagradReport report = replay::metagrad_replay(plan, plan.default_meta(), output, k);
  return {report.zbar, report.output_value};
}

DataCounts counts_update(const DataCounts& counts, const Tensor& g, double p, Rng& rng) {
  if (g.size() != counts.size()) throw ShapeError("metagradient does not match the counts");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("mask probability must be in [0, 1]");
  DataCounts out = counts;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    // Draw for every coordinate so the mask stream does not depend on g.
    const bool masked = rng.bernoulli(p);
    if (!masked) continue;
    if (g[i] > 0.0 && out[i] > 0) --out[i];
    if (g[i] < 0.0) ++out[i];
  }
  return out;
}

namespace {

// Keeps only as many increments as decrements (and vice versa), preferring
// the coordinates with the largest |g|.
DataCounts rebalance(const DataCounts& before, DataCounts after, const Tensor& g) {
  std::vector<std::size_t> up, down;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (after[i] > before[i]) up.push_back(i);
    if (after[i] < before[i]) down.push_back(i);
  }
  const auto by_magnitude = [&](std::size_t a, std::size_t b) { return std::abs(g[a]) > std::abs(g[b]); };
  std::stable_sort(up.begin(), up.end(), by_magnitude);
  std::stable_sort(down.begin(), down.end(), by_magnitude);
  const std::size_t moves = std::min(up.size(), down.size());
  for (std::size_t j = moves; j < up.size(); ++j) after[up[j]] = before[up[j]];
  for (std::size_t j = moves; j < down.size(); ++j) after[down[j]] = before[down[j]];
  return after;
}

double mean_count(const DataCounts& counts, const std::vector<std::size_t>& rows) {
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i : rows) acc += static_cast<double>(counts.at(i));
  return acc / static_cast<double>(rows.size());
}

}  // namespace

SelectionResult select_data_mgd(std::shared_ptr<const data::Dataset> pool, std::shared_ptr<const data::Dataset> target,
                                std::shared_ptr<const data::Dataset> val, const TrainSetup& setup,
                                const SelectionConfig& config) {
  if (!pool || !target || !val) throw std::invalid_argument("selection needs pool, target and validation sets");
  if (!(config.p > 0.0 && config.p <= 1.0)) throw std::invalid_argument("mask probability must be in (0, 1]");
  const std::size_t iteration = config.surrogate_iteration.value_or(default_surrogate_iteration(setup.steps));
  if (iteration >= setup.steps) throw std::invalid_argument("surrogate iteration must be < T");

  SelectionResult result;
  DataCounts counts(pool->size(), 1);
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t round = 0;; ++round) {
    auto expanded = std::make_shared<const data::Dataset>(expand(*pool, counts));
    const train::TrainPlan plan = setup.plan(expanded);
    const train::OptimizerState trained = train::train(plan, plan.default_meta());
    train::OutputFn target_loss, val_loss;
    target_loss.eval = target;
    val_loss.eval = val;
    SelectionRound row;
    row.round = round;
    row.target_loss = train::evaluate(target_loss, plan.model(), trained);
    row.val_loss = train::evaluate(val_loss, plan.model(), trained);
    row.selected_size = total(counts);
    row.tracked_mean_count = mean_count(counts, config.tracked);
    result.trajectory.push_back(row);
    result.history.push_back(counts);
    if (row.val_loss < best) {
      best = row.val_loss;
      result.best_round = round;
      result.counts = counts;
    }
    if (round == config.rounds) break;

    train::OutputFn output;
    output.eval = target;
    output.fraction = config.eval_fraction;
    output.seed = config.seed;
    output.round = round;
    const SurrogateGrad g = surrogate_metagrad(pool, counts, setup, iteration, config.weight_scale, output, config.k);
    Rng mask = Rng::stream(config.seed, "mask", round);
    DataCounts next = counts_update(counts, g.g, config.p, mask);
    if (config.fixed_size) next = rebalance(counts, std::move(next), g.g);
    if (total(next) == 0) throw std::runtime_error("selection removed every sample (round " + std::to_string(round) + ")");
    counts = std::move(next);
  }
  return result;
}

DataCounts random_counts(std::size_t n, std::size_t size, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("cannot draw from an empty pool");
  DataCounts counts(n, 0);
  Rng rng = Rng::stream(seed, "random-subset");
  std::vector<std::size_t> order = rng.permutation(n);
  for (std::size_t j = 0; j < size; ++j) {
    if (j > 0 && j % n == 0) order = rng.permutation(n);
    ++counts[order[j % n]];
  }
  return counts;
}

}  // namespace mgd::apps
