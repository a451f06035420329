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
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include "mgd/apps.hpp"
#include "mgd/cli.hpp"
#include "mgd/csv.hpp"
#include "mgd/metasmooth.hpp"
#include "mgd/snapshot.hpp"

namespace mgd::cli {

namespace {

using DatasetPtr = std::shared_ptr<const data::Dataset>;
using io::fmt;

// ---------------------------------------------------------------- helpers

ad::Precision precision_of(const Config& c) {
  const std::string& p = c.str("run.precision");
  if (p == "f64") return ad::Precision::kF64;
  if (p == "f32") return ad::Precision::kF32;
  throw ConfigError("run.precision must be f64 or f32, got '" + p + "'");
}

std::size_t checked_steps(const Config& c, const std::string& key) {
  const std::size_t steps = c.count(key);
  if (steps > c.count("run.max_train_steps")) {
    throw ConfigError(key + " = " + std::to_string(steps) + " exceeds run.max_train_steps");
  }
  return steps;
}

std::string norm_name(train::NormPlacement p) {
  switch (p) {
    case train::NormPlacement::kBefore:
      return "before";
    case train::NormPlacement::kAfter:
      return "after";
    case train::NormPlacement::kNone:
      return "none";
  }
  return "?";
}

std::string pooling_name(train::Pooling p) {
  switch (p) {
    case train::Pooling::kAvg:
      return "avg";
    case train::Pooling::kMax:
      return "max";
    case train::Pooling::kNone:
      return "none";
  }
  return "?";
}

std::string activation_name(train::Activation a) { return a == train::Activation::kGelu ? "gelu" : "relu"; }

// Library parsers throw std::invalid_argument; report them as config errors.
template <typename F>
auto parse_key(const Config& c, const std::string& key, F parse) {
  try {
    return parse(c.str(key));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

DatasetPtr synthetic(const Config& c, std::size_t n, std::uint64_t seed) {
  data::SyntheticSpec spec;
  spec.kind = parse_key(c, "data.kind", data::parse_synthetic_kind);
  if (spec.kind == data::SyntheticKind::kLinearRegression) {
    throw ConfigError("data.kind: this command needs a classification dataset");
  }
  spec.n = n;
  spec.noise = c.real("data.noise");
  spec.seed = seed;
  return std::make_shared<const data::Dataset>(data::gen_synthetic(spec));
}

// The command's three datasets: synthetic with per-role seeds, or a split of data.path.
std::array<DatasetPtr, 3> three_sets(const Config& c, const std::array<std::string, 3>& roles,
                                     const std::array<std::size_t, 3>& sizes) {
  const std::uint64_t seed = c.u64("run.seed");
  std::array<DatasetPtr, 3> out;
  if (c.empty("data.path")) {
    for (std::size_t i = 0; i < 3; ++i) out[i] = synthetic(c, sizes[i], derive_seed(seed, "data-" + roles[i]));
    return out;
  }
  const std::vector<double> fractions = c.reals("data.split");
  if (fractions.size() != 3) throw ConfigError("data.split needs three fractions");
  const data::Dataset all = data::load_idx_or_csv(c.str("data.path"));
  if (all.regression) throw ConfigError("data.path: this command needs a classification dataset");
  std::vector<data::Dataset> parts = data::split(all, fractions, derive_seed(seed, "data-split"));
  for (std::size_t i = 0; i < 3; ++i) out[i] = std::make_shared<const data::Dataset>(std::move(parts[i]));
  return out;
}

train::MlpSpec mlp_spec(const Config& c, const data::Dataset& ds) {
  train::MlpSpec spec;
  spec.input_dim = ds.feature_dim();
  spec.output_dim = ds.label_dim();
  spec.hidden = c.counts("model.hidden");
  spec.norm = parse_key(c, "model.norm", train::parse_norm_placement);
  spec.final_scale = c.real("model.final_scale");
  spec.activation = parse_key(c, "model.activation", train::parse_activation);
  spec.pooling = parse_key(c, "model.pooling", train::parse_pooling);
  return spec;
}

apps::TrainSetup train_setup(const Config& c, const train::MlpSpec& spec) {
  apps::TrainSetup setup;
  setup.model = std::make_shared<const train::Mlp>(spec);
  setup.rule.kind = parse_key(c, "train.rule", train::parse_rule_kind);
  setup.rule.lr = c.real("train.lr");
  setup.rule.momentum = c.real("train.momentum");
  setup.rule.weight_decay = c.real("train.weight_decay");
  setup.rule.validate();
  setup.batch_size = c.count("train.batch_size");
  setup.steps = checked_steps(c, "train.steps");
  setup.seed = derive_seed(c.u64("run.seed"), "train");
  setup.precision = precision_of(c);
  return setup;
}

replay::TreeOptions tree_options(const Config& c) {
  replay::TreeOptions options;
  options.memory_budget = c.count("run.memory_budget");
  options.run_id = c.command() + "-" + c.hash();
  return options;
}

// Collects written files for the manifest.
class Outputs {
 public:
  Outputs(const Config& c, std::ostream& log)
      : dir_(output_dir(c)), provenance_{c.command(), c.hash(), c.u64("run.seed"), version()}, log_(log) {
    std::filesystem::create_directories(dir_);
  }

  void csv(const std::string& name, const io::Table& table) {
    const std::string text = io::to_csv(provenance_, table);
    io::write_csv(dir_ / name, provenance_, table);
    add(name, fnv1a(text));
  }

  void dataset(const std::string& name, const data::Dataset& ds) {
    data::save_dataset(ds, dir_ / name);
    add(name, data::checksum(ds));
  }

  void finish(const Config& c) {
    const std::string text = c.resolved();
    const auto* begin = reinterpret_cast<const std::byte*>(text.data());
    write_file_bytes(dir_ / "config.ini", std::span<const std::byte>(begin, text.size()));
    io::write_manifest(dir_ / "manifest.json", provenance_, artifacts_);
    log_ << "wrote " << (dir_ / "manifest.json").string() << '\n';
  }

 private:
  void add(const std::string& name, std::uint64_t checksum) {
    artifacts_.push_back({name, name, checksum});
    log_ << "wrote " << (dir_ / name).string() << '\n';
  }

  std::filesystem::path dir_;
  io::Provenance provenance_;
  std::ostream& log_;
  std::vector<io::Artifact> artifacts_;
};

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.size() == b.size() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------- metagrad-check

int metagrad_check(const Config& c, std::ostream& log) {
  const std::uint64_t seed = c.u64("run.seed");
  const std::size_t steps = checked_steps(c, "check.steps");
  const double h = c.real("check.h"), tol = c.real("check.tol");
  data::SyntheticSpec spec;
  spec.n = c.count("check.n");
  spec.noise = 0.15;
  spec.seed = derive_seed(seed, "check-train");
  const auto train_set = std::make_shared<const data::Dataset>(data::gen_synthetic(spec));
  spec.seed = derive_seed(seed, "check-eval");
  const auto eval_set = std::make_shared<const data::Dataset>(data::gen_synthetic(spec));
  spec.n = 8;
  spec.seed = derive_seed(seed, "check-pool");
  const auto pool = std::make_shared<const data::Dataset>(data::gen_synthetic(spec));

  train::MlpSpec mlp;
  mlp.hidden = {c.count("check.hidden")};
  const auto model = std::make_shared<const train::Mlp>(mlp);
  train::OutputFn output;
  output.eval = eval_set;

  replay::MetagradOptions options;
  options.tree = tree_options(c);
  options.corrupt_replay = c.flag("check.corrupt_replay");

  io::Table table({"rule", "meta", "steps", "k", "bit_equal", "max_abs_diff", "fd_max_rel_err", "peak_live_states",
                   "live_bound", "replayed_steps", "replay_bound"});
  bool breach = false;
  for (const std::string& rule_name : c.words("check.rules")) {
    train::UpdateRule rule;
    rule.kind = train::parse_rule_kind(rule_name);
    rule.lr = rule.kind == train::RuleKind::kAdam ? c.real("check.adam_lr") : c.real("check.lr");
    rule.eps_root = 1e-8;
    for (const std::string& meta_name : c.words("check.metas")) {
      train::Metaparam meta;
      if (meta_name == "weights") {
        meta = train::DataWeights{pool, steps / 2, 1.0};
      } else if (meta_name == "rows") {
        meta = train::SamplePerturbation{{0, 1, 2, 3}, false};
      } else if (meta_name == "keypoints") {
        meta = train::LearningRate{train::LearningRate::Mode::kKeypoints, 4};
      } else {
        throw ConfigError("check.metas: unknown metaparameter '" + meta_name + "'");
      }
      const train::TrainPlan plan(model, rule, train_set, 8, steps, derive_seed(seed, "check-plan"), meta,
                                  precision_of(c));
      const Tensor z = plan.default_meta();
      const replay::MetagradReport stepwise = replay::metagrad_stepwise(plan, z, output);

      double fd_err = 0.0;
      for (std::size_t d = 0; d < c.count("check.directions"); ++d) {
        Rng rng = Rng::stream(seed, "check-direction", d);
        Tensor v(Shape{z.size()});
        double norm = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
          v[i] = rng.normal();
          norm += v[i] * v[i];
        }
        for (std::size_t i = 0; i < v.size(); ++i) v[i] /= std::sqrt(norm);
        fd_err = std::max(fd_err, replay::directional_check(plan, z, output, stepwise.zbar, v, h).rel_err);
      }

      for (std::size_t k : c.counts("check.k_values")) {
        const replay::MetagradReport r = replay::metagrad_replay(plan, z, output, k, options);
        const bool equal = bit_equal(r.zbar, stepwise.zbar) && r.output_value == stepwise.output_value;
        const std::size_t live_bound = replay::live_state_bound(steps + 1, k);
        const std::size_t replay_bound = replay::replay_step_bound(steps + 1, k);
        breach = breach || !equal || !(fd_err <= tol) || r.peak_live_states > live_bound ||
                 r.replayed_steps > replay_bound;
        table.add({rule_name, meta_name, fmt(steps), fmt(k), fmt(equal), fmt(max_abs_diff(r.zbar, stepwise.zbar)),
                   fmt(fd_err), fmt(r.peak_live_states), fmt(live_bound), fmt(r.replayed_steps), fmt(replay_bound)});
      }
      log << rule_name << " / " << meta_name << ": finite-difference rel err " << fmt(fd_err) << '\n';
    }
  }
  Outputs out(c, log);
  out.csv("metagrad_check.csv", table);
  out.finish(c);
  if (breach) {
    log << "tolerance breach: see metagrad_check.csv\n";
    return kToleranceBreach;
  }
  return kOk;
}

// ---------------------------------------------------------------- smoothness-scan

int smoothness_scan(const Config& c, std::ostream& log) {
  const std::uint64_t seed = c.u64("run.seed");
  data::SyntheticSpec spec;
  spec.n = c.count("scan.n");
  spec.noise = c.real("scan.noise");
  spec.seed = derive_seed(seed, "scan-train");
  smooth::ScanSetup setup;
  setup.train = std::make_shared<const data::Dataset>(data::gen_synthetic(spec));
  spec.seed = derive_seed(seed, "scan-eval");
  setup.eval = std::make_shared<const data::Dataset>(data::gen_synthetic(spec));
  setup.rule.kind = parse_key(c, "scan.rule", train::parse_rule_kind);
  setup.rule.lr = c.real("scan.lr");
  setup.rule.validate();
  setup.steps = checked_steps(c, "scan.steps");
  setup.perturbed_rows = c.count("scan.perturbed_rows");
  setup.probes = c.count("scan.probes");
  if (!c.empty("scan.h")) setup.h = c.real("scan.h");
  setup.precision = precision_of(c);

  const std::vector<smooth::ScanConfig> grid =
      smooth::default_grid(c.count("scan.width"), c.count("scan.batch_size"), derive_seed(seed, "scan-init"));
  const std::vector<smooth::ScanRow> rows = smooth::smoothness_scan(grid, setup);

  io::Table table({"config_id", "group", "width", "batch_size", "norm", "final_scale", "activation", "pooling", "h",
                   "S_hat", "S_hat_spread", "eval_accuracy", "degenerate", "status"});
  double sum[2] = {0.0, 0.0};
  std::size_t n[2] = {0, 0};
  for (const auto& r : rows) {
    const bool smooth_group = smooth::is_smooth_config(r.config);
    if (r.status == "ok") {
      sum[smooth_group] += r.S_hat;
      ++n[smooth_group];
    }
    table.add({fmt(r.config_id), smooth_group ? "smooth" : "non-smooth", fmt(r.config.width), fmt(r.config.batch_size),
               norm_name(r.config.norm), fmt(r.config.final_scale), activation_name(r.config.activation),
               pooling_name(r.config.pooling), fmt(r.h), fmt(r.S_hat), fmt(r.S_hat_spread), fmt(r.eval_metric),
               fmt(r.degenerate), r.status});
  }
  io::Table summary({"group", "configs_ok", "mean_S_hat"});
  const double nan = std::numeric_limits<double>::quiet_NaN();
  summary.add({"smooth", fmt(n[1]), fmt(n[1] ? sum[1] / static_cast<double>(n[1]) : nan)});
  summary.add({"non-smooth", fmt(n[0]), fmt(n[0] ? sum[0] / static_cast<double>(n[0]) : nan)});
  log << "mean S_hat: smooth " << fmt(n[1] ? sum[1] / static_cast<double>(n[1]) : nan) << ", non-smooth "
      << fmt(n[0] ? sum[0] / static_cast<double>(n[0]) : nan) << '\n';

  Outputs out(c, log);
  out.csv("scan.csv", table);
  out.csv("scan_summary.csv", summary);
  out.finish(c);
  return kOk;
}

// ---------------------------------------------------------------- select-data

int select_data(const Config& c, std::ostream& log) {
  const std::uint64_t seed = c.u64("run.seed");
  auto sets = three_sets(c, {"pool", "target", "val"},
                         {c.count("select.pool_n"), c.count("select.target_n"), c.count("select.val_n")});
  data::Dataset pool = *sets[0];
  const std::vector<std::size_t> flipped = data::flip_labels(pool, c.real("select.flip_rate"), derive_seed(seed, "flip"));
  const auto pool_ptr = std::make_shared<const data::Dataset>(pool);
  const apps::TrainSetup setup = train_setup(c, mlp_spec(c, pool));

  apps::SelectionConfig cfg;
  cfg.p = c.real("select.p");
  cfg.rounds = c.count("select.rounds");
  if (!c.empty("select.surrogate_iteration")) cfg.surrogate_iteration = c.count("select.surrogate_iteration");
  cfg.weight_scale = c.real("select.weight_scale");
  cfg.eval_fraction = c.real("select.eval_fraction");
  cfg.fixed_size = c.flag("select.fixed_size");
  cfg.k = c.count("run.k");
  cfg.seed = derive_seed(seed, "select");
  cfg.tracked = flipped;
  const apps::SelectionResult result = apps::select_data_mgd(pool_ptr, sets[1], sets[2], setup, cfg);

  io::Table trajectory({"round", "target_loss", "val_loss", "selected_size", "flipped_mean_count"});
  for (const auto& r : result.trajectory) {
    trajectory.add({fmt(r.round), fmt(r.target_loss), fmt(r.val_loss), fmt(r.selected_size), fmt(r.tracked_mean_count)});
  }
  io::Table counts({"index", "count", "flipped"});
  for (std::size_t i = 0; i < result.counts.size(); ++i) {
    counts.add({fmt(i), fmt(result.counts[i]), fmt(std::binary_search(flipped.begin(), flipped.end(), i))});
  }

  const data::Dataset selected = apps::expand(pool, result.counts);
  const auto selected_ptr = std::make_shared<const data::Dataset>(selected);
  const double mgd_loss = apps::trained_loss(setup.plan(selected_ptr), Tensor(Shape{0}), sets[1]);
  const apps::DataCounts random = apps::random_counts(pool.size(), apps::total(result.counts), derive_seed(seed, "random"));
  const auto random_ptr = std::make_shared<const data::Dataset>(apps::expand(pool, random));
  const double random_loss = apps::trained_loss(setup.plan(random_ptr), Tensor(Shape{0}), sets[1]);
  io::Table summary({"metric", "value"});
  summary.add({"best_round", fmt(result.best_round)});
  summary.add({"selected_size", fmt(apps::total(result.counts))});
  summary.add({"mgd_target_loss", fmt(mgd_loss)});
  summary.add({"random_target_loss", fmt(random_loss)});
  log << "target loss: MGD selection " << fmt(mgd_loss) << ", random subset " << fmt(random_loss) << '\n';

  Outputs out(c, log);
  out.csv("trajectory.csv", trajectory);
  out.csv("counts.csv", counts);
  out.csv("summary.csv", summary);
  out.dataset("selected.snap", selected);
  out.finish(c);
  return kOk;
}

// ---------------------------------------------------------------- poison

int poison(const Config& c, std::ostream& log) {
  const std::uint64_t seed = c.u64("run.seed");
  auto sets = three_sets(c, {"train", "val", "test"},
                         {c.count("poison.train_n"), c.count("poison.val_n"), c.count("poison.test_n")});
  const train::MlpSpec spec = mlp_spec(c, *sets[0]);
  const apps::TrainSetup setup = train_setup(c, spec);

  apps::PoisonConfig cfg;
  cfg.budget = c.real("poison.budget");
  cfg.step = c.real("poison.step");
  cfg.rounds = c.count("poison.rounds");
  cfg.val_fraction = c.real("poison.val_fraction");
  cfg.fresh_seed_per_round = c.flag("poison.fresh_seed");
  cfg.k = c.count("run.k");
  cfg.seed = derive_seed(seed, "poison");
  const apps::PoisonResult result = apps::poison_mgd(sets[0], sets[1], sets[2], setup, cfg);

  io::Table trajectory({"round", "test_loss", "val_loss", "constraint_violations"});
  for (const auto& r : result.trajectory) {
    trajectory.add({fmt(r.round), fmt(r.test_loss), fmt(r.val_loss), fmt(r.constraint_violations)});
  }

  train::MlpSpec transfer_spec = spec;
  transfer_spec.norm = parse_key(c, "transfer.norm", train::parse_norm_placement);
  transfer_spec.final_scale = c.real("transfer.final_scale");
  apps::TrainSetup transfer = setup;
  transfer.model = std::make_shared<const train::Mlp>(transfer_spec);
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < c.count("poison.transfer_seeds"); ++i) seeds.push_back(derive_seed(seed, "transfer", i));
  const auto poisoned = std::make_shared<const data::Dataset>(result.poisoned);
  const std::vector<apps::TransferSeed> rows = apps::poison_transfer_eval(sets[0], poisoned, sets[2], transfer, seeds);
  io::Table transfer_table({"seed", "clean_loss", "poisoned_loss", "delta"});
  std::size_t degraded = 0;
  for (const auto& r : rows) {
    transfer_table.add({std::to_string(r.seed), fmt(r.clean_loss), fmt(r.poisoned_loss), fmt(r.delta())});
    degraded += r.delta() > 0.0;
  }
  log << "test loss: clean " << fmt(result.clean_test_loss) << ", poisoned " << fmt(result.trajectory.back().test_loss)
      << "; transfer degraded in " << degraded << "/" << rows.size() << " seeds\n";

  Outputs out(c, log);
  out.csv("trajectory.csv", trajectory);
  out.csv("transfer.csv", transfer_table);
  out.dataset("poisoned.snap", result.poisoned);
  out.finish(c);
  return kOk;
}

// ---------------------------------------------------------------- lr-opt

int lr_opt(const Config& c, std::ostream& log) {
  const std::size_t keypoints = c.count("lr.keypoints");
  const train::LearningRate meta{train::LearningRate::Mode::kKeypoints, keypoints};
  const std::uint64_t seed = c.u64("run.seed");
  std::optional<train::TrainPlan> plan;
  train::OutputFn target, test;
  const std::string problem = c.str("lr.problem");
  if (problem == "mlp") {
    auto sets =
        three_sets(c, {"train", "target", "test"}, {c.count("lr.train_n"), c.count("lr.target_n"), c.count("lr.test_n")});
    plan = train_setup(c, mlp_spec(c, *sets[0])).plan(sets[0], meta);
    target.eval = sets[1];
    test.eval = sets[2];
  } else if (problem == "quadratic") {
    const std::vector<double> curvature = c.reals("quadratic.curvature"), linear = c.reals("quadratic.linear");
    if (curvature.empty() || curvature.size() != linear.size()) {
      throw ConfigError("quadratic.curvature and quadratic.linear need the same nonzero length");
    }
    Tensor a(Shape{curvature.size(), curvature.size()});
    for (std::size_t i = 0; i < curvature.size(); ++i) a.at(i, i) = curvature[i];
    const auto model = std::make_shared<const train::Quadratic>(a, Tensor::vector(linear), 0.0,
                                                                Tensor(Shape{curvature.size()}));
    // The quadratic ignores its data; a tiny set only drives the batch loop.
    const auto data = synthetic(c, 8, derive_seed(seed, "data-quadratic"));
    plan.emplace(model, train::UpdateRule{}, data, data->size(), checked_steps(c, "train.steps"),
                 derive_seed(seed, "train"), meta, precision_of(c));
    target.eval = test.eval = data;
  } else {
    throw ConfigError("lr.problem must be mlp or quadratic, got '" + problem + "'");
  }

  apps::LrConfig cfg;
  cfg.alpha = c.real("lr.alpha");
  cfg.rounds = c.count("lr.rounds");
  cfg.floor = c.real("lr.floor");
  cfg.k = c.count("run.k");
  const apps::LrResult result =
      apps::optimize_lr_schedule(*plan, std::vector<double>(keypoints, c.real("lr.init")), target, test, cfg);

  io::Table trajectory({"round", "target_loss", "test_loss", "alpha", "status", "keypoints"});
  for (const auto& r : result.trajectory) {
    trajectory.add({fmt(r.round), fmt(r.target_loss), fmt(r.test_loss), fmt(r.alpha), r.status, io::fmt_list(r.keypoints)});
  }
  io::Table summary({"metric", "value"});
  summary.add({"initial_target_loss", fmt(result.initial_target_loss)});
  summary.add({"best_target_loss", fmt(result.best_target_loss)});
  summary.add({"best_keypoints", io::fmt_list(result.keypoints)});
  log << "target loss: flat init " << fmt(result.initial_target_loss) << ", best " << fmt(result.best_target_loss) << '\n';

  Outputs out(c, log);
  out.csv("trajectory.csv", trajectory);
  const std::size_t points = c.count("lr.grid_points");
  if (points > 0) {
    io::Table grid({"lr", "target_loss", "status"});
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i <= points; ++i) {
      const double lr = c.real("lr.grid_max") * static_cast<double>(i) / static_cast<double>(points);
      try {
        const double loss = train::evaluate(target, plan->model(),
                                            train::train(*plan, Tensor::vector(std::vector<double>(keypoints, lr))));
        best = std::min(best, loss);
        grid.add({fmt(lr), fmt(loss), "ok"});
      } catch (const NumericalError&) {
        grid.add({fmt(lr), "nan", "diverged"});
      }
    }
    summary.add({"grid_best_target_loss", fmt(best)});
    out.csv("grid.csv", grid);
  }
  out.csv("summary.csv", summary);
  out.finish(c);
  return kOk;
}

// ---------------------------------------------------------------- bench-replay

int bench_replay(const Config& c, std::ostream& log) {
  const bool timing = c.flag("bench.timing");
  std::vector<std::string> columns{"n", "k", "levels", "peak_states", "live_bound", "replayed_steps", "replay_bound",
                                   "forward_steps"};
  if (timing) columns.push_back("wall_time_ms");
  io::Table table(columns);
  bool breach = false;
  // A one-parameter state that records its own index.
  const auto state_at = [](std::size_t index) {
    train::OptimizerState s;
    s.step = index;
    s.params.push_back({"x", Tensor::vector({static_cast<double>(index)})});
    return s;
  };
  for (std::size_t n : c.counts("bench.n")) {
    for (std::size_t k : c.counts("bench.k")) {
      const auto start = std::chrono::steady_clock::now();
      replay::TreeOptions options = tree_options(c);
      options.run_id += "-" + std::to_string(n) + "-" + std::to_string(k);
      replay::CheckpointTree tree(
          n, k, state_at(0), [&](const train::OptimizerState& s, std::size_t) { return state_at(s.step + 1); }, options);
      const std::size_t live_bound = replay::live_state_bound(n, k);
      std::size_t expected = n;
      tree.traverse([&](std::size_t index, const train::OptimizerState& s) {
        breach = breach || index + 1 != expected || s.step != index || tree.stats().live > live_bound;
        --expected;
      });
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
      const replay::TreeStats& st = tree.stats();
      const std::size_t replay_bound = replay::replay_step_bound(n, k);
      breach = breach || expected != 0 || st.peak_live > live_bound || st.replayed_steps > replay_bound;
      std::vector<std::string> row{fmt(n),          fmt(k),          fmt(tree.levels()),       fmt(st.peak_live),
                                   fmt(live_bound), fmt(st.replayed_steps), fmt(replay_bound), fmt(st.forward_steps)};
      if (timing) row.push_back(fmt(ms));
      table.add(row);
    }
  }
  Outputs out(c, log);
  out.csv("bench_replay.csv", table);
  out.finish(c);
  if (breach) {
    log << "accounting bound breached: see bench_replay.csv\n";
    return kToleranceBreach;
  }
  return kOk;
}

}  // namespace

int run_command(const Config& config, std::ostream& log) {
  try {
    precision_of(config);
    const std::string& name = config.command();
    if (name == "metagrad-check") return metagrad_check(config, log);
    if (name == "smoothness-scan") return smoothness_scan(config, log);
    if (name == "select-data") return select_data(config, log);
    if (name == "poison") return poison(config, log);
    if (name == "lr-opt") return lr_opt(config, log);
    if (name == "bench-replay") return bench_replay(config, log);
    throw ConfigError("unknown command '" + name + "'");
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const replay::DeterminismError& e) {
    log << "determinism violation: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << '\n';
    return kNumericalFailure;
  } catch (const std::invalid_argument& e) {
    log << "invalid setting: " << e.what() << '\n';
    return kConfigError;
  } catch (const data::DataError& e) {
    log << "data error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace mgd::cli
