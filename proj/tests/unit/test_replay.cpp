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
#include <filesystem>

#include "doctest.h"
#include "mgd/replay.hpp"
#include "mgd/rng.hpp"

using namespace mgd;
using namespace mgd::replay;
using mgd::train::DataWeights;
using mgd::train::LearningRate;
using mgd::train::Mlp;
using mgd::train::MlpSpec;
using mgd::train::OutputFn;
using mgd::train::Quadratic;
using mgd::train::RuleKind;
using mgd::train::SamplePerturbation;
using mgd::train::TrainPlan;
using mgd::train::UpdateRule;

namespace {

std::shared_ptr<const data::Dataset> toy_data(std::size_t n = 16, std::uint64_t seed = 1) {
  data::SyntheticSpec spec;
  spec.n = n;
  spec.seed = seed;
  return std::make_shared<const data::Dataset>(data::gen_synthetic(spec));
}

// A stand-in state carrying only its own index.
OptimizerState counter_state(std::size_t index) {
  OptimizerState s;
  s.step = index;
  s.params.push_back({"x", Tensor::vector({static_cast<double>(index)})});
  return s;
}

OptimizerState counter_advance(const OptimizerState& s, std::size_t) { return counter_state(s.step + 1); }

std::size_t ceil_log(std::size_t n, std::size_t k) {
  std::size_t levels = 0;
  for (std::size_t p = 1; p < n; p *= k) ++levels;
  return levels;
}

// Visits the whole tree, checking order and the storage bound at every state.
TreeStats walk(std::size_t n, std::size_t k, TreeOptions options = {}) {
  CheckpointTree tree(n, k, counter_state(0), counter_advance, options);
  std::size_t expected = n;
  tree.traverse([&](std::size_t index, const OptimizerState& s) {
    REQUIRE(index + 1 == expected);
    CHECK(s.step == index);
    CHECK(tree.stats().live <= k * ceil_log(n, k) + k);
    --expected;
  });
  CHECK(expected == 0);
  return tree.stats();
}

UpdateRule rule_of(RuleKind kind) {
  UpdateRule r;
  r.kind = kind;
  r.lr = kind == RuleKind::kAdam ? 0.02 : 0.1;
  r.eps_root = 1e-8;
  return r;
}

OutputFn loss_on(std::shared_ptr<const data::Dataset> eval) {
  OutputFn out;
  out.eval = std::move(eval);
  return out;
}

}  // namespace

TEST_CASE("tree bounds helpers") {
  CHECK(tree_levels(8, 2) == 3);
  CHECK(tree_levels(9, 3) == 2);
  CHECK(tree_levels(10, 3) == 3);
  CHECK(tree_levels(3, 3) == 1);
  CHECK(live_state_bound(81, 3) == 15);
  CHECK(replay_step_bound(81, 3) == 324);
}

TEST_CASE("reverse in-order traversal of a 3-ary tree over 9 states") {
  const TreeStats stats = walk(9, 3);
  CHECK(stats.peak_live <= 3 * 2 + 3);
  CHECK(stats.forward_steps == 6);
  CHECK(stats.replayed_steps == 6);
  CHECK(stats.live == 0);
}

TEST_CASE("81 states with arity 3 stay within both bounds") {
  const TreeStats stats = walk(81, 3);
  CHECK(stats.replayed_steps <= 324);
  CHECK(stats.peak_live <= 15);
}

TEST_CASE("a single level needs no replay") {
  for (std::size_t k : {4u, 5u, 9u}) {
    const TreeStats stats = walk(4, k);
    CHECK(stats.replayed_steps == 0);
    CHECK(stats.forward_steps == 3);
  }
}

TEST_CASE("binary tree over 8 states stores the expected set at state 7") {
  CheckpointTree tree(8, 2, counter_state(0), counter_advance);
  std::vector<std::size_t> at_seven;
  tree.traverse([&](std::size_t index, const OptimizerState&) {
    if (index == 7) at_seven = tree.stored_indices();
  });
  CHECK(at_seven == std::vector<std::size_t>{0, 4, 6, 7});
}

TEST_CASE("compute and storage bounds over a sweep") {
  for (std::size_t k : {2u, 3u, 4u, 8u}) {
    for (std::size_t n : {8u, 13u, 64u, 100u, 257u, 1024u}) {
      INFO("n=" << n << " k=" << k);
      const TreeStats stats = walk(n, k);
      CHECK(stats.replayed_steps <= n * ceil_log(n, k));
      CHECK(stats.peak_live <= k * ceil_log(n, k) + k);
      CHECK(stats.forward_steps <= n - 1);
    }
  }
}

TEST_CASE("nondeterministic replay is detected") {
  std::vector<int> calls(16, 0);
  const Advance flaky = [&](const OptimizerState& s, std::size_t index) {
    OptimizerState next = counter_state(s.step + 1);
    if (calls[index]++ > 0) next.params[0].value[0] += 1e-9;
    return next;
  };
  CheckpointTree tree(16, 2, counter_state(0), flaky);
  CHECK_THROWS_AS(tree.traverse([](std::size_t, const OptimizerState&) {}), DeterminismError);
}

TEST_CASE("states spill to disk under a memory budget") {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / "mgd_test_spill";
  std::filesystem::remove_all(dir);
  TreeOptions options;
  options.memory_budget = 2;
  options.spill_dir = dir;
  options.run_id = "spill-test";
  const TreeStats stats = walk(27, 3, options);
  CHECK(stats.spilled > 0);
  CHECK(stats.replayed_steps == walk(27, 3).replayed_steps);
}

TEST_CASE("metagradient of a two-step constant learning rate") {
  LearningRate meta;
  meta.mode = LearningRate::Mode::kConstant;
  const auto model = Quadratic::scalar(1, 1);
  const TrainPlan plan(model, UpdateRule{}, toy_data(), 2, 2, 0, meta);
  const Tensor z = Tensor::vector({0.5});

  SUBCASE("identity output: d(2z - z^2)/dz = 2 - 2z") {
    const train::OptimizerState s0 = train::init_state(plan);
    const train::OptimizerState s1 = train::step(s0, plan, z);
    const Tensor one[] = {Tensor::vector({1.0})};
    const Cotangent c1 = backward_step(plan, s1, z, one);
    const Cotangent c0 = backward_step(plan, s0, z, c1.state);
    CHECK(c1.meta[0] + c0.meta[0] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("loss output: chain rule through theta_2") {
    // f = 0.5 t^2 - t with t = 2z - z^2, so f' = (t - 1)(2 - 2z).
    const auto report = metagrad_stepwise(plan, z, loss_on(toy_data()));
    CHECK(report.zbar[0] == doctest::Approx((0.75 - 1.0) * 1.0).epsilon(1e-15));
    CHECK(report.output_value == doctest::Approx(0.5 * 0.75 * 0.75 - 0.75).epsilon(1e-15));
    CHECK(metagrad_replay(plan, z, loss_on(toy_data()), 2).zbar.bit_equal(report.zbar));
  }
  SUBCASE("a single step is one term") {
    const TrainPlan one_step(model, UpdateRule{}, toy_data(), 2, 1, 0, meta);
    // t1 = z, df/dt1 = t1 - 1, dt1/dz = 1
    const auto report = metagrad_stepwise(one_step, Tensor::vector({0.3}), loss_on(toy_data()));
    CHECK(report.zbar[0] == doctest::Approx(-0.7).epsilon(1e-15));
    CHECK(report.backward_steps == 1);
  }
}

TEST_CASE("per-step learning rates on a 2-D quadratic match finite differences") {
  const auto model = std::make_shared<const Quadratic>(Tensor::matrix({{2.0, 0.5}, {0.5, 1.0}}),
                                                      Tensor::vector({1.0, -0.5}), 0.0, Tensor::vector({0.3, 0.9}));
  LearningRate meta;
  meta.mode = LearningRate::Mode::kPerStep;
  const TrainPlan plan(model, UpdateRule{}, toy_data(), 2, 4, 0, meta);
  const OutputFn out = loss_on(toy_data());
  const Tensor z = Tensor::vector({0.2, 0.3, 0.25, 0.1});
  const auto report = metagrad_stepwise(plan, z, out);
  const double h = 1e-6;
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor up = z, down = z;
    up[i] += h;
    down[i] -= h;
    const double fd = (train::evaluate(out, *model, train::train(plan, up)) -
                       train::evaluate(out, *model, train::train(plan, down))) /
                      (2 * h);
    CHECK(report.zbar[i] == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("replay matches step-wise metagradients bit for bit") {
  const auto data = toy_data(24);
  const auto eval = toy_data(12, 7);
  MlpSpec spec;
  spec.hidden = {4};
  const auto model = std::make_shared<const Mlp>(spec);

  std::vector<std::pair<std::string, train::Metaparam>> metas;
  metas.emplace_back("weights", DataWeights{data, 0, 1.0});
  metas.emplace_back("rows", SamplePerturbation{{2, 5, 11}, true});
  LearningRate keypoints;
  metas.emplace_back("keypoints", keypoints);
  LearningRate per_step;
  per_step.mode = LearningRate::Mode::kPerStep;
  metas.emplace_back("per-step", per_step);

  for (RuleKind kind : {RuleKind::kSgd, RuleKind::kMomentum, RuleKind::kAdam}) {
    for (std::size_t steps : {4u, 16u, 50u}) {
      for (const auto& [name, meta] : metas) {
        train::Metaparam m = meta;
        if (auto* w = std::get_if<DataWeights>(&m)) w->iteration = steps / 2;
        const TrainPlan plan(model, rule_of(kind), data, 6, steps, 3, m);
        Tensor z = plan.default_meta();
        if (std::holds_alternative<DataWeights>(m)) {
          for (std::size_t i = 0; i < z.size(); ++i) z[i] = 0.01 * static_cast<double>(i % 3);
        }
        const OutputFn out = loss_on(eval);
        const auto reference = metagrad_stepwise(plan, z, out);
        CHECK(reference.zbar.all_finite());
        for (std::size_t k : {2u, 3u, 5u}) {
          INFO(train::to_string(kind) << " T=" << steps << " " << name << " k=" << k);
          const auto report = metagrad_replay(plan, z, out, k);
          CHECK(report.zbar.bit_equal(reference.zbar));
          CHECK(report.output_value == reference.output_value);
          CHECK(report.backward_steps == steps);
          CHECK(report.peak_live_states <= live_state_bound(steps + 1, k));
          CHECK(report.replayed_steps <= replay_step_bound(steps + 1, k));
          CHECK(report.equivalent_trainings(steps) <=
                1.0 + static_cast<double>(ceil_log(steps, k)) + 1.0 / static_cast<double>(steps));
        }
      }
    }
  }
}

TEST_CASE("metagradients agree with directional finite differences on a smooth plan") {
  const auto data = toy_data(24);
  const auto model = std::make_shared<const Mlp>(MlpSpec{});
  const TrainPlan plan(model, rule_of(RuleKind::kSgd), data, 8, 12, 2, SamplePerturbation{{0, 3, 8, 13}, false});
  const OutputFn out = loss_on(toy_data(16, 5));
  const Tensor z = plan.default_meta();
  const Tensor grad = metagrad_replay(plan, z, out, 3).zbar;
  Rng rng(17);
  const double h = 1e-4;
  for (int trial = 0; trial < 10; ++trial) {
    Tensor v(z.shape());
    double norm = 0.0;
    for (double& x : v.data()) {
      x = rng.normal();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    double predicted = 0.0;
    Tensor up = z, down = z;
    for (std::size_t i = 0; i < v.size(); ++i) {
      v[i] /= norm;
      predicted += grad[i] * v[i];
      up[i] += h * v[i];
      down[i] -= h * v[i];
    }
    const double fd = (train::evaluate(out, *model, train::train(plan, up)) -
                       train::evaluate(out, *model, train::train(plan, down))) /
                      (2 * h);
    CHECK(predicted == doctest::Approx(fd).epsilon(1e-4));
  }
}

TEST_CASE("corrupted replay is caught") {
  const TrainPlan plan(std::make_shared<const Mlp>(MlpSpec{}), rule_of(RuleKind::kMomentum), toy_data(), 4, 9, 1,
                       LearningRate{});
  MetagradOptions options;
  options.corrupt_replay = true;
  CHECK_THROWS_AS(metagrad_replay(plan, plan.default_meta(), loss_on(toy_data()), 3, options), DeterminismError);
}

TEST_CASE("cotangent overflow aborts or clips") {
  // Forward stays finite while every backward step multiplies by 1 - 1e30.
  LearningRate meta;
  meta.mode = LearningRate::Mode::kConstant;
  UpdateRule rule;
  rule.lr = 1e30;
  const TrainPlan plan(Quadratic::scalar(1, 1e-300), rule, toy_data(), 2, 12, 0, meta);
  const Tensor z = Tensor::vector({1e30});
  REQUIRE(train::train(plan, z).params[0].value.all_finite());
  CHECK_THROWS_AS(metagrad_stepwise(plan, z, loss_on(toy_data())), NumericalError);
  MetagradOptions clip;
  clip.overflow = MetagradOptions::Overflow::kClip;
  const auto report = metagrad_replay(plan, z, loss_on(toy_data()), 2, clip);
  CHECK(report.clipped_steps > 0);
  CHECK(report.zbar.all_finite());
}

TEST_CASE("metagradient preconditions") {
  const auto data = toy_data();
  UpdateRule adam = rule_of(RuleKind::kAdam);
  adam.eps_root = 0.0;
  const TrainPlan plan(std::make_shared<const Mlp>(MlpSpec{}), adam, data, 4, 3, 0, LearningRate{});
  CHECK_THROWS(metagrad_stepwise(plan, plan.default_meta(), loss_on(data)));
  OutputFn accuracy = loss_on(data);
  accuracy.kind = OutputFn::Kind::kAccuracy;
  const TrainPlan sgd_plan = plan.with_rule(rule_of(RuleKind::kSgd));
  CHECK_THROWS(metagrad_stepwise(sgd_plan, sgd_plan.default_meta(), accuracy));
  CHECK_THROWS(metagrad_replay(sgd_plan, sgd_plan.default_meta(), loss_on(data), 1));
  CHECK_THROWS_AS(metagrad_stepwise(sgd_plan, Tensor(Shape{2}), loss_on(data)), ShapeError);
}
