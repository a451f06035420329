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
#include <set>

#include "doctest.h"
#include "mgd/gradcheck.hpp"
#include "mgd/rng.hpp"
#include "mgd/trainer.hpp"

using namespace mgd;
using namespace mgd::train;

namespace {

std::shared_ptr<const data::Dataset> toy_data(std::size_t n = 8, std::uint64_t seed = 1) {
  data::SyntheticSpec spec;
  spec.n = n;
  spec.seed = seed;
  return std::make_shared<const data::Dataset>(data::gen_synthetic(spec));
}

std::shared_ptr<const Mlp> small_mlp(std::size_t width = 4) {
  MlpSpec spec;
  spec.hidden = {width};
  return std::make_shared<const Mlp>(spec);
}

UpdateRule sgd(double lr) {
  UpdateRule r;
  r.lr = lr;
  return r;
}

double theta_of(const OptimizerState& s) { return s.params[0].value[0]; }

// A 10-parameter quadratic with a random positive definite curvature.
std::shared_ptr<const Quadratic> quadratic10(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t p = 10;
  Tensor m(Shape{p, p}), a(Shape{p, p}), b(Shape{p}), start(Shape{p});
  for (double& v : m.data()) v = rng.normal() * 0.3;
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < p; ++k) acc += m.at(k, i) * m.at(k, j);
      a.at(i, j) = acc + (i == j ? 0.5 : 0.0);
    }
    b[i] = rng.normal();
    start[i] = rng.normal();
  }
  return std::make_shared<const Quadratic>(a, b, 0.0, start);
}

}  // namespace

TEST_CASE("one SGD step on a shifted square") {
  // loss (t - 1)^2 / 2 = 0.5 t^2 - t + 0.5
  const TrainPlan plan(Quadratic::scalar(1, 1, 0.5), sgd(0.5), toy_data(), 2, 1, 0);
  const OptimizerState s1 = step(init_state(plan), plan, plan.default_meta());
  CHECK(theta_of(s1) == 0.5);
  CHECK(s1.step == 1);
}

TEST_CASE("per-step learning rates follow the plain gradient step") {
  LearningRate meta;
  meta.mode = LearningRate::Mode::kPerStep;
  const TrainPlan plan(Quadratic::scalar(1, 1), sgd(0.1), toy_data(), 2, 2, 0, meta);
  const OptimizerState s = train::train(plan, Tensor::vector({0.5, 0.25}));
  // t1 = 0 - 0.5 * (0 - 1); t2 = t1 - 0.25 * (t1 - 1)
  CHECK(theta_of(s) == 0.625);
}

TEST_CASE("constant learning rate over two steps gives 2z - z^2") {
  LearningRate meta;
  meta.mode = LearningRate::Mode::kConstant;
  const TrainPlan plan(Quadratic::scalar(1, 1), sgd(0.1), toy_data(), 2, 2, 0, meta);
  for (double z : {0.1, 0.5, 0.8, 1.3}) {
    CHECK(theta_of(train::train(plan, Tensor::vector({z}))) == doctest::Approx(2 * z - z * z).epsilon(1e-15));
  }
}

TEST_CASE("Adam single step from zero moments") {
  UpdateRule rule;
  rule.kind = RuleKind::kAdam;
  rule.lr = 0.01;
  rule.weight_decay = 0.1;
  const TrainPlan plan(Quadratic::scalar(1, 1, 0, 2), rule, toy_data(), 2, 1, 0);
  const OptimizerState s = step(init_state(plan), plan, plan.default_meta());
  const double g = 1.0;  // gradient of 0.5 t^2 - t at t = 2
  const double m = (1 - 0.9) * g;
  const double v = (1 - 0.999) * g * g;
  const double expected = 2.0 - 0.01 * (m / (std::sqrt(v + 1e-12) + 1e-8) + 0.1 * 2.0);
  CHECK(theta_of(s) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(s.aux.size() == 2);
  CHECK(s.aux[0].name == "m/theta");
  CHECK(s.aux[1].name == "v/theta");
  CHECK(s.aux[0].value[0] == doctest::Approx(m).epsilon(1e-15));

  SUBCASE("bias correction divides the moments") {
    UpdateRule corrected = rule;
    corrected.bias_correction = true;
    const TrainPlan p2(Quadratic::scalar(1, 1, 0, 2), corrected, toy_data(), 2, 1, 0);
    const double want = 2.0 - 0.01 * (1.0 / (std::sqrt(1.0 + 1e-12) + 1e-8) + 0.2);
    CHECK(theta_of(step(init_state(p2), p2, p2.default_meta())) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("momentum and Nesterov directions") {
  UpdateRule rule;
  rule.kind = RuleKind::kMomentum;
  rule.lr = 0.1;
  rule.momentum = 0.5;
  const TrainPlan plain(Quadratic::scalar(1, 0, 0, 1), rule, toy_data(), 2, 2, 0);
  // g0 = 1: buf = 1, t1 = 0.9; g1 = 0.9: buf = 1.4, t2 = 0.76
  CHECK(theta_of(train::train(plain, plain.default_meta())) == doctest::Approx(0.76).epsilon(1e-15));
  rule.nesterov = true;
  const TrainPlan nesterov(Quadratic::scalar(1, 0, 0, 1), rule, toy_data(), 2, 1, 0);
  // direction g + mu * buf = 1 + 0.5
  CHECK(theta_of(train::train(nesterov, nesterov.default_meta())) == doctest::Approx(0.85).epsilon(1e-15));
}

TEST_CASE("weight decay skips normalization parameters by default") {
  const auto data = toy_data();
  const auto model = small_mlp();
  UpdateRule rule = sgd(0.1);
  const TrainPlan no_decay(model, rule, data, 8, 1, 3);
  rule.weight_decay = 0.5;
  const TrainPlan decay(model, rule, data, 8, 1, 3);
  rule.decay_norm_params = true;
  const TrainPlan decay_all(model, rule, data, 8, 1, 3);
  CHECK_FALSE(model->is_norm_param("out.w"));

  // Every parameter nonzero, so decay always has an effect when applied.
  OptimizerState s0 = init_state(no_decay);
  for (auto& p : s0.params) {
    for (double& v : p.value.data()) v += 0.25;
  }
  const OptimizerState a = step(s0, no_decay, Tensor(Shape{0}));
  const OptimizerState b = step(s0, decay, Tensor(Shape{0}));
  const OptimizerState c = step(s0, decay_all, Tensor(Shape{0}));
  bool saw_norm = false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    const bool norm = model->is_norm_param(a.params[i].name);
    saw_norm = saw_norm || norm;
    INFO(a.params[i].name);
    CHECK(a.params[i].value.bit_equal(b.params[i].value) == norm);
    CHECK_FALSE(a.params[i].value.bit_equal(c.params[i].value));
  }
  CHECK(saw_norm);
}

TEST_CASE("training is reproducible") {
  const TrainPlan plan(small_mlp(), sgd(0.2), toy_data(32), 8, 10, 5);
  SUBCASE("zero steps returns the initial state") {
    const TrainPlan none(small_mlp(), sgd(0.2), toy_data(32), 8, 0, 5);
    CHECK(train::train(none, none.default_meta()).bit_equal(init_state(none)));
  }
  SUBCASE("two runs agree bit for bit") {
    CHECK(train::train(plan, plan.default_meta()).bit_equal(train::train(plan, plan.default_meta())));
    CHECK(train::train(plan, plan.default_meta()).checksum() == train::train(plan, plan.default_meta()).checksum());
  }
  SUBCASE("save and restore mid-run") {
    std::vector<OptimizerState> states;
    const OptimizerState full = train::train(plan, plan.default_meta(), [&](const OptimizerState& s) { states.push_back(s); });
    REQUIRE(states.size() == 11);
    for (std::size_t t : {0u, 4u, 9u}) {
      OptimizerState s = OptimizerState::from_snapshot(decode_snapshot(encode_snapshot(states[t].to_snapshot())));
      CHECK(s.bit_equal(states[t]));
      while (s.step < plan.steps()) s = step(s, plan, plan.default_meta());
      CHECK(s.bit_equal(full));
    }
  }
  SUBCASE("different seeds differ") {
    CHECK_FALSE(train::train(plan.with_seed(6), plan.default_meta()).bit_equal(train::train(plan, plan.default_meta())));
  }
}

TEST_CASE("zero data weights reproduce plain training exactly") {
  const auto data = toy_data(24);
  for (RuleKind kind : {RuleKind::kSgd, RuleKind::kMomentum, RuleKind::kAdam}) {
    UpdateRule rule = sgd(0.1);
    rule.kind = kind;
    const TrainPlan plain(small_mlp(), rule, data, 6, 8, 2);
    const TrainPlan surrogate = plain.with_meta(DataWeights{data, 5, 1.0});
    CHECK(surrogate.meta_shape() == Shape{24});
    CHECK(train::train(surrogate, surrogate.default_meta()).bit_equal(train::train(plain, plain.default_meta())));
    Tensor z(Shape{24});
    z[3] = 1.0;
    CHECK_FALSE(train::train(surrogate, z).bit_equal(train::train(plain, plain.default_meta())));
  }
}

TEST_CASE("learning-rate keypoints as metaparameter match a fixed schedule") {
  const std::vector<double> kp = {0.3, 0.1, 0.2};
  UpdateRule fixed = sgd(0.1);
  fixed.lr_keypoints = kp;
  const TrainPlan scheduled(small_mlp(), fixed, toy_data(16), 4, 9, 1);
  LearningRate meta;
  meta.keypoints = 3;
  const TrainPlan learned = scheduled.with_rule(sgd(0.1)).with_meta(meta);
  const OptimizerState a = train::train(scheduled, scheduled.default_meta());
  const OptimizerState b = train::train(learned, Tensor::vector(kp));
  const Tensor fa = a.flat_params(), fb = b.flat_params();
  for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fa[i] == doctest::Approx(fb[i]).epsilon(1e-14));
}

TEST_CASE("step is differentiable in state and metaparameter") {
  const auto data = toy_data();
  const auto model = quadratic10(11);
  for (RuleKind kind : {RuleKind::kSgd, RuleKind::kMomentum, RuleKind::kAdam}) {
    INFO(to_string(kind));
    UpdateRule rule = sgd(0.05);
    rule.kind = kind;
    rule.weight_decay = 0.01;
    rule.eps_root = 1e-8;
    LearningRate meta;
    meta.mode = LearningRate::Mode::kPerStep;
    const TrainPlan plan(model, rule, data, 2, 3, 0, meta);
    Rng rng(7);
    Tensor weights(Shape{10});
    for (double& v : weights.data()) v = rng.normal();

    const ad::ScalarBuilder through_z = [&](Tape& tape, Var z) {
      const OptimizerState s0 = init_state(plan);
      std::vector<Var> state;
      for (std::size_t i = 0; i < s0.tensor_count(); ++i) state.push_back(tape.constant(s0.tensor(i)));
      for (std::size_t t = 0; t < plan.steps(); ++t) state = step_on_tape(plan, tape, state, z, t);
      return ad::sum_all(ad::mul(state[0], tape.constant(weights)));
    };
    CHECK(ad::check_gradient(through_z, Tensor::vector({0.05, 0.04, 0.03}), 1e-6).max_rel_err <= 1e-5);

    // Mid-training state so Adam's second moment is away from zero.
    const Tensor z = Tensor::vector({0.05, 0.04, 0.03});
    const OptimizerState mid = step(step(init_state(plan), plan, z), plan, z);
    const ad::ScalarBuilder through_state = [&](Tape& tape, Var theta) {
      std::vector<Var> state{theta};
      for (const auto& a : mid.aux) state.push_back(tape.constant(a.value));
      const std::vector<Var> next = step_on_tape(plan, tape, state, tape.constant(z), 2);
      Var out = ad::sum_all(ad::mul(next[0], tape.constant(weights)));
      for (std::size_t i = 1; i < next.size(); ++i) out = ad::add(out, ad::sum_all(next[i]));
      return out;
    };
    CHECK(ad::check_gradient(through_state, mid.params[0].value, 1e-6).max_rel_err <= 1e-5);
  }
}

TEST_CASE("sample perturbation is differentiable through a network") {
  const auto data = toy_data(12);
  SamplePerturbation meta;
  meta.indices = {1, 4};
  meta.include_labels = true;
  const TrainPlan plan(small_mlp(), sgd(0.3), data, 12, 3, 4, meta);
  CHECK(plan.meta_shape() == Shape{2, 4});
  CHECK(train::train(plan, plan.default_meta())
            .bit_equal(train::train(plan.with_meta(NoMeta{}), Tensor(Shape{0}))));
  OutputFn out;
  out.eval = toy_data(10, 99);
  const ad::ScalarBuilder fn = [&](Tape& tape, Var z) {
    const OptimizerState s0 = init_state(plan);
    std::vector<Var> state;
    for (std::size_t i = 0; i < s0.tensor_count(); ++i) state.push_back(tape.constant(s0.tensor(i)));
    for (std::size_t t = 0; t < plan.steps(); ++t) state = step_on_tape(plan, tape, state, z, t);
    std::vector<Var> params(state.begin(), state.begin() + static_cast<std::ptrdiff_t>(s0.params.size()));
    return output_on_tape(out, plan.model(), tape, params);
  };
  CHECK(ad::check_gradient(fn, plan.default_meta(), 1e-6).max_rel_err <= 1e-5);
}

TEST_CASE("divergence is reported with the step index") {
  const TrainPlan plan(Quadratic::scalar(1, 1), sgd(1e300), toy_data(), 2, 5, 0);
  CHECK_THROWS_AS(train::train(plan, plan.default_meta()), TrainingDiverged);
}

TEST_CASE("update rule validation") {
  UpdateRule r;
  r.lr = 0;
  CHECK_THROWS(r.validate());
  r = UpdateRule{};
  r.lr_keypoints = {0.1};
  CHECK_THROWS(r.validate());
  r = UpdateRule{};
  r.beta2 = 1.0;
  CHECK_THROWS(r.validate());
  CHECK(parse_rule_kind("adam") == RuleKind::kAdam);
  CHECK_THROWS(parse_rule_kind("lion"));
  CHECK_THROWS(TrainPlan(Quadratic::scalar(1, 1), UpdateRule{}, toy_data(), 9, 1, 0));
  CHECK_THROWS(TrainPlan(Quadratic::scalar(1, 1), UpdateRule{}, toy_data(), 2, 3, 0, DataWeights{toy_data(), 3, 1.0}));
}

TEST_CASE("output functions") {
  const auto data = toy_data(10);
  MlpSpec spec;
  spec.hidden = {};
  const auto linear = std::make_shared<const Mlp>(spec);
  const TrainPlan plan(linear, sgd(0.1), data, 2, 1, 0);
  OptimizerState zero = init_state(plan);
  for (auto& p : zero.params) p.value = Tensor(p.value.shape());

  OutputFn acc;
  acc.kind = OutputFn::Kind::kAccuracy;
  acc.eval = data;
  CHECK(evaluate(acc, *linear, zero) == 0.5);

  const OptimizerState trained = train::train(plan, plan.default_meta());
  OutputFn single;
  single.eval = data;
  single.rows = {3};
  CHECK(evaluate(single, *linear, trained) == per_sample_losses(*linear, trained, *data)[3]);

  OutputFn half;
  half.eval = data;
  half.fraction = 0.5;
  half.seed = 4;
  half.round = 2;
  CHECK(half.selected_rows().size() == 5);
  CHECK(evaluate(half, *linear, trained) == evaluate(half, *linear, trained));
  OutputFn other = half;
  other.round = 3;
  CHECK(half.selected_rows() == OutputFn(half).selected_rows());
  CHECK(other.selected_rows() != half.selected_rows());

  OutputFn empty;
  CHECK_THROWS(evaluate(empty, *linear, trained));
}

TEST_CASE("deterministic batches") {
  CHECK(deterministic_batches(3, 4, 2, 1) == deterministic_batches(3, 4, 2, 1));
  CHECK(deterministic_batches(3, 4, 2, 1).size() == 2);
  CHECK(deterministic_batches(3, 10, 3, 2).size() == 6);
  std::set<std::vector<Batch>> distinct;
  for (std::uint64_t seed = 0; seed < 100; ++seed) distinct.insert(deterministic_batches(seed, 10, 10, 1));
  CHECK(distinct.size() >= 99);
  const auto cycled = batches_for_steps(1, 10, 3, 7);
  CHECK(cycled.size() == 7);
  for (const auto& b : cycled) CHECK(b.size() == 3);
}

TEST_CASE("keypoint learning-rate schedule") {
  const double two[] = {0.0, 1.0};
  CHECK(lr_schedule_value(two, 50, 100) == 0.5);
  const double three[] = {0.1, 0.5, 0.1};
  CHECK(lr_schedule_value(three, 25, 100) == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(lr_schedule_value(three, 0, 100) == 0.1);
  CHECK(lr_schedule_value(three, 50, 100) == 0.5);
  CHECK(lr_schedule_value(three, 100, 100) == 0.1);
  const auto w = keypoint_weights(3, 75, 100);
  CHECK(w.lower == 1);
  CHECK(w.frac == 0.5);
}
