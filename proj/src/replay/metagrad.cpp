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

#include "mgd/replay.hpp"

namespace mgd::replay {
namespace {

using ad::Tape;
using ad::Var;

void check_plan(const train::TrainPlan& plan, const train::OutputFn& output) {
  if (plan.rule().kind == train::RuleKind::kAdam && !(plan.rule().eps_root > 0.0)) {
    throw std::invalid_argument("metagradients through Adam need eps_root > 0");
  }
  if (output.kind != train::OutputFn::Kind::kMeanLoss) {
    throw std::invalid_argument("metagradients need a differentiable output (mean loss)");
  }
}

bool all_finite(std::span<const Tensor> ts) {
  return std::all_of(ts.begin(), ts.end(), [](const Tensor& t) { return t.all_finite(); });
}

// Returns true if any entry was clipped.
bool clip(Tensor& t, double bound) {
  bool touched = false;
  for (double& v : t.data()) {
    if (std::isnan(v)) {
      v = 0.0;
      touched = true;
    } else if (v > bound || v < -bound) {
      v = v > 0 ? bound : -bound;
      touched = true;
    }
  }
  return touched;
}

// Shared backward driver: fed s_T first, then s_{T-1} .. s_0.
class Backward {
 public:
  Backward(const train::TrainPlan& plan, const Tensor& z, const train::OutputFn& output, const MetagradOptions& options,
           MetagradReport& report)
      : plan_(plan), z_(z), output_(output), options_(options), report_(report) {
    report_.zbar = Tensor(z.shape());
    if (options_.keep_contributions) report_.contributions.assign(plan.steps(), Tensor());
  }

  void operator()(std::size_t index, const OptimizerState& state) {
    const std::size_t T = plan_.steps();
    if (index == T) {
      auto [cot, value] = terminal_cotangent(plan_, output_, state);
      report_.output_value = value;
      cot_ = std::move(cot);
      guard(T, cot_);
      return;
    }
    Cotangent c;
    try {
      c = backward_step(plan_, state, z_, cot_);
    } catch (const NumericalError& e) {
      throw NumericalError("non-finite cotangent at step " + std::to_string(index) + ": " + e.what());
    }
    cot_ = std::move(c.state);
    std::vector<Tensor> meta_only{c.meta};
    guard(index, cot_);
    guard(index, meta_only);
    c.meta = std::move(meta_only[0]);
    auto acc = report_.zbar.data();
    const auto add = c.meta.data();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += add[i];
    if (options_.keep_contributions) report_.contributions[index] = std::move(c.meta);
    ++report_.backward_steps;
  }

 private:
  void guard(std::size_t index, std::vector<Tensor>& cot) {
    if (options_.overflow == MetagradOptions::Overflow::kClip) {
      bool touched = false;
      for (Tensor& t : cot) touched = clip(t, options_.clip_value) || touched;
      if (touched) ++report_.clipped_steps;
      return;
    }
    if (!all_finite(cot)) throw NumericalError("non-finite cotangent at step " + std::to_string(index));
  }

  const train::TrainPlan& plan_;
  const Tensor& z_;
  const train::OutputFn& output_;
  const MetagradOptions& options_;
  MetagradReport& report_;
  std::vector<Tensor> cot_;
};

}  // namespace

double MetagradReport::equivalent_trainings(std::size_t steps) const {
  if (steps == 0) return 0.0;
  return static_cast<double>(forward_steps + replayed_steps) / static_cast<double>(steps);
}

std::pair<std::vector<Tensor>, double> terminal_cotangent(const train::TrainPlan& plan, const train::OutputFn& output,
                                                          const OptimizerState& final_state) {
  Tape tape(plan.precision());
  std::vector<Var> params;
  for (const auto& p : final_state.params) params.push_back(tape.variable(p.value));
  const Var phi = train::output_on_tape(output, plan.model(), tape, params);
  const std::vector<Var> grads = ad::grad(phi, params);
  std::vector<Tensor> cot;
  for (const Var& g : grads) cot.push_back(g.value());
  for (const auto& a : final_state.aux) cot.emplace_back(a.value.shape());
  return {std::move(cot), phi.value().item()};
}

Cotangent backward_step(const train::TrainPlan& plan, const OptimizerState& state, const Tensor& z,
                        std::span<const Tensor> next_cotangent) {
  Tape tape(plan.precision());
  std::vector<Var> inputs;
  for (std::size_t i = 0; i < state.tensor_count(); ++i) inputs.push_back(tape.variable(state.tensor(i)));
  const Var zv = tape.variable(z);
  const std::vector<Var> next = train::step_on_tape(plan, tape, inputs, zv, static_cast<std::size_t>(state.step));
  if (next.size() != next_cotangent.size()) throw ShapeError("cotangent count does not match the state");
  std::vector<Var> cots;
  for (const Tensor& c : next_cotangent) cots.push_back(tape.constant(c));
  inputs.push_back(zv);
  const std::vector<Var> pulled = ad::vjp(next, cots, inputs);
  Cotangent out;
  for (std::size_t i = 0; i + 1 < pulled.size(); ++i) out.state.push_back(pulled[i].value());
  out.meta = pulled.back().value();
  return out;
}

MetagradReport metagrad_stepwise(const train::TrainPlan& plan, const Tensor& z, const train::OutputFn& output,
                                 const MetagradOptions& options) {
  check_plan(plan, output);
  plan.check_meta(z);
  std::vector<OptimizerState> states;
  states.reserve(plan.steps() + 1);
  train::train(plan, z, [&](const OptimizerState& s) { states.push_back(s); });

  MetagradReport report;
  report.forward_steps = plan.steps();
  report.peak_live_states = states.size();
  Backward backward(plan, z, output, options, report);
  for (std::size_t i = states.size(); i-- > 0;) backward(i, states[i]);
  return report;
}

MetagradReport metagrad_replay(const train::TrainPlan& plan, const Tensor& z, const train::OutputFn& output,
                               std::size_t k, const MetagradOptions& options) {
  check_plan(plan, output);
  plan.check_meta(z);
  if (k < 2) throw std::invalid_argument("tree arity must be >= 2");

  std::vector<bool> executed(plan.steps() + 1, false);
  Advance advance = [&](const OptimizerState& s, std::size_t index) {
    OptimizerState next = train::step(s, plan, z);
    const bool again = executed[index];
    executed[index] = true;
    if (options.corrupt_replay && again && !next.params.empty() && next.params[0].value.size() > 0) {
      next.params[0].value[0] = std::nextafter(next.params[0].value[0], 1e300);
    }
    return next;
  };
  CheckpointTree tree(plan.steps() + 1, k, train::init_state(plan), advance, options.tree);

  MetagradReport report;
  report.arity = k;
  report.levels = tree.levels();
  Backward backward(plan, z, output, options, report);
  tree.traverse([&](std::size_t index, const OptimizerState& s) { backward(index, s); });
  report.peak_live_states = tree.stats().peak_live;
  report.replayed_steps = tree.stats().replayed_steps;
  report.forward_steps = tree.stats().forward_steps;
  return report;
}

DirectionalCheck directional_check(const train::TrainPlan& plan, const Tensor& z, const train::OutputFn& output,
                                   const Tensor& zbar, const Tensor& direction, double h) {
  if (direction.size() != z.size() || zbar.size() != z.size()) throw ShapeError("direction does not match z");
  Tensor up = z, down = z;
  DirectionalCheck out;
  for (std::size_t i = 0; i < z.size(); ++i) {
    up[i] += h * direction[i];
    down[i] -= h * direction[i];
    out.analytic += zbar[i] * direction[i];
  }
  const double f_up = train::evaluate(output, plan.model(), train::train(plan, up));
  const double f_down = train::evaluate(output, plan.model(), train::train(plan, down));
  out.numeric = (f_up - f_down) / (2.0 * h);
  const double scale = std::max({std::abs(out.analytic), std::abs(out.numeric), 1e-8});
  out.rel_err = std::abs(out.analytic - out.numeric) / scale;
  return out;
}

}  // namespace mgd::replay
