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

#include "mgd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "mgd/rng.hpp"

namespace mgd::train {
namespace {

constexpr const char* kParamPrefix = "param/";
constexpr const char* kAuxPrefix = "aux/";

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

Tensor rows_of(const Tensor& m, std::span<const std::size_t> rows) {
  const std::size_t cols = m.cols();
  Tensor out(Shape{rows.size(), cols});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(m.data().data() + rows[r] * cols, cols, out.data().data() + r * cols);
  }
  return out;
}

// 0/1 matrix picking columns [first, first + count) out of `total`.
Tensor column_selector(std::size_t total, std::size_t first, std::size_t count) {
  Tensor s(Shape{total, count});
  for (std::size_t j = 0; j < count; ++j) s.at(first + j, j) = 1.0;
  return s;
}

std::shared_ptr<const std::vector<std::ptrdiff_t>> single_index(std::size_t i) {
  return std::make_shared<const std::vector<std::ptrdiff_t>>(1, static_cast<std::ptrdiff_t>(i));
}

struct BatchVars {
  Var features;
  Var labels;
};

BatchVars build_batch(const TrainPlan& plan, Tape& tape, Var z, std::size_t t) {
  const data::Dataset& ds = plan.train_set();
  const Batch& rows = plan.batches().at(t);
  Tensor x = rows_of(ds.features, rows);
  Tensor y = rows_of(ds.labels, rows);
  const auto* sp = std::get_if<SamplePerturbation>(&plan.meta());
  if (sp == nullptr) return {tape.constant(std::move(x)), tape.constant(std::move(y))};

  std::unordered_map<std::size_t, std::ptrdiff_t> slot;
  for (std::size_t j = 0; j < sp->indices.size(); ++j) slot.emplace(sp->indices[j], static_cast<std::ptrdiff_t>(j));
  auto map = std::make_shared<std::vector<std::ptrdiff_t>>(rows.size(), -1);
  bool hit = false;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto it = slot.find(rows[r]);
    if (it == slot.end()) continue;
    (*map)[r] = it->second;
    hit = true;
    // Perturbed rows come entirely from z.
    std::fill_n(x.data().data() + r * x.cols(), x.cols(), 0.0);
    if (sp->include_labels) std::fill_n(y.data().data() + r * y.cols(), y.cols(), 0.0);
  }
  if (!hit) return {tape.constant(std::move(x)), tape.constant(std::move(y))};

  const Var picked = ad::gather_rows(z, map);
  const std::size_t d = ds.feature_dim(), c = ds.label_dim();
  if (!sp->include_labels) return {ad::add(tape.constant(std::move(x)), picked), tape.constant(std::move(y))};
  const Var px = ad::matmul(picked, tape.constant(column_selector(d + c, 0, d)));
  const Var py = ad::matmul(picked, tape.constant(column_selector(d + c, d, c)));
  return {ad::add(tape.constant(std::move(x)), px), ad::add(tape.constant(std::move(y)), py)};
}

Var learning_rate(const TrainPlan& plan, Tape& tape, Var z, std::size_t t) {
  const UpdateRule& rule = plan.rule();
  const std::size_t T = plan.steps();
  if (const auto* lr = std::get_if<LearningRate>(&plan.meta())) {
    switch (lr->mode) {
      case LearningRate::Mode::kConstant:
        return z;
      case LearningRate::Mode::kPerStep:
        return ad::gather_rows(ad::reshape(z, Shape{T, 1}), single_index(t));
      case LearningRate::Mode::kKeypoints: {
        const std::size_t k = lr->keypoints;
        const KeypointWeights w = keypoint_weights(k, t, T);
        const Var column = ad::reshape(z, Shape{k, 1});
        const Var lower = ad::gather_rows(column, single_index(w.lower));
        if (w.frac == 0.0) return lower;
        const Var upper = ad::gather_rows(column, single_index(w.lower + 1));
        if (w.frac == 1.0) return upper;
        return ad::add(ad::scale(lower, 1.0 - w.frac), ad::scale(upper, w.frac));
      }
    }
  }
  const double value = rule.lr_keypoints.empty() ? rule.lr : lr_schedule_value(rule.lr_keypoints, t, T);
  return tape.constant(Tensor::scalar(value));
}

}  // namespace

const Tensor& OptimizerState::tensor(std::size_t i) const {
  return i < params.size() ? params[i].value : aux.at(i - params.size()).value;
}

Tensor& OptimizerState::tensor(std::size_t i) {
  return i < params.size() ? params[i].value : aux.at(i - params.size()).value;
}

Tensor OptimizerState::flat_params() const {
  std::vector<double> flat;
  for (const auto& p : params) flat.insert(flat.end(), p.value.data().begin(), p.value.data().end());
  return Tensor::vector(std::move(flat));
}

bool OptimizerState::bit_equal(const OptimizerState& other) const {
  if (step != other.step || tensor_count() != other.tensor_count()) return false;
  for (std::size_t i = 0; i < tensor_count(); ++i) {
    if (!tensor(i).bit_equal(other.tensor(i))) return false;
  }
  return true;
}

std::uint64_t OptimizerState::checksum() const {
  std::uint64_t h = fnv1a(std::as_bytes(std::span<const std::uint64_t>(&step, 1)));
  for (std::size_t i = 0; i < tensor_count(); ++i) h = fnv1a(std::as_bytes(tensor(i).data()), h);
  return h;
}

Snapshot OptimizerState::to_snapshot() const {
  Snapshot snap;
  snap.step = step;
  for (const auto& p : params) snap.tensors.push_back({kParamPrefix + p.name, p.value});
  for (const auto& a : aux) snap.tensors.push_back({kAuxPrefix + a.name, a.value});
  return snap;
}

OptimizerState OptimizerState::from_snapshot(const Snapshot& snap) {
  OptimizerState s;
  s.step = snap.step;
  const std::string param_prefix = kParamPrefix, aux_prefix = kAuxPrefix;
  for (const auto& t : snap.tensors) {
    if (t.name.rfind(param_prefix, 0) == 0) {
      s.params.push_back({t.name.substr(param_prefix.size()), t.value});
    } else if (t.name.rfind(aux_prefix, 0) == 0) {
      s.aux.push_back({t.name.substr(aux_prefix.size()), t.value});
    } else {
      throw SnapshotError("unexpected tensor '" + t.name + "' in optimizer state snapshot");
    }
  }
  return s;
}

std::string to_string(RuleKind kind) {
  switch (kind) {
    case RuleKind::kSgd:
      return "sgd";
    case RuleKind::kMomentum:
      return "momentum";
    case RuleKind::kAdam:
      return "adam";
  }
  return "sgd";
}

RuleKind parse_rule_kind(const std::string& s) {
  if (s == "sgd") return RuleKind::kSgd;
  if (s == "momentum") return RuleKind::kMomentum;
  if (s == "adam") return RuleKind::kAdam;
  throw std::invalid_argument("unknown update rule '" + s + "' (expected sgd|momentum|adam)");
}

void UpdateRule::validate() const {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be > 0");
  if (!lr_keypoints.empty()) {
    if (lr_keypoints.size() < 2) throw std::invalid_argument("learning-rate keypoints need k >= 2");
    for (double v : lr_keypoints) {
      if (!(v > 0.0)) throw std::invalid_argument("learning-rate keypoints must be > 0");
    }
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw std::invalid_argument("momentum must be in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight decay must be >= 0");
  if (!(eps >= 0.0)) throw std::invalid_argument("eps must be >= 0");
  if (!(eps_root >= 0.0)) throw std::invalid_argument("eps_root must be >= 0");
}

std::string metaparam_name(const Metaparam& meta) {
  return std::visit(Overloaded{[](const NoMeta&) { return std::string("none"); },
                               [](const DataWeights&) { return std::string("data-weights"); },
                               [](const SamplePerturbation&) { return std::string("sample-perturbation"); },
                               [](const LearningRate& lr) {
                                 switch (lr.mode) {
                                   case LearningRate::Mode::kConstant:
                                     return std::string("lr-constant");
                                   case LearningRate::Mode::kPerStep:
                                     return std::string("lr-per-step");
                                   case LearningRate::Mode::kKeypoints:
                                     break;
                                 }
                                 return std::string("lr-keypoints");
                               }},
                    meta);
}

TrainPlan::TrainPlan(std::shared_ptr<const Model> model, UpdateRule rule, std::shared_ptr<const data::Dataset> train,
                     std::size_t batch_size, std::size_t steps, std::uint64_t seed, Metaparam meta,
                     ad::Precision precision)
    : model_(std::move(model)),
      rule_(std::move(rule)),
      train_(std::move(train)),
      batch_size_(batch_size),
      steps_(steps),
      seed_(seed),
      meta_(std::move(meta)),
      precision_(precision) {
  if (!model_ || !train_) throw std::invalid_argument("train plan needs a model and a dataset");
  rule_.validate();
  if (batch_size_ == 0 || batch_size_ > train_->size()) throw std::invalid_argument("batch size must be in [1, n]");
  const std::size_t n = train_->size();
  std::visit(Overloaded{[](const NoMeta&) {},
                        [&](const DataWeights& w) {
                          if (!w.pool || w.pool->size() == 0) throw std::invalid_argument("data weights need a pool");
                          if (steps_ > 0 && w.iteration >= steps_) {
                            throw std::invalid_argument("surrogate iteration must be < T");
                          }
                        },
                        [&](const SamplePerturbation& sp) {
                          if (sp.indices.empty()) throw std::invalid_argument("sample perturbation needs rows");
                          std::vector<std::size_t> sorted = sp.indices;
                          std::sort(sorted.begin(), sorted.end());
                          if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
                            throw std::invalid_argument("perturbed rows must be distinct");
                          }
                          if (sorted.back() >= n) throw std::invalid_argument("perturbed row out of range");
                        },
                        [&](const LearningRate& lr) {
                          if (lr.mode == LearningRate::Mode::kKeypoints && lr.keypoints < 2) {
                            throw std::invalid_argument("learning-rate keypoints need k >= 2");
                          }
                        }},
             meta_);
  batches_ = batches_for_steps(seed_, n, batch_size_, steps_);
}

Shape TrainPlan::meta_shape() const {
  return std::visit(
      Overloaded{[](const NoMeta&) { return Shape{0}; },
                 [](const DataWeights& w) { return Shape{w.pool->size()}; },
                 [&](const SamplePerturbation& sp) {
                   const std::size_t width = train_->feature_dim() + (sp.include_labels ? train_->label_dim() : 0);
                   return Shape{sp.indices.size(), width};
                 },
                 [&](const LearningRate& lr) {
                   switch (lr.mode) {
                     case LearningRate::Mode::kConstant:
                       return Shape{1};
                     case LearningRate::Mode::kPerStep:
                       return Shape{steps_};
                     case LearningRate::Mode::kKeypoints:
                       break;
                   }
                   return Shape{lr.keypoints};
                 }},
      meta_);
}

Tensor TrainPlan::default_meta() const {
  Tensor z(meta_shape());
  if (const auto* sp = std::get_if<SamplePerturbation>(&meta_)) {
    const std::size_t d = train_->feature_dim(), c = train_->label_dim();
    for (std::size_t j = 0; j < sp->indices.size(); ++j) {
      for (std::size_t f = 0; f < d; ++f) z.at(j, f) = train_->features.at(sp->indices[j], f);
      if (sp->include_labels) {
        for (std::size_t f = 0; f < c; ++f) z.at(j, d + f) = train_->labels.at(sp->indices[j], f);
      }
    }
  } else if (std::holds_alternative<LearningRate>(meta_)) {
    for (double& v : z.data()) v = rule_.lr;
  }
  return z;
}

void TrainPlan::check_meta(const Tensor& z) const {
  if (z.shape() != meta_shape()) {
    throw ShapeError("metaparameter has shape " + shape_string(z.shape()) + ", plan expects " +
                     shape_string(meta_shape()));
  }
}

TrainPlan TrainPlan::with_meta(Metaparam meta) const {
  return TrainPlan(model_, rule_, train_, batch_size_, steps_, seed_, std::move(meta), precision_);
}

TrainPlan TrainPlan::with_seed(std::uint64_t seed) const {
  return TrainPlan(model_, rule_, train_, batch_size_, steps_, seed, meta_, precision_);
}

TrainPlan TrainPlan::with_rule(UpdateRule rule) const {
  return TrainPlan(model_, std::move(rule), train_, batch_size_, steps_, seed_, meta_, precision_);
}

OptimizerState init_state(const TrainPlan& plan) {
  OptimizerState s;
  s.params = plan.model().init(plan.seed());
  auto zeros = [&](const std::string& prefix) {
    for (const auto& p : s.params) s.aux.push_back({prefix + p.name, Tensor(p.value.shape())});
  };
  switch (plan.rule().kind) {
    case RuleKind::kSgd:
      break;
    case RuleKind::kMomentum:
      zeros("buf/");
      break;
    case RuleKind::kAdam:
      zeros("m/");
      zeros("v/");
      break;
  }
  return s;
}

std::vector<Var> step_on_tape(const TrainPlan& plan, Tape& tape, std::span<const Var> state, Var z, std::size_t t) {
  const Model& model = plan.model();
  const UpdateRule& rule = plan.rule();
  const std::vector<std::string> names = model.param_names();
  const std::size_t P = names.size();
  const std::span<const Var> params = state.first(P);

  const BatchVars batch = build_batch(plan, tape, z, t);
  Var loss = model.batch_loss(params, batch.features, batch.labels);
  if (const auto* w = std::get_if<DataWeights>(&plan.meta()); w != nullptr && w->iteration == t) {
    const Var pool_losses =
        model.per_sample_loss(params, tape.constant(w->pool->features), tape.constant(w->pool->labels));
    loss = ad::add(loss, ad::scale(ad::sum_all(ad::mul(z, pool_losses)), w->scale));
  }
  const std::vector<Var> grads = ad::grad(loss, params);
  const Var lr = learning_rate(plan, tape, z, t);

  auto apply = [&](std::size_t i, Var direction) {
    const bool decays = rule.weight_decay > 0.0 && (rule.decay_norm_params || !model.is_norm_param(names[i]));
    if (decays) direction = ad::add(direction, ad::scale(params[i], rule.weight_decay));
    return ad::sub(params[i], ad::mul_scalar(direction, lr));
  };

  std::vector<Var> next(state.size());
  switch (rule.kind) {
    case RuleKind::kSgd:
      for (std::size_t i = 0; i < P; ++i) next[i] = apply(i, grads[i]);
      break;
    case RuleKind::kMomentum:
      for (std::size_t i = 0; i < P; ++i) {
        const Var buf = ad::add(ad::scale(state[P + i], rule.momentum), grads[i]);
        next[P + i] = buf;
        next[i] = apply(i, rule.nesterov ? ad::add(grads[i], ad::scale(buf, rule.momentum)) : buf);
      }
      break;
    case RuleKind::kAdam: {
      const double step_count = static_cast<double>(t + 1);
      for (std::size_t i = 0; i < P; ++i) {
        const Var m = ad::add(ad::scale(state[P + i], rule.beta1), ad::scale(grads[i], 1.0 - rule.beta1));
        const Var v = ad::add(ad::scale(state[2 * P + i], rule.beta2), ad::scale(ad::square(grads[i]), 1.0 - rule.beta2));
        next[P + i] = m;
        next[2 * P + i] = v;
        Var m_hat = m, v_hat = v;
        if (rule.bias_correction) {
          m_hat = ad::scale(m, 1.0 / (1.0 - std::pow(rule.beta1, step_count)));
          v_hat = ad::scale(v, 1.0 / (1.0 - std::pow(rule.beta2, step_count)));
        }
        const Var denom = ad::add_const(ad::sqrt(ad::add_const(v_hat, rule.eps_root)), rule.eps);
        next[i] = apply(i, ad::div(m_hat, denom));
      }
      break;
    }
  }
  return next;
}

OptimizerState step(const OptimizerState& state, const TrainPlan& plan, const Tensor& z) {
  if (state.step >= plan.steps()) throw std::logic_error("step called past the end of training");
  const std::size_t t = static_cast<std::size_t>(state.step);
  try {
    Tape tape(plan.precision());
    std::vector<Var> vars;
    for (std::size_t i = 0; i < state.tensor_count(); ++i) vars.push_back(tape.variable(state.tensor(i)));
    const Var zv = z.size() == 0 ? tape.constant(z) : tape.variable(z);
    const std::vector<Var> next = step_on_tape(plan, tape, vars, zv, t);
    OptimizerState out = state;
    out.step = state.step + 1;
    for (std::size_t i = 0; i < next.size(); ++i) out.tensor(i) = next[i].value();
    return out;
  } catch (const TrainingDiverged&) {
    throw;
  } catch (const NumericalError& e) {
    throw TrainingDiverged(t, e.what());
  }
}

OptimizerState train(const TrainPlan& plan, const Tensor& z, const std::function<void(const OptimizerState&)>& observer) {
  plan.check_meta(z);
  OptimizerState state = init_state(plan);
  if (observer) observer(state);
  for (std::size_t t = 0; t < plan.steps(); ++t) {
    state = step(state, plan, z);
    if (observer) observer(state);
  }
  return state;
}

std::vector<std::size_t> OutputFn::selected_rows() const {
  if (!eval || eval->size() == 0) throw std::invalid_argument("output function has an empty evaluation set");
  if (!rows.empty()) return rows;
  const std::size_t n = eval->size();
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("minibatch fraction must be in (0, 1]");
  std::vector<std::size_t> out;
  if (fraction >= 1.0) {
    out.resize(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = i;
    return out;
  }
  const auto count = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n))));
  const std::vector<std::size_t> perm = Rng::stream(seed, "output-subset", round).permutation(n);
  out.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.begin(), out.end());
  return out;
}

Var output_on_tape(const OutputFn& output, const Model& model, Tape& tape, std::span<const Var> params) {
  const std::vector<std::size_t> rows = output.selected_rows();
  const Var x = tape.constant(rows_of(output.eval->features, rows));
  const Var y = tape.constant(rows_of(output.eval->labels, rows));
  if (output.kind == OutputFn::Kind::kMeanLoss) return model.batch_loss(params, x, y);

  if (output.eval->regression) throw std::invalid_argument("accuracy is undefined for regression targets");
  const Tensor scores = model.predict(params, x).value();
  std::size_t correct = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < scores.cols(); ++j) {
      if (scores.at(r, j) > scores.at(r, best)) best = j;
    }
    if (best == output.eval->label_of(rows[r])) ++correct;
  }
  return tape.constant(Tensor::scalar(static_cast<double>(correct) / static_cast<double>(rows.size())));
}

double evaluate(const OutputFn& output, const Model& model, const OptimizerState& state) {
  Tape tape;
  std::vector<Var> params;
  for (const auto& p : state.params) params.push_back(tape.constant(p.value));
  return output_on_tape(output, model, tape, params).value().item();
}

Tensor per_sample_losses(const Model& model, const OptimizerState& state, const data::Dataset& ds) {
  Tape tape;
  std::vector<Var> params;
  for (const auto& p : state.params) params.push_back(tape.constant(p.value));
  return model.per_sample_loss(params, tape.constant(ds.features), tape.constant(ds.labels)).value();
}

}  // namespace mgd::train
