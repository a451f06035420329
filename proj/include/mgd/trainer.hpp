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
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "mgd/autodiff.hpp"
#include "mgd/dataset.hpp"
#include "mgd/model.hpp"
#include "mgd/schedule.hpp"
#include "mgd/snapshot.hpp"

namespace mgd::train {

/// Raised when a training step produces a non-finite value.
class TrainingDiverged : public NumericalError {
 public:
  TrainingDiverged(std::size_t step, const std::string& what)
      : NumericalError("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  std::size_t step() const { return step_; }

 private:
  std::size_t step_;
};

/// Parameters plus optimizer auxiliaries (momentum buffer, Adam moments).
/// `tensor(i)` enumerates params first, then aux, in a fixed order.
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> aux;

  std::size_t tensor_count() const { return params.size() + aux.size(); }
  const Tensor& tensor(std::size_t i) const;
  Tensor& tensor(std::size_t i);
  /// All parameters concatenated in name-sorted order.
  Tensor flat_params() const;
  bool bit_equal(const OptimizerState& other) const;
  std::uint64_t checksum() const;

  Snapshot to_snapshot() const;
  static OptimizerState from_snapshot(const Snapshot& snap);
};

enum class RuleKind { kSgd, kMomentum, kAdam };
std::string to_string(RuleKind kind);
RuleKind parse_rule_kind(const std::string& s);

struct UpdateRule {
  RuleKind kind = RuleKind::kSgd;
  /// Constant learning rate, used unless `lr_keypoints` is set or the
  /// learning rate is the metaparameter.
  double lr = 0.1;
  /// Fixed piecewise-linear schedule (k >= 2 values) when non-empty.
  std::vector<double> lr_keypoints;
  double momentum = 0.9;
  bool nesterov = false;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 0.0;
  bool decay_norm_params = false;
  double eps = 1e-8;
  /// Added under the square root of Adam's second moment.
  double eps_root = 1e-12;
  bool bias_correction = false;

  void validate() const;
};

/// No metaparameter: z is ignored (an empty tensor).
struct NoMeta {};

/// Per-sample weights over `pool`; at step `iteration` the batch loss gains
/// scale * sum_i z_i * loss(pool_i).
struct DataWeights {
  std::shared_ptr<const data::Dataset> pool;
  std::size_t iteration = 0;
  double scale = 1.0;
};

/// Training rows `indices` are replaced by rows of z. Without labels z is
/// [rows, d]; with labels it is [rows, d + c] (features then label mass).
struct SamplePerturbation {
  std::vector<std::size_t> indices;
  bool include_labels = false;
};

/// The learning rate itself: one constant, one value per step, or keypoints.
struct LearningRate {
  enum class Mode { kConstant, kPerStep, kKeypoints };
  Mode mode = Mode::kKeypoints;
  std::size_t keypoints = 5;
};

using Metaparam = std::variant<NoMeta, DataWeights, SamplePerturbation, LearningRate>;
std::string metaparam_name(const Metaparam& meta);

/// Frozen training setup. Batch order is fixed at construction.
class TrainPlan {
 public:
  TrainPlan(std::shared_ptr<const Model> model, UpdateRule rule, std::shared_ptr<const data::Dataset> train,
            std::size_t batch_size, std::size_t steps, std::uint64_t seed, Metaparam meta = NoMeta{},
            ad::Precision precision = ad::Precision::kF64);

  const Model& model() const { return *model_; }
  std::shared_ptr<const Model> model_ptr() const { return model_; }
  const UpdateRule& rule() const { return rule_; }
  const data::Dataset& train_set() const { return *train_; }
  std::shared_ptr<const data::Dataset> train_ptr() const { return train_; }
  std::size_t batch_size() const { return batch_size_; }
  std::size_t steps() const { return steps_; }
  std::uint64_t seed() const { return seed_; }
  const Metaparam& meta() const { return meta_; }
  ad::Precision precision() const { return precision_; }
  const std::vector<Batch>& batches() const { return batches_; }

  /// Shape z must have for this plan.
  Shape meta_shape() const;
  /// Natural starting point: zero weights, the unperturbed rows, or the
  /// rule's constant learning rate.
  Tensor default_meta() const;
  void check_meta(const Tensor& z) const;

  /// Same setup with a different metaparameter slot, seed or step count.
  TrainPlan with_meta(Metaparam meta) const;
  TrainPlan with_seed(std::uint64_t seed) const;
  TrainPlan with_rule(UpdateRule rule) const;

 private:
  std::shared_ptr<const Model> model_;
  UpdateRule rule_;
  std::shared_ptr<const data::Dataset> train_;
  std::size_t batch_size_;
  std::size_t steps_;
  std::uint64_t seed_;
  Metaparam meta_;
  ad::Precision precision_;
  std::vector<Batch> batches_;
};

OptimizerState init_state(const TrainPlan& plan);

/// Records one optimizer step on `tape`. `state` holds vars for every state
/// tensor in `OptimizerState::tensor` order; returns the new state's vars.
/// Training and metagradient replay both go through this function.
std::vector<Var> step_on_tape(const TrainPlan& plan, Tape& tape, std::span<const Var> state, Var z,
                              std::size_t t);

/// Plain evaluation of one step.
OptimizerState step(const OptimizerState& state, const TrainPlan& plan, const Tensor& z);

/// s_T after exactly T steps. `observer`, if set, sees every state s_0..s_T.
OptimizerState train(const TrainPlan& plan, const Tensor& z,
                     const std::function<void(const OptimizerState&)>& observer = {});

/// Output function: a scalar summary of a trained model on a fixed set.
struct OutputFn {
  enum class Kind { kMeanLoss, kAccuracy };
  Kind kind = Kind::kMeanLoss;
  std::shared_ptr<const data::Dataset> eval;
  /// Minibatch fraction q; the subset is a pure function of (seed, round).
  double fraction = 1.0;
  std::uint64_t seed = 0;
  std::uint64_t round = 0;
  /// Overrides the fraction-based subset when non-empty.
  std::vector<std::size_t> rows;

  std::vector<std::size_t> selected_rows() const;
};

/// The output recorded on a tape as a function of the parameter vars.
Var output_on_tape(const OutputFn& output, const Model& model, Tape& tape, std::span<const Var> params);

double evaluate(const OutputFn& output, const Model& model, const OptimizerState& state);

/// Per-sample losses of `state` on all rows of `ds`.
Tensor per_sample_losses(const Model& model, const OptimizerState& state, const data::Dataset& ds);

}  // namespace mgd::train
