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
#include <span>
#include <string>
#include <vector>

#include "mgd/autodiff.hpp"
#include "mgd/snapshot.hpp"

namespace mgd::train {

using ad::Tape;
using ad::Var;

/// A differentiable model family. Parameters are passed as vars in the
/// name-sorted order returned by `param_names`.
class Model {
 public:
  virtual ~Model() = default;

  virtual std::vector<std::string> param_names() const = 0;
  /// Freshly initialized parameters in `param_names` order.
  virtual std::vector<NamedTensor> init(std::uint64_t seed) const = 0;
  /// Per-sample losses, shape [m].
  virtual Var per_sample_loss(std::span<const Var> params, Var features, Var labels) const = 0;
  /// Mean of the per-sample losses unless a model knows better.
  virtual Var batch_loss(std::span<const Var> params, Var features, Var labels) const;
  /// Class scores [m, c]; only meaningful for classifiers.
  virtual Var predict(std::span<const Var> params, Var features) const;
  /// Parameters that belong to normalization layers (weight decay may skip them).
  virtual bool is_norm_param(const std::string& name) const;
  virtual std::string describe() const = 0;
};

enum class Activation { kGelu, kRelu };
enum class NormPlacement { kBefore, kAfter, kNone };
enum class Pooling { kAvg, kMax, kNone };
enum class LossKind { kCrossEntropy, kSquared };

std::string to_string(Activation a);
std::string to_string(NormPlacement p);
std::string to_string(Pooling p);
Activation parse_activation(const std::string& s);
NormPlacement parse_norm_placement(const std::string& s);
Pooling parse_pooling(const std::string& s);

/// Multi-layer perceptron with the knobs that govern metasmoothness:
/// normalization placement, pooling, activation and the output scale.
struct MlpSpec {
  std::size_t input_dim = 2;
  std::size_t output_dim = 2;
  std::vector<std::size_t> hidden = {16};
  Activation activation = Activation::kGelu;
  NormPlacement norm = NormPlacement::kBefore;
  /// Pools adjacent hidden units in pairs, halving the layer width.
  Pooling pooling = Pooling::kAvg;
  double final_scale = 0.125;
  double norm_eps = 1e-5;
  LossKind loss = LossKind::kCrossEntropy;
};

class Mlp final : public Model {
 public:
  explicit Mlp(MlpSpec spec);

  std::vector<std::string> param_names() const override { return names_; }
  std::vector<NamedTensor> init(std::uint64_t seed) const override;
  Var per_sample_loss(std::span<const Var> params, Var features, Var labels) const override;
  Var predict(std::span<const Var> params, Var features) const override;
  bool is_norm_param(const std::string& name) const override;
  std::string describe() const override;

  const MlpSpec& spec() const { return spec_; }
  std::size_t parameter_count() const;

 private:
  struct Layer {
    std::size_t in = 0, out = 0;
    int w = -1, b = -1, gain = -1, shift = -1;  // indices into the sorted params
  };
  Var param(std::span<const Var> params, int index) const { return params[static_cast<std::size_t>(index)]; }

  MlpSpec spec_;
  std::vector<std::string> names_;
  std::vector<Shape> shapes_;
  std::vector<Layer> hidden_;
  Layer head_;
};

/// Data-independent quadratic 0.5 * t'At - b't + c in a single parameter
/// vector named "theta". Used for closed-form checks and schedule search.
class Quadratic final : public Model {
 public:
  Quadratic(Tensor curvature, Tensor linear, double offset = 0.0, Tensor start = {});
  /// 1-D convenience: 0.5 * a t^2 - b t + c, starting at t0.
  static std::shared_ptr<Quadratic> scalar(double a, double b, double c = 0.0, double t0 = 0.0);

  std::vector<std::string> param_names() const override { return {"theta"}; }
  std::vector<NamedTensor> init(std::uint64_t seed) const override;
  Var per_sample_loss(std::span<const Var> params, Var features, Var labels) const override;
  Var batch_loss(std::span<const Var> params, Var features, Var labels) const override;
  std::string describe() const override;

  /// Loss value at a plain parameter vector.
  double value(const Tensor& theta) const;
  const Tensor& curvature() const { return curvature_; }

 private:
  Var objective(Var theta) const;

  Tensor curvature_;  // [p, p]
  Tensor linear_;     // [p]
  double offset_;
  Tensor start_;      // [p]
};

}  // namespace mgd::train
