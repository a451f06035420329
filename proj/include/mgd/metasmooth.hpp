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
#include <vector>

#include "mgd/trainer.hpp"

namespace mgd::smooth {

/// A training function f(z) = phi(A(z)).
using ScalarFn = std::function<double(const Tensor&)>;
/// A learning algorithm z -> flattened trained parameters.
using AlgoFn = std::function<Tensor(const Tensor&)>;

/// (f(z + h v) - f(z)) / h.
double directional_delta(const ScalarFn& f, const Tensor& z, const Tensor& v, double h);

/// Where and along which direction smoothness is probed.
struct SmoothnessProbe {
  double h = 1e-3;
  Tensor v;  // unit norm, same shape as z0
  Tensor z0;

  /// Throws std::invalid_argument unless h > 0, shapes match and |v| = 1.
  void validate() const;
};

/// Probe at z0 along a seeded random unit direction. Without an explicit
/// step, h = 1e-3 * (max|z0| + 1).
SmoothnessProbe make_probe(const Tensor& z0, std::uint64_t seed, std::optional<double> h = {});
/// Probe along a given direction, normalized here.
SmoothnessProbe make_probe(const Tensor& z0, Tensor direction, double h);

/// |delta(z + h v) - delta(z)| / h from exactly three evaluations of f.
double metasmoothness_S(const ScalarFn& f, const SmoothnessProbe& probe);

struct SmoothnessReport {
  /// Curvature proxy; only filled when an output function is supplied.
  std::optional<double> S;
  /// Range-weighted sign agreement in [-1, 1]; 0 when degenerate.
  double S_hat = 0.0;
  double d_l1 = 0.0;
  bool degenerate = false;
  std::size_t algorithm_calls = 0;
};

/// Sign agreement of consecutive parameter deltas along the probe, from
/// exactly three runs of the algorithm at z0, z0 + h v and z0 + 2 h v. Each
/// coordinate is weighted by its range |theta_2h - theta_0| normalized to
/// sum to one. `phi`, if set, also yields S from the same three runs.
SmoothnessReport empirical_metasmoothness(const AlgoFn& algo, const SmoothnessProbe& probe,
                                          const std::function<double(const Tensor&)>& phi = {});

/// sum_i w_i sign(a_i) sign(b_i) with w = d / |d|_1; the core of the above.
SmoothnessReport sign_agreement(const Tensor& theta0, const Tensor& theta_h, const Tensor& theta_2h);

/// One model/training configuration of a smoothness scan.
struct ScanConfig {
  std::size_t width = 16;
  std::size_t batch_size = 16;
  train::NormPlacement norm = train::NormPlacement::kBefore;
  double final_scale = 0.125;
  train::Pooling pooling = train::Pooling::kAvg;
  train::Activation activation = train::Activation::kGelu;
  std::uint64_t seed = 0;
};

/// Everything a scan holds fixed across configurations.
struct ScanSetup {
  std::shared_ptr<const data::Dataset> train;
  std::shared_ptr<const data::Dataset> eval;
  train::UpdateRule rule;
  std::size_t steps = 64;
  /// The metaparameter perturbs the features of the first rows of the training set.
  std::size_t perturbed_rows = 16;
  std::size_t probes = 1;
  std::optional<double> h;
  ad::Precision precision = ad::Precision::kF64;
};

struct ScanRow {
  std::size_t config_id = 0;
  ScanConfig config;
  double h = 0.0;
  /// Mean over probes.
  double S_hat = 0.0;
  /// Max minus min over probes.
  double S_hat_spread = 0.0;
  /// Accuracy of the unperturbed run on the eval set.
  double eval_metric = 0.0;
  bool degenerate = false;
  /// "ok", or the failure that stopped this configuration.
  std::string status = "ok";
};

/// Training plan of one scan configuration (before the probe).
train::TrainPlan scan_plan(const ScanConfig& config, const ScanSetup& setup);

/// Probes every configuration; a failing configuration yields a row with
/// its status set and the scan moves on.
std::vector<ScanRow> smoothness_scan(std::span<const ScanConfig> configs, const ScanSetup& setup);

/// The 8-config grid: {smooth, non-smooth} x {width w, 2w} x {batch b, 2b}.
/// Smooth means normalization before the activation and output scale 0.125;
/// non-smooth means normalization after it and output scale 1.
std::vector<ScanConfig> default_grid(std::size_t width, std::size_t batch_size, std::uint64_t seed);
bool is_smooth_config(const ScanConfig& config);

}  // namespace mgd::smooth
