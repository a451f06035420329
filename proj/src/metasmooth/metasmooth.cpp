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

#include "mgd/metasmooth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "mgd/rng.hpp"

namespace mgd::smooth {
namespace {

Tensor along(const Tensor& z, const Tensor& v, double step) {
  if (z.shape() != v.shape()) throw ShapeError("probe direction does not match the metaparameter shape");
  Tensor out = z;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += step * v[i];
  return out;
}

double finite_or_throw(double value, const char* what) {
  if (!std::isfinite(value)) throw NumericalError(std::string("non-finite ") + what);
  return value;
}

int sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

double directional_delta(const ScalarFn& f, const Tensor& z, const Tensor& v, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite-difference step must be > 0");
  const double base = finite_or_throw(f(z), "training function value");
  const double moved = finite_or_throw(f(along(z, v, h)), "training function value");
  return (moved - base) / h;
}

void SmoothnessProbe::validate() const {
  if (!(h > 0.0)) throw std::invalid_argument("probe step h must be > 0");
  if (v.shape() != z0.shape()) throw ShapeError("probe direction does not match the base point");
  if (std::abs(l2_norm(v) - 1.0) > 1e-12) throw std::invalid_argument("probe direction must have unit norm");
}

SmoothnessProbe make_probe(const Tensor& z0, std::uint64_t seed, std::optional<double> h) {
  if (z0.size() == 0) throw std::invalid_argument("cannot probe an empty metaparameter");
  Rng rng = Rng::stream(seed, "probe-direction");
  Tensor v(z0.shape());
  for (double& x : v.data()) x = rng.normal();
  double scale = 0.0;
  for (double x : z0.data()) scale = std::max(scale, std::abs(x));
  return make_probe(z0, std::move(v), h ? *h : 1e-3 * (scale + 1.0));
}

SmoothnessProbe make_probe(const Tensor& z0, Tensor direction, double h) {
  const double norm = l2_norm(direction);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw std::invalid_argument("probe direction must be nonzero");
  for (double& x : direction.data()) x /= norm;
  SmoothnessProbe probe{h, std::move(direction), z0};
  probe.validate();
  return probe;
}

double metasmoothness_S(const ScalarFn& f, const SmoothnessProbe& probe) {
  probe.validate();
  const double f0 = finite_or_throw(f(probe.z0), "training function value");
  const double f1 = finite_or_throw(f(along(probe.z0, probe.v, probe.h)), "training function value");
  const double f2 = finite_or_throw(f(along(probe.z0, probe.v, 2.0 * probe.h)), "training function value");
  const double first = (f1 - f0) / probe.h;
  const double second = (f2 - f1) / probe.h;
  return std::abs(second - first) / probe.h;
}

SmoothnessReport sign_agreement(const Tensor& theta0, const Tensor& theta_h, const Tensor& theta_2h) {
  if (theta0.size() != theta_h.size() || theta0.size() != theta_2h.size()) {
    throw ShapeError("parameter vectors of the three runs differ in size");
  }
  SmoothnessReport report;
  for (std::size_t i = 0; i < theta0.size(); ++i) report.d_l1 += std::abs(theta_2h[i] - theta0[i]);
  if (!std::isfinite(report.d_l1)) throw NumericalError("non-finite parameter range");
  if (report.d_l1 == 0.0) {
    report.degenerate = true;
    return report;
  }
  // One division at the end keeps full agreement exactly 1.
  double acc = 0.0;
  for (std::size_t i = 0; i < theta0.size(); ++i) {
    acc += std::abs(theta_2h[i] - theta0[i]) * sign(theta_h[i] - theta0[i]) * sign(theta_2h[i] - theta_h[i]);
  }
  report.S_hat = std::clamp(acc / report.d_l1, -1.0, 1.0);
  return report;
}

SmoothnessReport empirical_metasmoothness(const AlgoFn& algo, const SmoothnessProbe& probe,
                                          const std::function<double(const Tensor&)>& phi) {
  probe.validate();
  const Tensor t0 = algo(probe.z0);
  const Tensor t1 = algo(along(probe.z0, probe.v, probe.h));
  const Tensor t2 = algo(along(probe.z0, probe.v, 2.0 * probe.h));
  SmoothnessReport report = sign_agreement(t0, t1, t2);
  report.algorithm_calls = 3;
  if (phi) {
    const double f0 = finite_or_throw(phi(t0), "output value");
    const double f1 = finite_or_throw(phi(t1), "output value");
    const double f2 = finite_or_throw(phi(t2), "output value");
    report.S = std::abs((f2 - f1) / probe.h - (f1 - f0) / probe.h) / probe.h;
  }
  return report;
}

train::TrainPlan scan_plan(const ScanConfig& config, const ScanSetup& setup) {
  if (!setup.train || !setup.eval) throw std::invalid_argument("scan needs training and eval sets");
  train::MlpSpec spec;
  spec.input_dim = setup.train->feature_dim();
  spec.output_dim = setup.train->label_dim();
  spec.hidden = {config.width};
  spec.norm = config.norm;
  spec.final_scale = config.final_scale;
  spec.pooling = config.pooling;
  spec.activation = config.activation;
  train::SamplePerturbation meta;
  meta.indices.resize(std::min(setup.perturbed_rows, setup.train->size()));
  std::iota(meta.indices.begin(), meta.indices.end(), std::size_t{0});
  return train::TrainPlan(std::make_shared<const train::Mlp>(spec), setup.rule, setup.train, config.batch_size,
                          setup.steps, config.seed, meta, setup.precision);
}

std::vector<ScanRow> smoothness_scan(std::span<const ScanConfig> configs, const ScanSetup& setup) {
  if (setup.probes == 0) throw std::invalid_argument("scan needs at least one probe per config");
  std::vector<ScanRow> rows;
  for (std::size_t id = 0; id < configs.size(); ++id) {
    ScanRow row;
    row.config_id = id;
    row.config = configs[id];
    try {
      const train::TrainPlan plan = scan_plan(row.config, setup);
      const Tensor z0 = plan.default_meta();
      train::OutputFn accuracy;
      accuracy.kind = train::OutputFn::Kind::kAccuracy;
      accuracy.eval = setup.eval;
      row.eval_metric = train::evaluate(accuracy, plan.model(), train::train(plan, z0));

      const AlgoFn algo = [&](const Tensor& z) { return train::train(plan, z).flat_params(); };
      double lo = 1.0, hi = -1.0, sum = 0.0;
      for (std::size_t p = 0; p < setup.probes; ++p) {
        const SmoothnessProbe probe = make_probe(z0, derive_seed(row.config.seed, "probe", p), setup.h);
        row.h = probe.h;
        const SmoothnessReport r = empirical_metasmoothness(algo, probe);
        row.degenerate = row.degenerate || r.degenerate;
        sum += r.S_hat;
        lo = std::min(lo, r.S_hat);
        hi = std::max(hi, r.S_hat);
      }
      row.S_hat = sum / static_cast<double>(setup.probes);
      row.S_hat_spread = hi - lo;
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
      row.S_hat = std::nan("");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

bool is_smooth_config(const ScanConfig& config) {
  return config.norm == train::NormPlacement::kBefore && config.final_scale <= 0.125;
}

std::vector<ScanConfig> default_grid(std::size_t width, std::size_t batch_size, std::uint64_t seed) {
  std::vector<ScanConfig> grid;
  for (bool smooth : {true, false}) {
    for (std::size_t w : {width, 2 * width}) {
      for (std::size_t b : {batch_size, 2 * batch_size}) {
        ScanConfig c;
        c.width = w;
        c.batch_size = b;
        c.seed = seed;
        c.norm = smooth ? train::NormPlacement::kBefore : train::NormPlacement::kAfter;
        c.final_scale = smooth ? 0.125 : 1.0;
        grid.push_back(c);
      }
    }
  }
  return grid;
}

}  // namespace mgd::smooth
