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

#include "mgd/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mgd/rng.hpp"

namespace mgd::ad {
namespace {

double evaluate(const ScalarBuilder& fn, const Tensor& point) {
  Tape tape;
  const Var out = fn(tape, tape.variable(point));
  if (out.value().size() != 1) throw ShapeError("check_gradient: function output is not scalar");
  return out.value()[0];
}

double rel_err(double analytic, double numeric, double floor) {
  const double diff = std::abs(analytic - numeric);
  if (diff == 0.0) return 0.0;
  return diff / std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace

Tensor gradient(const ScalarBuilder& fn, const Tensor& point) {
  Tape tape;
  const Var x = tape.variable(point);
  const Var out = fn(tape, x);
  const Var wrt[] = {x};
  return grad(out, wrt)[0].value();
}

GradCheckReport check_gradient(const ScalarBuilder& fn, const Tensor& point, double h,
                               const GradCheckOptions& options) {
  if (!(h > 0.0)) throw std::invalid_argument("check_gradient: h must be > 0");
  const Tensor analytic = gradient(fn, point);
  GradCheckReport report;
  report.h = h;

  auto central = [&](const Tensor& direction) {
    Tensor plus = point, minus = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
      plus[i] += h * direction[i];
      minus[i] -= h * direction[i];
    }
    return (evaluate(fn, plus) - evaluate(fn, minus)) / (2.0 * h);
  };

  if (point.size() <= options.max_coordinates) {
    const double floor = std::max(options.floor, options.relative_floor * linf_norm(analytic));
    Tensor e(point.shape());
    for (std::size_t i = 0; i < point.size(); ++i) {
      e[i] = 1.0;
      const double err = rel_err(analytic[i], central(e), floor);
      e[i] = 0.0;
      if (err > report.max_rel_err) {
        report.max_rel_err = err;
        report.worst_coordinate = i;
      }
      ++report.probes;
    }
    return report;
  }

  report.directional = true;
  Rng rng(options.seed);
  for (std::size_t d = 0; d < options.directions; ++d) {
    Tensor v(point.shape());
    for (double& x : v.data()) x = rng.normal();
    const double norm = l2_norm(v);
    for (double& x : v.data()) x /= norm;
    const double err = rel_err(dot(analytic, v), central(v), options.floor);
    if (err > report.max_rel_err) {
      report.max_rel_err = err;
      report.worst_coordinate = d;
    }
    ++report.probes;
  }
  return report;
}

}  // namespace mgd::ad
