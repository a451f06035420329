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

#include "doctest.h"
#include "mgd/metasmooth.hpp"
#include "mgd/replay.hpp"
#include "mgd/rng.hpp"

using namespace mgd;
using namespace mgd::smooth;

namespace {

const Tensor kOne = Tensor::vector({1.0});

SmoothnessProbe scalar_probe(double z, double h) { return make_probe(Tensor::vector({z}), kOne, h); }

std::shared_ptr<const data::Dataset> toy_data(std::size_t n, std::uint64_t seed) {
  data::SyntheticSpec spec;
  spec.n = n;
  spec.seed = seed;
  spec.noise = 0.15;
  return std::make_shared<const data::Dataset>(data::gen_synthetic(spec));
}

ScanSetup toy_setup(std::uint64_t seed) {
  ScanSetup setup;
  setup.train = toy_data(128, 100 + seed);
  setup.eval = toy_data(128, 200 + seed);
  setup.rule.lr = 1.0;
  setup.steps = 64;
  setup.probes = 3;
  return setup;
}

}  // namespace

TEST_CASE("directional deltas") {
  const ScalarFn square = [](const Tensor& z) { return z[0] * z[0]; };
  CHECK(directional_delta(square, Tensor::vector({0.0}), kOne, 0.1) == doctest::Approx(0.1).epsilon(1e-14));
  const ScalarFn linear = [](const Tensor& z) { return 3.0 * z[0] + 1.0; };
  for (double h : {0.5, 0.25, 1e-3}) CHECK(directional_delta(linear, Tensor::vector({2.0}), kOne, h) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK_THROWS(directional_delta(linear, Tensor::vector({2.0}), kOne, 0.0));
  const ScalarFn bad = [](const Tensor&) { return std::nan(""); };
  CHECK_THROWS_AS(directional_delta(bad, Tensor::vector({2.0}), kOne, 0.1), NumericalError);
}

TEST_CASE("curvature proxy S") {
  int calls = 0;
  const ScalarFn cube = [&](const Tensor& z) {
    ++calls;
    return z[0] * z[0] * z[0];
  };
  CHECK(metasmoothness_S(cube, scalar_probe(1.0, 0.1)) == doctest::Approx(6.6).epsilon(1e-12));
  CHECK(calls == 3);

  const ScalarFn linear = [](const Tensor& z) { return -2.0 * z[0] + 0.5; };
  CHECK(metasmoothness_S(linear, scalar_probe(0.75, 0.125)) == 0.0);

  const ScalarFn square = [](const Tensor& z) { return z[0] * z[0]; };
  for (double z : {-1.5, 0.0, 0.25, 3.0}) {
    for (double h : {0.5, 0.125, 0.0078125}) CHECK(metasmoothness_S(square, scalar_probe(z, h)) == 2.0);
  }
}

TEST_CASE("S never exceeds the smoothness constant") {
  // sin has |f''| <= 1 everywhere; a 2-D quadratic with eigenvalues 1 and 3 has beta = 3.
  const ScalarFn wave = [](const Tensor& z) { return std::sin(z[0]); };
  const ScalarFn bowl = [](const Tensor& z) { return 0.5 * z[0] * z[0] + 1.5 * z[1] * z[1]; };
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double h = rng.uniform(1e-3, 0.5);
    CHECK(metasmoothness_S(wave, scalar_probe(rng.uniform(-5, 5), h)) <= 1.0 + 1e-9);
    const auto probe = make_probe(Tensor::vector({rng.normal(), rng.normal()}), rng.next_u64(), h);
    CHECK(metasmoothness_S(bowl, probe) <= 3.0 + 1e-9);
  }
}

TEST_CASE("probes") {
  const Tensor z0 = Tensor::vector({0.5, -2.0, 1.0});
  const SmoothnessProbe p = make_probe(z0, 7);
  CHECK(p.h == doctest::Approx(3e-3).epsilon(1e-15));
  CHECK(std::abs(l2_norm(p.v) - 1.0) <= 1e-12);
  CHECK(make_probe(z0, 7).v.bit_equal(p.v));
  CHECK_FALSE(make_probe(z0, 8).v.bit_equal(p.v));
  CHECK_THROWS(make_probe(z0, Tensor(Shape{3}), 0.1));
  CHECK_THROWS(make_probe(z0, Tensor::vector({1, 0, 0}), -1.0));
  SmoothnessProbe skewed = p;
  skewed.v[0] *= 2.0;
  CHECK_THROWS(skewed.validate());
}

TEST_CASE("sign agreement") {
  SUBCASE("linear algorithms agree everywhere") {
    const AlgoFn linear = [](const Tensor& z) { return Tensor::vector({z[0], 2.0 * z[0]}); };
    for (double h : {1e-3, 0.1, 2.0}) {
      const auto r = empirical_metasmoothness(linear, scalar_probe(0.3, h));
      CHECK(r.S_hat == 1.0);
      CHECK_FALSE(r.degenerate);
      CHECK(r.algorithm_calls == 3);
    }
    Rng rng(5);
    Tensor m(Shape{4, 3});
    for (double& x : m.data()) x = rng.normal();
    const AlgoFn affine = [&](const Tensor& z) {
      Tensor out(Shape{4});
      for (std::size_t i = 0; i < 4; ++i) {
        out[i] = 0.5;
        for (std::size_t j = 0; j < 3; ++j) out[i] += m.at(i, j) * z[j];
      }
      return out;
    };
    CHECK(empirical_metasmoothness(affine, make_probe(Tensor::vector({1, 2, 3}), 4, 0.25)).S_hat == 1.0);
  }
  SUBCASE("constant algorithms are degenerate") {
    const AlgoFn constant = [](const Tensor&) { return Tensor::vector({1.0, 4.0}); };
    const auto r = empirical_metasmoothness(constant, scalar_probe(0.3, 0.1));
    CHECK(r.degenerate);
    CHECK(r.d_l1 == 0.0);
    CHECK(r.S_hat == 0.0);
  }
  SUBCASE("a kink flips the sign") {
    // |z| about 0: the two deltas point opposite ways.
    const AlgoFn kink = [](const Tensor& z) { return Tensor::vector({std::abs(z[0])}); };
    CHECK(empirical_metasmoothness(kink, scalar_probe(-0.1, 0.075)).S_hat == -1.0);
  }
  SUBCASE("S from the same three runs") {
    const AlgoFn linear = [](const Tensor& z) { return Tensor::vector({z[0]}); };
    const auto r = empirical_metasmoothness(linear, scalar_probe(0.5, 0.25), [](const Tensor& t) { return t[0] * t[0]; });
    REQUIRE(r.S.has_value());
    CHECK(*r.S == 2.0);
  }
  SUBCASE("randomized piecewise-linear algorithms stay in range") {
    Rng rng(11);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t p = 1 + rng.index(6);
      std::vector<double> slope_lo(p), slope_hi(p), knot(p);
      for (std::size_t i = 0; i < p; ++i) {
        slope_lo[i] = rng.index(4) == 0 ? 0.0 : rng.normal();
        slope_hi[i] = rng.index(4) == 0 ? 0.0 : rng.normal();
        knot[i] = rng.uniform(-1, 1);
      }
      const AlgoFn algo = [&](const Tensor& z) {
        Tensor out(Shape{p});
        for (std::size_t i = 0; i < p; ++i) {
          const double x = z[0] - knot[i];
          out[i] = x < 0 ? slope_lo[i] * x : slope_hi[i] * x;
        }
        return out;
      };
      const auto r = empirical_metasmoothness(algo, scalar_probe(rng.uniform(-1, 1), rng.uniform(0.01, 0.5)));
      CHECK(r.S_hat >= -1.0);
      CHECK(r.S_hat <= 1.0);
      CHECK(r.degenerate == (r.d_l1 == 0.0));
    }
  }
}

TEST_CASE("finite differences of a toy training function follow the metagradient") {
  ScanSetup setup = toy_setup(0);
  setup.rule.lr = 0.3;
  setup.steps = 16;
  const ScanConfig config;
  const train::TrainPlan plan = scan_plan(config, setup);
  train::OutputFn out;
  out.eval = setup.eval;
  const Tensor z0 = plan.default_meta();
  const Tensor grad = replay::metagrad_replay(plan, z0, out, 4).zbar;
  const SmoothnessProbe probe = make_probe(z0, 21, 1e-5);
  double predicted = 0.0;
  for (std::size_t i = 0; i < grad.size(); ++i) predicted += grad[i] * probe.v[i];
  const ScalarFn f = [&](const Tensor& z) { return train::evaluate(out, plan.model(), train::train(plan, z)); };
  CHECK(directional_delta(f, z0, probe.v, probe.h) == doctest::Approx(predicted).epsilon(1e-3));
}

TEST_CASE("smooth configurations score higher than non-smooth ones") {
  const ScanSetup setup = toy_setup(2);
  const auto grid = default_grid(8, 16, 2);
  REQUIRE(grid.size() == 8);
  const auto rows = smoothness_scan(grid, setup);
  double smooth = 0.0, rough = 0.0;
  for (const auto& row : rows) {
    CHECK(row.status == "ok");
    CHECK(row.S_hat >= -1.0);
    CHECK(row.S_hat <= 1.0);
    (is_smooth_config(row.config) ? smooth : rough) += row.S_hat / 4.0;
  }
  CHECK(smooth > rough);
}

TEST_CASE("scan bookkeeping") {
  ScanSetup setup = toy_setup(1);
  setup.steps = 8;
  setup.probes = 2;
  ScanConfig config;
  config.seed = 3;
  const ScanConfig one[] = {config};
  const auto a = smoothness_scan(one, setup);
  REQUIRE(a.size() == 1);
  const auto b = smoothness_scan(one, setup);
  CHECK(a[0].S_hat == b[0].S_hat);
  CHECK(a[0].eval_metric == b[0].eval_metric);

  ScanConfig broken = config;
  broken.batch_size = 1000;
  ScanConfig odd = config;
  odd.width = 7;
  const ScanConfig mixed[] = {broken, config, odd};
  const auto rows = smoothness_scan(mixed, setup);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].status.rfind("failed", 0) == 0);
  CHECK(rows[1].status == "ok");
  CHECK(rows[1].S_hat == a[0].S_hat);
  CHECK(rows[2].status.rfind("failed", 0) == 0);
}
