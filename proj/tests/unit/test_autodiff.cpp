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
#include <cstdio>

#include "doctest.h"
#include "mgd/autodiff.hpp"
#include "mgd/battery.hpp"
#include "mgd/gradcheck.hpp"
#include "mgd/rng.hpp"

using namespace mgd;
using namespace mgd::ad;

TEST_CASE("forward values of basic ops") {
  Tape tape;
  const Var a = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  const Var eye = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  CHECK(matmul(a, eye).value().bit_equal(Tensor::matrix({{1, 2}, {3, 4}})));
  CHECK(mean_all(tape.constant(Tensor::vector({2, 4, 6}))).value().item() == 4.0);
  CHECK(gelu(tape.constant(Tensor::vector({0.0}))).value()[0] == 0.0);
}

TEST_CASE("gradient of x^2 at 3 is 6") {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({3.0}));
  const Var wrt[] = {x};
  CHECK(grad(sum_all(square(x)), wrt)[0].value()[0] == 6.0);
}

TEST_CASE("second derivative of x^3 at 2 is 12") {
  Tape tape;
  const Var x = tape.variable(Tensor::vector({2.0}));
  const Var wrt[] = {x};
  const Var g = sum_all(grad(sum_all(mul(square(x), x)), wrt)[0]);
  CHECK(g.value().item() == doctest::Approx(12.0).epsilon(1e-15));
  CHECK(grad(g, wrt)[0].value()[0] == doctest::Approx(12.0).epsilon(1e-15));
}

TEST_CASE("function-level vjp matches the per-tape call") {
  const Builder fn = [](Tape&, std::span<const Var> in) { return std::vector<Var>{mul(in[0], in[1])}; };
  const Tensor inputs[] = {Tensor::vector({1, 2}), Tensor::vector({3, 5})};
  const Tensor cot[] = {Tensor::vector({1, -1})};
  const auto out = vjp(fn, inputs, cot);
  CHECK(out[0].bit_equal(Tensor::vector({3, -5})));
  CHECK(out[1].bit_equal(Tensor::vector({1, -2})));
  CHECK(forward(fn, inputs)[0].bit_equal(Tensor::vector({3, 10})));
}

TEST_CASE("squared norm of a matrix-vector product matches finite differences") {
  const Tensor v = Tensor::matrix(3, 1, {0.3, -1.2, 0.7});
  const ScalarBuilder fn = [v](Tape& t, Var w) { return sum_all(square(matmul(w, t.constant(v)))); };
  Rng rng(3);
  Tensor w(Shape{4, 3});
  for (double& x : w.data()) x = rng.normal();
  CHECK(check_gradient(fn, w, 1e-5).max_rel_err <= 1e-6);
}

TEST_CASE("gradient checker conventions") {
  SUBCASE("linear functions are exact") {
    const Tensor c = Tensor::vector({1.5, -2, 0.25, 3});
    const ScalarBuilder fn = [c](Tape& t, Var x) { return sum_all(mul(x, t.constant(c))); };
    CHECK(check_gradient(fn, Tensor::vector({0.1, 0.2, -0.3, 0.4}), 1e-3).max_rel_err <= 1e-10);
  }
  SUBCASE("constant function reports zero error") {
    const ScalarBuilder fn = [](Tape& t, Var) { return t.constant(Tensor::scalar(2.0)); };
    const Tensor g = gradient(fn, Tensor::vector({1, 2, 3}));
    for (double v : g.data()) CHECK(v == 0.0);
    CHECK(check_gradient(fn, Tensor::vector({1, 2, 3}), 1e-5).max_rel_err == 0.0);
  }
  SUBCASE("two-layer network loss") {
    Rng rng(5);
    Tensor x(Shape{6, 3}), w2(Shape{5, 2}), target(Shape{6, 2});
    for (double& v : x.data()) v = rng.uniform();
    for (double& v : w2.data()) v = rng.normal();
    for (std::size_t i = 0; i < 6; ++i) target.at(i, i % 2) = 1.0;
    const ScalarBuilder fn = [&](Tape& t, Var w1) {
      const Var h = gelu(matmul(t.constant(x), w1));
      return mean_all(softmax_cross_entropy(matmul(h, t.constant(w2)), t.constant(target)));
    };
    Tensor w1(Shape{3, 5});
    for (double& v : w1.data()) v = rng.normal();
    CHECK(check_gradient(fn, w1, 1e-5).max_rel_err <= 1e-6);
  }
  SUBCASE("large inputs switch to random directions") {
    const ScalarBuilder fn = [](Tape&, Var x) { return sum_all(exp(scale(x, 0.1))); };
    GradCheckOptions opt;
    opt.max_coordinates = 8;
    const auto report = check_gradient(fn, Tensor(Shape{20}, 0.5), 1e-5, opt);
    CHECK(report.directional);
    CHECK(report.probes == opt.directions);
    CHECK(report.max_rel_err <= 1e-7);
  }
  SUBCASE("step must be positive") {
    const ScalarBuilder fn = [](Tape&, Var x) { return sum_all(x); };
    CHECK_THROWS(check_gradient(fn, Tensor::vector({1}), 0.0));
  }
}

TEST_CASE("first-order battery over every primitive") {
  for (const auto& r : first_order_battery(20, 1)) {
    INFO(r.name);
    CHECK(r.max_rel_err <= 1e-6);
  }
}

TEST_CASE("second-order battery") {
  for (const auto& r : second_order_battery(20, 2)) {
    INFO(r.name);
    CHECK(r.max_rel_err <= 1e-5);
  }
}

TEST_CASE("gelu derivatives of any order agree with finite differences") {
  for (int order = 0; order < 4; ++order) {
    for (double x : {-2.5, -0.7, 0.0, 0.3, 1.9}) {
      const double h = 1e-5;
      const double fd = (gelu_derivative(x + h, order) - gelu_derivative(x - h, order)) / (2 * h);
      CHECK(gelu_derivative(x, order + 1) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("error conditions") {
  Tape tape;
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(add(tape.constant(Tensor::vector({1, 2})), tape.constant(Tensor::vector({1}))), ShapeError);
  }
  SUBCASE("non-finite output names the node") {
    try {
      log(tape.constant(Tensor::vector({0.0})));
      FAIL("expected a numerical error");
    } catch (const NumericalError& e) {
      CHECK(std::string(e.what()).find("node") != std::string::npos);
    }
  }
  SUBCASE("differentiating sqrt at zero") {
    const Var x = tape.variable(Tensor::vector({0.0, 1.0}));
    const Var wrt[] = {x};
    CHECK_THROWS_AS(grad(sum_all(sqrt(x)), wrt), NumericalError);
  }
}

TEST_CASE("tapes stay topologically ordered and deterministic") {
  auto run = []() {
    Tape tape;
    Rng rng(9);
    Tensor w(Shape{4, 4});
    for (double& v : w.data()) v = rng.normal();
    const Var x = tape.variable(w);
    const Var y = sum_all(gelu(matmul(x, transpose(x))));
    const Var wrt[] = {x};
    const Var g = grad(y, wrt)[0];
    const Var gg = grad(sum_all(square(g)), wrt)[0];
    CHECK(tape.topologically_ordered());
    return gg.value();
  };
  CHECK(run().bit_equal(run()));
}

TEST_CASE("f32 mode rounds every recorded value") {
  Tape tape(Precision::kF32);
  const Var x = tape.constant(Tensor::vector({0.1}));
  CHECK(x.value()[0] == static_cast<double>(0.1f));
  const Var y = scale(x, 3.0);
  CHECK(y.value()[0] == static_cast<double>(static_cast<float>(static_cast<double>(0.1f) * 3.0)));
}
