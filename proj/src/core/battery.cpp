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

#include "mgd/battery.hpp"

#include <cmath>
#include <functional>
#include <memory>

#include "mgd/gradcheck.hpp"
#include "mgd/rng.hpp"

namespace mgd::ad {
namespace {

Tensor random_tensor(Rng& rng, const Shape& shape, double lo, double hi) {
  Tensor t(shape);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Uniform magnitude in [gap, 1] with a random sign; keeps kinks out of reach.
Tensor away_from_zero(Rng& rng, const Shape& shape, double gap) {
  Tensor t(shape);
  for (double& v : t.data()) {
    const double mag = gap + (1.0 - gap) * rng.uniform();
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

// Scalar summary sum(y * w) with weights fixed by `seed`.
Var weigh(Var y, std::uint64_t seed) {
  Rng rng(seed);
  return sum_all(mul(y, y.tape().constant(random_tensor(rng, y.shape(), -1.0, 1.0))));
}

using Factory = std::function<ScalarBuilder(Rng&, std::uint64_t)>;

struct Case {
  std::string name;
  std::function<Tensor(Rng&)> point;
  Factory build;
};

std::shared_ptr<const std::vector<std::ptrdiff_t>> indices(std::vector<std::ptrdiff_t> v) {
  return std::make_shared<const std::vector<std::ptrdiff_t>>(std::move(v));
}

std::vector<Case> primitive_cases() {
  const Shape m34{3, 4};
  auto uniform = [](Shape s, double lo, double hi) {
    return [s, lo, hi](Rng& r) { return random_tensor(r, s, lo, hi); };
  };
  auto unary = [](std::function<Var(Var)> f) -> Factory {
    return [f](Rng&, std::uint64_t w) { return [f, w](Tape&, Var x) { return weigh(f(x), w); }; };
  };
  // Binary op with a random constant partner; `left` puts x first.
  auto with_const = [](std::function<Var(Var, Var)> f, bool left, double lo, double hi) -> Factory {
    return [=](Rng& r, std::uint64_t w) {
      auto c = std::make_shared<Tensor>();
      auto rng = std::make_shared<Rng>(r.next_u64());
      return ScalarBuilder([=](Tape& t, Var x) {
        if (c->size() == 0) *c = random_tensor(*rng, x.shape(), lo, hi);
        const Var k = t.constant(*c);
        return weigh(left ? f(x, k) : f(k, x), w);
      });
    };
  };

  std::vector<Case> cases;
  cases.push_back({"add", uniform(m34, -1, 1), with_const(add, true, -1, 1)});
  cases.push_back({"sub", uniform(m34, -1, 1), with_const(sub, false, -1, 1)});
  cases.push_back({"mul", uniform(m34, -1, 1), with_const(mul, true, -1, 1)});
  cases.push_back({"mul_self", uniform(m34, -1, 1), unary([](Var x) { return mul(x, x); })});
  cases.push_back({"div_numerator", uniform(m34, -1, 1), with_const(div, true, 0.5, 2)});
  cases.push_back({"div_denominator", uniform(m34, 0.5, 2), with_const(div, false, -1, 1)});
  cases.push_back({"neg", uniform(m34, -1, 1), unary(neg)});
  cases.push_back({"scale", uniform(m34, -1, 1), unary([](Var x) { return scale(x, -1.7); })});
  cases.push_back({"add_const", uniform(m34, -1, 1), unary([](Var x) { return add_const(x, 0.3); })});
  cases.push_back({"mul_scalar", uniform(Shape{1}, 0.5, 2), [](Rng& r, std::uint64_t w) {
                     Tensor a = random_tensor(r, Shape{3, 4}, -1, 1);
                     return ScalarBuilder([a, w](Tape& t, Var s) {
                       const Var av = t.constant(a);
                       // Depends on s both as the scalar and through the tensor.
                       return weigh(mul_scalar(add(av, broadcast_scalar(reshape(s, {}), a.shape())), s), w);
                     });
                   }});
  cases.push_back({"square", uniform(m34, -2, 2), unary(square)});
  cases.push_back({"sqrt", uniform(m34, 0.2, 3), unary(sqrt)});
  cases.push_back({"exp", uniform(m34, -2, 2), unary(exp)});
  cases.push_back({"log", uniform(m34, 0.2, 3), unary(log)});
  cases.push_back({"clamp_stop", uniform(m34, -1, 1), unary([](Var x) { return clamp_stop(x, -0.5, 0.5); })});
  cases.push_back({"relu", [m34](Rng& r) { return away_from_zero(r, m34, 0.05); }, unary(relu)});
  cases.push_back({"gelu", uniform(m34, -3, 3), unary([](Var x) { return gelu(x); })});
  cases.push_back({"gelu_d1", uniform(m34, -3, 3), unary([](Var x) { return gelu(x, 1); })});
  cases.push_back({"matmul_left", uniform(m34, -1, 1), with_const([](Var x, Var) {
                     return matmul(x, x.tape().constant(Tensor::matrix({{1, -2}, {0.5, 1}, {-1, 0.25}, {2, 1}})));
                   }, true, 0, 1)});
  cases.push_back({"matmul_right", uniform(m34, -1, 1), with_const([](Var x, Var) {
                     return matmul(x.tape().constant(Tensor::matrix({{1, -2, 0.5}, {0.5, 1, -1}})), x);
                   }, true, 0, 1)});
  cases.push_back({"matmul_gram", uniform(m34, -1, 1), unary([](Var x) { return matmul(transpose(x), x); })});
  cases.push_back({"transpose", uniform(m34, -1, 1), unary(transpose)});
  cases.push_back({"add_row", uniform(Shape{4}, -1, 1), [](Rng& r, std::uint64_t w) {
                     Tensor a = random_tensor(r, Shape{3, 4}, -1, 1);
                     return ScalarBuilder([a, w](Tape& t, Var row) { return weigh(add_row(t.constant(a), row), w); });
                   }});
  cases.push_back({"sum_all", uniform(m34, -1, 1), unary([](Var x) { return scale(sum_all(x), 1.5); })});
  cases.push_back({"mean_all", uniform(m34, -1, 1), unary([](Var x) { return square(mean_all(x)); })});
  cases.push_back({"broadcast_scalar", uniform(Shape{}, -1, 1),
                   unary([](Var x) { return broadcast_scalar(x, Shape{2, 3}); })});
  cases.push_back({"sum_rows", uniform(m34, -1, 1), unary(sum_rows)});
  cases.push_back({"broadcast_rows", uniform(Shape{4}, -1, 1), unary([](Var x) { return broadcast_rows(x, 3); })});
  cases.push_back({"sum_cols", uniform(m34, -1, 1), unary(sum_cols)});
  cases.push_back({"broadcast_cols", uniform(Shape{3}, -1, 1), unary([](Var x) { return broadcast_cols(x, 4); })});
  cases.push_back({"log_softmax", uniform(m34, -2, 2), unary(log_softmax)});
  cases.push_back({"pool_sum", uniform(m34, -1, 1), unary([](Var x) { return pool_sum(x, 2); })});
  cases.push_back({"pool_expand", uniform(Shape{3, 2}, -1, 1), unary([](Var x) { return pool_expand(x, 2); })});
  cases.push_back({"avg_pool", uniform(m34, -1, 1), unary([](Var x) { return avg_pool(x, 2); })});
  cases.push_back({"max_pool", uniform(m34, -1, 1), unary([](Var x) { return max_pool(x, 2); })});
  cases.push_back({"normalize_batch", uniform(m34, -1, 1),
                   unary([](Var x) { return normalize(x, 1e-3, NormAxis::kBatch); })});
  cases.push_back({"normalize_feature", uniform(m34, -1, 1),
                   unary([](Var x) { return normalize(x, 1e-3, NormAxis::kFeature); })});
  cases.push_back({"softmax_cross_entropy", uniform(m34, -2, 2), [](Rng& r, std::uint64_t) {
                     Tensor target(Shape{3, 4});
                     for (std::size_t i = 0; i < 3; ++i) {
                       double total = 0.0;
                       for (std::size_t j = 0; j < 4; ++j) total += target.at(i, j) = r.uniform(0.1, 1.0);
                       for (std::size_t j = 0; j < 4; ++j) target.at(i, j) /= total;
                     }
                     return ScalarBuilder([target](Tape& t, Var x) {
                       return sum_all(softmax_cross_entropy(x, t.constant(target)));
                     });
                   }});
  cases.push_back({"gather_rows", uniform(m34, -1, 1),
                   unary([](Var x) { return gather_rows(x, indices({2, -1, 0, 2, 1})); })});
  cases.push_back({"scatter_rows", uniform(m34, -1, 1),
                   unary([](Var x) { return scatter_rows(x, indices({1, 1, -1}), 2); })});
  cases.push_back({"reshape", uniform(m34, -1, 1), unary([](Var x) { return reshape(x, Shape{2, 6}); })});
  return cases;
}

struct SecondOrderCase {
  std::string name;
  double lo, hi;
  std::function<Var(Var)> f;
  std::function<double(double)> second;
};

double gelu_second_closed_form(double x) {
  const double c = std::sqrt(2.0 / M_PI), a = 0.044715;
  const double u = c * (x + a * x * x * x);
  const double du = c * (1.0 + 3.0 * a * x * x);
  const double ddu = 6.0 * c * a * x;
  const double t = std::tanh(u), s = 1.0 - t * t;
  return s * du + 0.5 * x * s * (ddu - 2.0 * t * du * du);
}

std::vector<SecondOrderCase> second_order_cases() {
  return {
      {"cube", -2, 2, [](Var x) { return mul(square(x), x); }, [](double x) { return 6 * x; }},
      {"quartic", -2, 2, [](Var x) { return square(square(x)); }, [](double x) { return 12 * x * x; }},
      {"exp", -2, 2, [](Var x) { return exp(x); }, [](double x) { return std::exp(x); }},
      {"exp_scaled", -1, 1, [](Var x) { return exp(scale(x, 2.0)); }, [](double x) { return 4 * std::exp(2 * x); }},
      {"log", 0.3, 3, [](Var x) { return log(x); }, [](double x) { return -1.0 / (x * x); }},
      {"sqrt", 0.3, 3, [](Var x) { return sqrt(x); }, [](double x) { return -0.25 * std::pow(x, -1.5); }},
      {"reciprocal", 0.3, 3, [](Var x) { return div(x.tape().constant(Tensor::vector({1.0})), x); },
       [](double x) { return 2.0 / (x * x * x); }},
      {"x_exp_x", -2, 2, [](Var x) { return mul(x, exp(x)); }, [](double x) { return (x + 2) * std::exp(x); }},
      {"softplus", -3, 3, [](Var x) { return log(add_const(exp(x), 1.0)); },
       [](double x) {
         const double s = 1.0 / (1.0 + std::exp(-x));
         return s * (1 - s);
       }},
      {"gelu", -3, 3, [](Var x) { return gelu(x); }, gelu_second_closed_form},
      {"exp_of_square", -1, 1, [](Var x) { return exp(square(x)); },
       [](double x) { return (2 + 4 * x * x) * std::exp(x * x); }},
      {"relu_cubed", 0.2, 2, [](Var x) { return mul(square(relu(x)), x); }, [](double x) { return 6 * x; }},
  };
}

double rel_err(double a, double b) {
  const double diff = std::abs(a - b);
  if (diff == 0.0) return 0.0;
  return diff / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

std::vector<BatteryResult> first_order_battery(std::size_t points, std::uint64_t seed, double h) {
  std::vector<BatteryResult> out;
  for (const Case& c : primitive_cases()) {
    Rng rng = Rng::stream(seed, "battery:" + c.name);
    BatteryResult r{c.name, 0.0, points};
    for (std::size_t p = 0; p < points; ++p) {
      const Tensor x = c.point(rng);
      const ScalarBuilder fn = c.build(rng, rng.next_u64());
      r.max_rel_err = std::max(r.max_rel_err, check_gradient(fn, x, h).max_rel_err);
    }
    out.push_back(r);
  }
  return out;
}

std::vector<BatteryResult> second_order_battery(std::size_t points, std::uint64_t seed) {
  std::vector<BatteryResult> out;
  for (const SecondOrderCase& c : second_order_cases()) {
    Rng rng = Rng::stream(seed, "second-order:" + c.name);
    BatteryResult r{c.name, 0.0, points};
    for (std::size_t p = 0; p < points; ++p) {
      const double x0 = rng.uniform(c.lo, c.hi);
      Tape tape;
      const Var x = tape.variable(Tensor::vector({x0}));
      const Var y = sum_all(c.f(x));
      const Var wrt[] = {x};
      const Var dy = sum_all(grad(y, wrt)[0]);
      const double d2 = grad(dy, wrt)[0].value()[0];
      r.max_rel_err = std::max(r.max_rel_err, rel_err(d2, c.second(x0)));
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace mgd::ad
