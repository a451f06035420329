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

#include "mgd/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>

#include "mgd/kernels.hpp"

namespace mgd::ad {
namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

void same_tape(Var a, Var b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("vars belong to different tapes");
}

void same_shape(Var a, Var b, std::string_view what) {
  same_tape(a, b);
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
}

void require_rank(Var a, std::size_t rank, std::string_view what) {
  if (a.value().rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got " +
                     shape_string(a.shape()));
  }
}

Var make(Op op, Var lhs, Var rhs, Tensor value, Attrs attrs = {}) {
  Tape& tape = lhs.tape();
  Node n;
  n.op = op;
  n.lhs = lhs.id();
  n.rhs = rhs.valid() ? rhs.id() : -1;
  n.value = std::move(value);
  n.attrs = std::move(attrs);
  n.needs_grad = lhs.needs_grad() || (rhs.valid() && rhs.needs_grad());
  return Var(&tape, tape.record(std::move(n)));
}

Var make(Op op, Var lhs, Tensor value, Attrs attrs = {}) { return make(op, lhs, Var{}, std::move(value), std::move(attrs)); }

Tensor elementwise(Var a, Var b, void (*kernel)(const double*, const double*, double*, std::size_t)) {
  Tensor out(a.shape());
  kernel(a.value().data().data(), b.value().data().data(), out.data().data(), out.size());
  return out;
}

template <typename F>
Tensor map_values(const Tensor& x, F f) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

Var zeros_like(Tape& tape, const Shape& shape) { return tape.constant(Tensor(shape)); }

void accumulate(Var& slot, Var contribution) {
  if (!slot.valid()) {
    slot = contribution;
  } else {
    slot = add(slot, contribution);
  }
}

// Returns the cotangent contributions for (lhs, rhs).
std::pair<Var, Var> rule(const Node& n, Var self, Var g) {
  Tape& tape = self.tape();
  const Var x(&tape, n.lhs);
  const Var y = n.rhs >= 0 ? Var(&tape, n.rhs) : Var{};
  switch (n.op) {
    case Op::kAdd:
      return {g, g};
    case Op::kSub:
      return {g, neg(g)};
    case Op::kNeg:
      return {neg(g), {}};
    case Op::kMul:
      return {mul(g, y), mul(g, x)};
    case Op::kDiv: {
      const Var gx = div(g, y);
      return {gx, neg(mul(gx, self))};
    }
    case Op::kScale:
      return {scale(g, n.attrs.scalar), {}};
    case Op::kAddConst:
      return {g, {}};
    case Op::kMulScalar:
      return {mul_scalar(g, y), reshape(sum_all(mul(g, x)), y.shape())};
    case Op::kSquare:
      return {mul(g, scale(x, 2.0)), {}};
    case Op::kSqrt: {
      const Tensor& xv = x.value();
      for (std::size_t i = 0; i < xv.size(); ++i) {
        if (!(xv[i] > 0.0)) {
          throw NumericalError("derivative of sqrt at non-positive input (node " + std::to_string(n.lhs) +
                               ", element " + std::to_string(i) + ")");
        }
      }
      return {div(scale(g, 0.5), self), {}};
    }
    case Op::kExp:
      return {mul(g, self), {}};
    case Op::kLog:
      return {div(g, x), {}};
    case Op::kClampStop:
    case Op::kRelu:
      return {mul(g, tape.constant(*n.attrs.mask)), {}};
    case Op::kGelu:
      return {mul(g, gelu(x, n.attrs.order + 1)), {}};
    case Op::kMatMul:
      return {matmul(g, transpose(y)), matmul(transpose(x), g)};
    case Op::kTranspose:
      return {transpose(g), {}};
    case Op::kAddRow:
      return {g, sum_rows(g)};
    case Op::kSumAll:
      return {broadcast_scalar(g, x.shape()), {}};
    case Op::kBroadcastScalar:
      return {reshape(sum_all(g), x.shape()), {}};
    case Op::kSumRows:
      return {broadcast_rows(g, x.value().rows()), {}};
    case Op::kBroadcastRows:
      return {sum_rows(g), {}};
    case Op::kSumCols:
      return {broadcast_cols(g, x.value().cols()), {}};
    case Op::kBroadcastCols:
      return {sum_cols(g), {}};
    case Op::kLogSoftmax: {
      const Var probs = exp(self);
      return {sub(g, mul(probs, broadcast_cols(sum_cols(g), x.value().cols()))), {}};
    }
    case Op::kPoolSum:
      return {pool_expand(g, n.attrs.count), {}};
    case Op::kPoolExpand:
      return {pool_sum(g, n.attrs.count), {}};
    case Op::kGatherRows:
      return {scatter_rows(g, n.attrs.index, x.value().rows()), {}};
    case Op::kScatterRows:
      return {gather_rows(g, n.attrs.index), {}};
    case Op::kReshape:
      return {reshape(g, x.shape()), {}};
    case Op::kVariable:
    case Op::kConstant:
      break;
  }
  throw UnregisteredVjp("no VJP rule registered for op " + std::string(op_name(n.op)));
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::kVariable: return "variable";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kNeg: return "neg";
    case Op::kMul: return "mul";
    case Op::kDiv: return "div";
    case Op::kScale: return "scale";
    case Op::kAddConst: return "add_const";
    case Op::kMulScalar: return "mul_scalar";
    case Op::kSquare: return "square";
    case Op::kSqrt: return "sqrt";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kClampStop: return "clamp_stop";
    case Op::kRelu: return "relu";
    case Op::kGelu: return "gelu";
    case Op::kMatMul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kAddRow: return "add_row";
    case Op::kSumAll: return "sum_all";
    case Op::kBroadcastScalar: return "broadcast_scalar";
    case Op::kSumRows: return "sum_rows";
    case Op::kBroadcastRows: return "broadcast_rows";
    case Op::kSumCols: return "sum_cols";
    case Op::kBroadcastCols: return "broadcast_cols";
    case Op::kLogSoftmax: return "log_softmax";
    case Op::kPoolSum: return "pool_sum";
    case Op::kPoolExpand: return "pool_expand";
    case Op::kGatherRows: return "gather_rows";
    case Op::kScatterRows: return "scatter_rows";
    case Op::kReshape: return "reshape";
  }
  return "unknown";
}

int Tape::record(Node node) {
  const int id = static_cast<int>(nodes_.size());
  if (node.lhs >= id || node.rhs >= id) throw std::logic_error("tape node references a later node");
  if (precision_ == Precision::kF32) {
    for (double& v : node.value.data()) v = static_cast<double>(static_cast<float>(v));
  }
  if (const std::size_t bad = node.value.first_non_finite(); bad != node.value.size()) {
    throw NumericalError("non-finite value from " + std::string(op_name(node.op)) + " at node " +
                         std::to_string(id) + " (element " + std::to_string(bad) + ")");
  }
  nodes_.push_back(std::move(node));
  return id;
}

Var Tape::variable(Tensor value) {
  Node n;
  n.op = Op::kVariable;
  n.value = std::move(value);
  n.needs_grad = true;
  return Var(this, record(std::move(n)));
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.value = std::move(value);
  return Var(this, record(std::move(n)));
}

bool Tape::topologically_ordered() const {
  for (std::size_t j = 0; j < nodes_.size(); ++j) {
    const Node& n = nodes_[j];
    if (n.lhs >= static_cast<int>(j) || n.rhs >= static_cast<int>(j)) return false;
  }
  return true;
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  return make(Op::kAdd, a, b, elementwise(a, b, kernels::active().add));
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  return make(Op::kSub, a, b, elementwise(a, b, kernels::active().sub));
}

Var neg(Var a) {
  Tensor out(a.shape());
  kernels::active().scale(a.value().data().data(), -1.0, out.data().data(), out.size());
  return make(Op::kNeg, a, std::move(out));
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  return make(Op::kMul, a, b, elementwise(a, b, kernels::active().mul));
}

Var div(Var a, Var b) {
  same_shape(a, b, "div");
  return make(Op::kDiv, a, b, elementwise(a, b, kernels::active().div));
}

Var scale(Var a, double s) {
  Tensor out(a.shape());
  kernels::active().scale(a.value().data().data(), s, out.data().data(), out.size());
  Attrs at;
  at.scalar = s;
  return make(Op::kScale, a, std::move(out), std::move(at));
}

Var add_const(Var a, double c) {
  Attrs at;
  at.scalar = c;
  return make(Op::kAddConst, a, map_values(a.value(), [c](double v) { return v + c; }), std::move(at));
}

Var mul_scalar(Var a, Var s) {
  same_tape(a, s);
  if (s.value().size() != 1) throw ShapeError("mul_scalar: scalar operand has shape " + shape_string(s.shape()));
  Tensor out(a.shape());
  kernels::active().scale(a.value().data().data(), s.value()[0], out.data().data(), out.size());
  return make(Op::kMulScalar, a, s, std::move(out));
}

Var square(Var a) { return make(Op::kSquare, a, elementwise(a, a, kernels::active().mul)); }

Var sqrt(Var a) {
  Tensor out(a.shape());
  kernels::active().sqrt(a.value().data().data(), out.data().data(), out.size());
  return make(Op::kSqrt, a, std::move(out));
}

Var exp(Var a) {
  return make(Op::kExp, a, map_values(a.value(), [](double v) { return std::exp(v); }));
}

Var log(Var a) {
  return make(Op::kLog, a, map_values(a.value(), [](double v) { return std::log(v); }));
}

Var clamp_stop(Var a, double lo, double hi) {
  if (!(lo <= hi)) throw std::invalid_argument("clamp_stop: lo > hi");
  Tensor out(a.shape());
  kernels::active().clamp(a.value().data().data(), lo, hi, out.data().data(), out.size());
  Attrs at;
  at.lo = lo;
  at.hi = hi;
  at.mask = std::make_shared<const Tensor>(map_values(a.value(), [lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; }));
  return make(Op::kClampStop, a, std::move(out), std::move(at));
}

Var relu(Var a) {
  Tensor out(a.shape());
  kernels::active().clamp(a.value().data().data(), 0.0, std::numeric_limits<double>::infinity(), out.data().data(),
                          out.size());
  Attrs at;
  at.mask = std::make_shared<const Tensor>(map_values(a.value(), [](double v) { return v > 0.0 ? 1.0 : 0.0; }));
  return make(Op::kRelu, a, std::move(out), std::move(at));
}

double gelu_derivative(double x, int order) {
  if (order < 0) throw std::invalid_argument("gelu_derivative: negative order");
  const auto n = static_cast<std::size_t>(order);
  // Taylor coefficients of u(x + e) = c * ((x + e) + a (x + e)^3).
  const double u[4] = {kGeluC * (x + kGeluA * x * x * x), kGeluC * (1.0 + 3.0 * kGeluA * x * x),
                       kGeluC * 3.0 * kGeluA * x, kGeluC * kGeluA};
  // t = tanh(u) satisfies t' = (1 - t^2) u'; s holds the coefficients of 1 - t^2.
  std::vector<double> t(n + 1, 0.0);
  std::vector<double> s(n + 1, 0.0);
  t[0] = std::tanh(u[0]);
  s[0] = 1.0 - t[0] * t[0];
  for (std::size_t k = 1; k <= n; ++k) {
    double acc = 0.0;
    for (std::size_t j = 1; j <= std::min<std::size_t>(k, 3); ++j) acc += static_cast<double>(j) * u[j] * s[k - j];
    t[k] = acc / static_cast<double>(k);
    double sq = 0.0;
    for (std::size_t j = 0; j <= k; ++j) sq += t[j] * t[k - j];
    s[k] = -sq;
  }
  // gelu(x + e) = 0.5 (x + e)(1 + t(e))
  if (n == 0) return 0.5 * x * (1.0 + t[0]);
  double coeff = 0.5 * (x * t[n] + t[n - 1] + (n == 1 ? 1.0 : 0.0));
  for (std::size_t k = 2; k <= n; ++k) coeff *= static_cast<double>(k);
  return coeff;
}

Var gelu(Var a, int order) {
  Attrs at;
  at.order = order;
  return make(Op::kGelu, a, map_values(a.value(), [order](double v) { return gelu_derivative(v, order); }), std::move(at));
}

Var matmul(Var a, Var b) {
  same_tape(a, b);
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.value().rows(), k = a.value().cols(), n = b.value().cols();
  if (b.value().rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
  }
  Tensor out(Shape{m, n});
  kernels::active().matmul(a.value().data().data(), b.value().data().data(), out.data().data(), m, k, n);
  return make(Op::kMatMul, a, b, std::move(out));
}

Var transpose(Var a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.value().rows(), n = a.value().cols();
  Tensor out(Shape{n, m});
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  }
  return make(Op::kTranspose, a, std::move(out));
}

Var add_row(Var x, Var row) {
  same_tape(x, row);
  require_rank(x, 2, "add_row");
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (row.value().rank() != 1 || row.value().size() != n) {
    throw ShapeError("add_row: row shape " + shape_string(row.shape()) + " vs matrix " + shape_string(x.shape()));
  }
  Tensor out(x.shape());
  kernels::active().add_row(x.value().data().data(), row.value().data().data(), out.data().data(), m, n);
  return make(Op::kAddRow, x, row, std::move(out));
}

Var sum_all(Var a) { return make(Op::kSumAll, a, Tensor::scalar(mgd::sum(a.value()))); }

Var mean_all(Var a) {
  if (a.value().size() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size()));
}

Var broadcast_scalar(Var s, const Shape& shape) {
  if (s.value().size() != 1) throw ShapeError("broadcast_scalar: operand has shape " + shape_string(s.shape()));
  return make(Op::kBroadcastScalar, s, Tensor(shape, s.value()[0]));
}

Var sum_rows(Var a) {
  require_rank(a, 2, "sum_rows");
  const std::size_t m = a.value().rows(), n = a.value().cols();
  Tensor out(Shape{n});
  kernels::active().accumulate_rows(a.value().data().data(), out.data().data(), m, n);
  return make(Op::kSumRows, a, std::move(out));
}

Var broadcast_rows(Var a, std::size_t m) {
  require_rank(a, 1, "broadcast_rows");
  const std::size_t n = a.value().size();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) std::copy_n(a.value().data().data(), n, out.data().data() + i * n);
  return make(Op::kBroadcastRows, a, std::move(out));
}

Var sum_cols(Var a) {
  require_rank(a, 2, "sum_cols");
  const std::size_t m = a.value().rows(), n = a.value().cols();
  Tensor out(Shape{m});
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += x[i * n + j];
    out[i] = acc;
  }
  return make(Op::kSumCols, a, std::move(out));
}

Var broadcast_cols(Var a, std::size_t n) {
  require_rank(a, 1, "broadcast_cols");
  const std::size_t m = a.value().size();
  Tensor out(Shape{m, n});
  for (std::size_t i = 0; i < m; ++i) std::fill_n(out.data().data() + i * n, n, a.value()[i]);
  return make(Op::kBroadcastCols, a, std::move(out));
}

Var log_softmax(Var a) {
  require_rank(a, 2, "log_softmax");
  const std::size_t m = a.value().rows(), n = a.value().cols();
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.data().data() + i * n;
    double mx = row[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return make(Op::kLogSoftmax, a, std::move(out));
}

Var pool_sum(Var a, std::size_t width) {
  require_rank(a, 2, "pool_sum");
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (width == 0 || n % width != 0) throw ShapeError("pool_sum: width does not divide column count");
  const std::size_t groups = n / width;
  Tensor out(Shape{m, groups});
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t g = 0; g < groups; ++g) {
      double acc = 0.0;
      for (std::size_t w = 0; w < width; ++w) acc += x[i * n + g * width + w];
      out[i * groups + g] = acc;
    }
  }
  Attrs at;
  at.count = width;
  return make(Op::kPoolSum, a, std::move(out), std::move(at));
}

Var pool_expand(Var a, std::size_t width) {
  require_rank(a, 2, "pool_expand");
  const std::size_t m = a.value().rows(), groups = a.value().cols();
  Tensor out(Shape{m, groups * width});
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t g = 0; g < groups; ++g) {
      std::fill_n(out.data().data() + i * groups * width + g * width, width, x[i * groups + g]);
    }
  }
  Attrs at;
  at.count = width;
  return make(Op::kPoolExpand, a, std::move(out), std::move(at));
}

Var gather_rows(Var x, std::shared_ptr<const std::vector<std::ptrdiff_t>> index) {
  require_rank(x, 2, "gather_rows");
  const std::size_t n = x.value().rows(), d = x.value().cols();
  Tensor out(Shape{index->size(), d});
  for (std::size_t r = 0; r < index->size(); ++r) {
    const std::ptrdiff_t src = (*index)[r];
    if (src < 0) continue;
    if (static_cast<std::size_t>(src) >= n) throw ShapeError("gather_rows: index out of range");
    std::copy_n(x.value().data().data() + static_cast<std::size_t>(src) * d, d, out.data().data() + r * d);
  }
  Attrs at;
  at.index = std::move(index);
  return make(Op::kGatherRows, x, std::move(out), std::move(at));
}

Var scatter_rows(Var x, std::shared_ptr<const std::vector<std::ptrdiff_t>> index, std::size_t rows) {
  require_rank(x, 2, "scatter_rows");
  const std::size_t b = x.value().rows(), d = x.value().cols();
  if (index->size() != b) throw ShapeError("scatter_rows: index length differs from row count");
  Tensor out(Shape{rows, d});
  for (std::size_t r = 0; r < b; ++r) {
    const std::ptrdiff_t dst = (*index)[r];
    if (dst < 0) continue;
    if (static_cast<std::size_t>(dst) >= rows) throw ShapeError("scatter_rows: index out of range");
    double* o = out.data().data() + static_cast<std::size_t>(dst) * d;
    const double* s = x.value().data().data() + r * d;
    for (std::size_t j = 0; j < d; ++j) o[j] += s[j];
  }
  Attrs at;
  at.index = std::move(index);
  at.count = rows;
  return make(Op::kScatterRows, x, std::move(out), std::move(at));
}

Var reshape(Var a, Shape shape) {
  Attrs at;
  at.shape = shape;
  return make(Op::kReshape, a, a.value().reshaped(std::move(shape)), std::move(at));
}

Var avg_pool(Var a, std::size_t width) { return scale(pool_sum(a, width), 1.0 / static_cast<double>(width)); }

Var max_pool(Var a, std::size_t width) {
  require_rank(a, 2, "max_pool");
  const std::size_t m = a.value().rows(), n = a.value().cols();
  if (width == 0 || n % width != 0) throw ShapeError("max_pool: width does not divide column count");
  Tensor mask(a.shape());
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t g = 0; g < n / width; ++g) {
      std::size_t best = g * width;
      for (std::size_t w = 1; w < width; ++w) {
        if (x[i * n + g * width + w] > x[i * n + best]) best = g * width + w;
      }
      mask[i * n + best] = 1.0;
    }
  }
  return pool_sum(mul(a, a.tape().constant(std::move(mask))), width);
}

Var normalize(Var x, double eps, NormAxis axis) {
  require_rank(x, 2, "normalize");
  if (!(eps > 0.0)) throw std::invalid_argument("normalize: eps must be > 0");
  const std::size_t m = x.value().rows(), n = x.value().cols();
  if (axis == NormAxis::kBatch) {
    const double inv = 1.0 / static_cast<double>(m);
    const Var centered = sub(x, broadcast_rows(scale(sum_rows(x), inv), m));
    const Var var = scale(sum_rows(square(centered)), inv);
    return div(centered, broadcast_rows(sqrt(add_const(var, eps)), m));
  }
  const double inv = 1.0 / static_cast<double>(n);
  const Var centered = sub(x, broadcast_cols(scale(sum_cols(x), inv), n));
  const Var var = scale(sum_cols(square(centered)), inv);
  return div(centered, broadcast_cols(sqrt(add_const(var, eps)), n));
}

Var softmax_cross_entropy(Var logits, Var targets) {
  same_shape(logits, targets, "softmax_cross_entropy");
  return neg(sum_cols(mul(targets, log_softmax(logits))));
}

std::vector<Var> vjp(std::span<const Var> outputs, std::span<const Var> cotangents, std::span<const Var> wrt) {
  if (outputs.size() != cotangents.size()) throw std::invalid_argument("vjp: outputs/cotangents count mismatch");
  if (outputs.empty()) throw std::invalid_argument("vjp: no outputs");
  Tape& tape = outputs[0].tape();
  int top = -1;
  for (const Var& o : outputs) top = std::max(top, o.id());
  std::vector<Var> cot(static_cast<std::size_t>(top) + 1);
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    same_shape(outputs[i], cotangents[i], "vjp cotangent");
    accumulate(cot[static_cast<std::size_t>(outputs[i].id())], cotangents[i]);
  }
  for (int id = top; id >= 0; --id) {
    const Var g = cot[static_cast<std::size_t>(id)];
    if (!g.valid()) continue;
    const Node& n = tape.node(id);
    if (!n.needs_grad || n.op == Op::kVariable || n.op == Op::kConstant) continue;
    const auto [ga, gb] = rule(n, Var(&tape, id), g);
    if (n.lhs >= 0 && ga.valid() && tape.node(n.lhs).needs_grad) accumulate(cot[static_cast<std::size_t>(n.lhs)], ga);
    if (n.rhs >= 0 && gb.valid() && tape.node(n.rhs).needs_grad) accumulate(cot[static_cast<std::size_t>(n.rhs)], gb);
  }
  std::vector<Var> result;
  result.reserve(wrt.size());
  for (const Var& w : wrt) {
    if (w.id() <= top && cot[static_cast<std::size_t>(w.id())].valid()) {
      result.push_back(cot[static_cast<std::size_t>(w.id())]);
    } else {
      result.push_back(zeros_like(tape, w.shape()));
    }
  }
  return result;
}

std::vector<Var> grad(Var scalar_output, std::span<const Var> wrt) {
  if (scalar_output.value().size() != 1) throw ShapeError("grad: output is not a scalar");
  const Var one = scalar_output.tape().constant(Tensor(scalar_output.shape(), 1.0));
  const Var outs[] = {scalar_output};
  const Var cots[] = {one};
  return vjp(outs, cots, wrt);
}

std::vector<Tensor> forward(const Builder& fn, std::span<const Tensor> inputs, Precision p) {
  Tape tape(p);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  std::vector<Tensor> out;
  for (const Var& v : fn(tape, vars)) out.push_back(v.value());
  return out;
}

std::vector<Tensor> vjp(const Builder& fn, std::span<const Tensor> inputs, std::span<const Tensor> cotangents) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.variable(t));
  const std::vector<Var> outs = fn(tape, vars);
  if (outs.size() != cotangents.size()) throw std::invalid_argument("vjp: cotangent count mismatch");
  std::vector<Var> cots;
  for (const Tensor& c : cotangents) cots.push_back(tape.constant(c));
  std::vector<Tensor> grads;
  for (const Var& g : vjp(outs, cots, vars)) grads.push_back(g.value());
  return grads;
}

}  // namespace mgd::ad
