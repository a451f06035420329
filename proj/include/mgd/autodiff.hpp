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
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "mgd/tensor.hpp"

// Eager reverse-mode autodiff.
//
// Values are computed when a node is recorded; the tape keeps the op kind,
// input ids and attributes. Every VJP rule is itself written with recorded
// ops, so gradients taken with `vjp` can be differentiated again. This is what
// lets an optimizer step that contains a loss gradient be differentiated with
// respect to its own inputs.

namespace mgd::ad {

enum class Precision { kF64, kF32 };

enum class Op : std::uint8_t {
  kVariable,
  kConstant,
  kAdd,
  kSub,
  kNeg,
  kMul,
  kDiv,
  kScale,
  kAddConst,
  kMulScalar,
  kSquare,
  kSqrt,
  kExp,
  kLog,
  kClampStop,
  kRelu,
  kGelu,
  kMatMul,
  kTranspose,
  kAddRow,
  kSumAll,
  kBroadcastScalar,
  kSumRows,
  kBroadcastRows,
  kSumCols,
  kBroadcastCols,
  kLogSoftmax,
  kPoolSum,
  kPoolExpand,
  kGatherRows,
  kScatterRows,
  kReshape,
};

std::string_view op_name(Op op);

/// Raised when a VJP is requested for an op without a registered rule.
class UnregisteredVjp : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct Attrs {
  double scalar = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  int order = 0;
  std::size_t count = 0;
  Shape shape;
  std::shared_ptr<const std::vector<std::ptrdiff_t>> index;
  std::shared_ptr<const Tensor> mask;
};

struct Node {
  Op op = Op::kConstant;
  int lhs = -1;
  int rhs = -1;
  Tensor value;
  Attrs attrs;
  bool needs_grad = false;
};

class Var;

class Tape {
 public:
  explicit Tape(Precision precision = Precision::kF64) : precision_(precision) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(Tensor value);
  Var constant(Tensor value);

  int record(Node node);
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  Precision precision() const { return precision_; }

  /// True iff every node's inputs precede it.
  bool topologically_ordered() const;

 private:
  Precision precision_;
  std::deque<Node> nodes_;
};

/// Handle to a node on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr && id_ >= 0; }
  const Tensor& value() const { return tape_->node(id_).value; }
  const Shape& shape() const { return value().shape(); }
  bool needs_grad() const { return tape_->node(id_).needs_grad; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Elementwise ops on equal shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double s);
Var add_const(Var a, double c);
/// a * s where s holds a single element.
Var mul_scalar(Var a, Var s);
Var square(Var a);
/// Differentiating through sqrt at 0 raises NumericalError.
Var sqrt(Var a);
Var exp(Var a);
Var log(Var a);
/// Clamp with zero gradient outside (lo, hi).
Var clamp_stop(Var a, double lo, double hi);
Var relu(Var a);
/// Tanh-approximated GELU; `order` > 0 yields its order-th derivative.
Var gelu(Var a, int order = 0);

// Linear algebra and reductions. Reductions run left to right.
Var matmul(Var a, Var b);
Var transpose(Var a);
/// x[m,n] + row[n] broadcast over rows.
Var add_row(Var x, Var row);
/// Sum of all elements, rank-0 result.
Var sum_all(Var a);
Var mean_all(Var a);
Var broadcast_scalar(Var s, const Shape& shape);
/// [m,n] -> [n]
Var sum_rows(Var a);
/// [n] -> [m,n]
Var broadcast_rows(Var a, std::size_t m);
/// [m,n] -> [m]
Var sum_cols(Var a);
/// [m] -> [m,n]
Var broadcast_cols(Var a, std::size_t n);
/// Row-wise log-softmax of a [m,c] matrix.
Var log_softmax(Var a);
/// Sums groups of `width` adjacent columns: [m,n] -> [m,n/width].
Var pool_sum(Var a, std::size_t width);
/// Repeats every column `width` times: [m,n] -> [m,n*width].
Var pool_expand(Var a, std::size_t width);
/// out[r] = x[index[r]], or a zero row when index[r] < 0.
Var gather_rows(Var x, std::shared_ptr<const std::vector<std::ptrdiff_t>> index);
/// out[index[r]] += x[r] into `rows` rows; negative indices are dropped.
Var scatter_rows(Var x, std::shared_ptr<const std::vector<std::ptrdiff_t>> index, std::size_t rows);
Var reshape(Var a, Shape shape);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator/(Var a, Var b) { return div(a, b); }
inline Var operator-(Var a) { return neg(a); }

// Composite functions built from the primitives above.
Var avg_pool(Var a, std::size_t width);
/// Max pool over column groups; gradient routes to the (first) arg-max.
Var max_pool(Var a, std::size_t width);
enum class NormAxis { kBatch, kFeature };
/// (x - mean) / sqrt(var + eps) along `axis` of a [m,n] matrix.
Var normalize(Var x, double eps, NormAxis axis);
/// Per-row cross entropy -sum_j targets[i,j] * log_softmax(logits)[i,j]; [m].
Var softmax_cross_entropy(Var logits, Var targets);

/// Cotangent-weighted gradient of `outputs` w.r.t. `wrt`. The returned vars
/// are recorded on the same tape and can be differentiated again. Inputs
/// that do not influence the outputs get a zero constant.
std::vector<Var> vjp(std::span<const Var> outputs, std::span<const Var> cotangents, std::span<const Var> wrt);
std::vector<Var> grad(Var scalar_output, std::span<const Var> wrt);

/// Analytic derivative of the tanh-approximated GELU of any order, via Taylor
/// coefficient propagation through tanh.
double gelu_derivative(double x, int order);

// Function-level interface used by tests and the gradient checker.
using Builder = std::function<std::vector<Var>(Tape&, std::span<const Var>)>;

std::vector<Tensor> forward(const Builder& fn, std::span<const Tensor> inputs, Precision p = Precision::kF64);
std::vector<Tensor> vjp(const Builder& fn, std::span<const Tensor> inputs, std::span<const Tensor> cotangents);

}  // namespace mgd::ad
