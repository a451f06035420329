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

#include "mgd/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "mgd/rng.hpp"

namespace mgd::train {

Var Model::batch_loss(std::span<const Var> params, Var features, Var labels) const {
  return ad::mean_all(per_sample_loss(params, features, labels));
}

Var Model::predict(std::span<const Var>, Var) const {
  throw std::logic_error(describe() + " has no class predictions");
}

bool Model::is_norm_param(const std::string&) const { return false; }

std::string to_string(Activation a) { return a == Activation::kGelu ? "gelu" : "relu"; }

std::string to_string(NormPlacement p) {
  switch (p) {
    case NormPlacement::kBefore:
      return "before";
    case NormPlacement::kAfter:
      return "after";
    case NormPlacement::kNone:
      return "none";
  }
  return "none";
}

std::string to_string(Pooling p) {
  switch (p) {
    case Pooling::kAvg:
      return "avg";
    case Pooling::kMax:
      return "max";
    case Pooling::kNone:
      return "none";
  }
  return "none";
}

Activation parse_activation(const std::string& s) {
  if (s == "gelu") return Activation::kGelu;
  if (s == "relu") return Activation::kRelu;
  throw std::invalid_argument("unknown activation '" + s + "' (expected gelu|relu)");
}

NormPlacement parse_norm_placement(const std::string& s) {
  if (s == "before") return NormPlacement::kBefore;
  if (s == "after") return NormPlacement::kAfter;
  if (s == "none") return NormPlacement::kNone;
  throw std::invalid_argument("unknown norm placement '" + s + "' (expected before|after|none)");
}

Pooling parse_pooling(const std::string& s) {
  if (s == "avg") return Pooling::kAvg;
  if (s == "max") return Pooling::kMax;
  if (s == "none") return Pooling::kNone;
  throw std::invalid_argument("unknown pooling '" + s + "' (expected avg|max|none)");
}

// Parameter naming: hidden layer i owns "l<i>.w", "l<i>.b" and, with
// normalization, "n<i>.g" / "n<i>.b"; the head owns "out.w" / "out.b".
// Layer indices are zero-padded so lexical order matches depth.
Mlp::Mlp(MlpSpec spec) : spec_(std::move(spec)) {
  if (spec_.input_dim == 0 || spec_.output_dim == 0) throw std::invalid_argument("mlp: zero input/output width");
  if (!(spec_.final_scale > 0.0)) throw std::invalid_argument("mlp: final_scale must be > 0");
  struct Entry {
    std::string name;
    Shape shape;
  };
  std::vector<Entry> entries;
  auto tag = [](char kind, std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%c%02zu", kind, i);
    return std::string(buf);
  };
  std::size_t in = spec_.input_dim;
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    const std::size_t width = spec_.hidden[i];
    if (width == 0) throw std::invalid_argument("mlp: zero hidden width");
    if (spec_.pooling != Pooling::kNone && width % 2 != 0) {
      throw std::invalid_argument("mlp: pooling needs even hidden widths");
    }
    entries.push_back({tag('l', i) + ".w", {in, width}});
    entries.push_back({tag('l', i) + ".b", {width}});
    if (spec_.norm != NormPlacement::kNone) {
      entries.push_back({tag('n', i) + ".g", {width}});
      entries.push_back({tag('n', i) + ".b", {width}});
    }
    in = spec_.pooling == Pooling::kNone ? width : width / 2;
  }
  entries.push_back({"out.w", {in, spec_.output_dim}});
  entries.push_back({"out.b", {spec_.output_dim}});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.name < b.name; });
  for (const auto& e : entries) {
    names_.push_back(e.name);
    shapes_.push_back(e.shape);
  }
  auto index_of = [&](const std::string& name) {
    return static_cast<int>(std::find(names_.begin(), names_.end(), name) - names_.begin());
  };
  in = spec_.input_dim;
  for (std::size_t i = 0; i < spec_.hidden.size(); ++i) {
    Layer layer;
    layer.in = in;
    layer.out = spec_.hidden[i];
    layer.w = index_of(tag('l', i) + ".w");
    layer.b = index_of(tag('l', i) + ".b");
    if (spec_.norm != NormPlacement::kNone) {
      layer.gain = index_of(tag('n', i) + ".g");
      layer.shift = index_of(tag('n', i) + ".b");
    }
    hidden_.push_back(layer);
    in = spec_.pooling == Pooling::kNone ? layer.out : layer.out / 2;
  }
  head_.in = in;
  head_.out = spec_.output_dim;
  head_.w = index_of("out.w");
  head_.b = index_of("out.b");
}

std::vector<NamedTensor> Mlp::init(std::uint64_t seed) const {
  std::vector<NamedTensor> params;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    Tensor t(shapes_[i]);
    const std::string& name = names_[i];
    if (name.size() > 2 && name.compare(name.size() - 2, 2, ".w") == 0) {
      // Per-tensor stream so adding a layer never changes another layer's init.
      Rng rng = Rng::stream(seed, "init:" + name);
      const double sd = 1.0 / std::sqrt(static_cast<double>(shapes_[i][0]));
      for (double& v : t.data()) v = sd * rng.normal();
    } else if (name.size() > 2 && name.compare(name.size() - 2, 2, ".g") == 0) {
      for (double& v : t.data()) v = 1.0;
    }
    params.push_back({name, std::move(t)});
  }
  return params;
}

Var Mlp::predict(std::span<const Var> params, Var features) const {
  if (params.size() != names_.size()) throw ShapeError("mlp: wrong parameter count");
  Var h = features;
  for (const Layer& layer : hidden_) {
    Var a = ad::add_row(ad::matmul(h, param(params, layer.w)), param(params, layer.b));
    auto norm = [&](Var x) {
      const Var n = ad::normalize(x, spec_.norm_eps, ad::NormAxis::kFeature);
      const std::size_t m = x.value().rows();
      return ad::add_row(ad::mul(n, ad::broadcast_rows(param(params, layer.gain), m)), param(params, layer.shift));
    };
    if (spec_.norm == NormPlacement::kBefore) a = norm(a);
    a = spec_.activation == Activation::kGelu ? ad::gelu(a) : ad::relu(a);
    if (spec_.norm == NormPlacement::kAfter) a = norm(a);
    if (spec_.pooling == Pooling::kAvg) a = ad::avg_pool(a, 2);
    if (spec_.pooling == Pooling::kMax) a = ad::max_pool(a, 2);
    h = a;
  }
  const Var logits = ad::add_row(ad::matmul(h, param(params, head_.w)), param(params, head_.b));
  return ad::scale(logits, spec_.final_scale);
}

Var Mlp::per_sample_loss(std::span<const Var> params, Var features, Var labels) const {
  const Var out = predict(params, features);
  if (spec_.loss == LossKind::kCrossEntropy) return ad::softmax_cross_entropy(out, labels);
  return ad::scale(ad::sum_cols(ad::square(ad::sub(out, labels))), 0.5);
}

bool Mlp::is_norm_param(const std::string& name) const { return !name.empty() && name[0] == 'n'; }

std::string Mlp::describe() const {
  std::ostringstream os;
  os << "mlp(" << spec_.input_dim;
  for (std::size_t w : spec_.hidden) os << "-" << w;
  os << "-" << spec_.output_dim << ", " << to_string(spec_.activation) << ", norm=" << to_string(spec_.norm)
     << ", pool=" << to_string(spec_.pooling) << ", scale=" << spec_.final_scale << ")";
  return os.str();
}

std::size_t Mlp::parameter_count() const {
  std::size_t total = 0;
  for (const auto& s : shapes_) total += shape_size(s);
  return total;
}

Quadratic::Quadratic(Tensor curvature, Tensor linear, double offset, Tensor start)
    : curvature_(std::move(curvature)), linear_(std::move(linear)), offset_(offset), start_(std::move(start)) {
  if (linear_.rank() != 1) throw ShapeError("quadratic: linear term must be a vector");
  const std::size_t p = linear_.size();
  if (curvature_.shape() != Shape{p, p}) throw ShapeError("quadratic: curvature must be [p, p]");
  if (start_.size() == 0) start_ = Tensor(Shape{p});
  if (start_.shape() != Shape{p}) throw ShapeError("quadratic: start must be [p]");
}

std::shared_ptr<Quadratic> Quadratic::scalar(double a, double b, double c, double t0) {
  return std::make_shared<Quadratic>(Tensor::matrix(1, 1, {a}), Tensor::vector({b}), c, Tensor::vector({t0}));
}

std::vector<NamedTensor> Quadratic::init(std::uint64_t) const { return {{"theta", start_}}; }

Var Quadratic::objective(Var theta) const {
  Tape& tape = theta.tape();
  const std::size_t p = linear_.size();
  const Var row = ad::reshape(theta, Shape{1, p});
  const Var quad = ad::scale(ad::sum_all(ad::mul(ad::matmul(row, tape.constant(curvature_)), row)), 0.5);
  const Var lin = ad::sum_all(ad::mul(tape.constant(linear_), theta));
  return ad::add_const(ad::sub(quad, lin), offset_);
}

Var Quadratic::batch_loss(std::span<const Var> params, Var, Var) const { return objective(params[0]); }

Var Quadratic::per_sample_loss(std::span<const Var> params, Var features, Var) const {
  return ad::broadcast_scalar(objective(params[0]), Shape{features.value().rows()});
}

double Quadratic::value(const Tensor& theta) const {
  Tape tape;
  return objective(tape.constant(theta)).value().item();
}

std::string Quadratic::describe() const { return "quadratic(p=" + std::to_string(linear_.size()) + ")"; }

}  // namespace mgd::train
