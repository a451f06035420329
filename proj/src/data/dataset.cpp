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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mgd/dataset.hpp"
#include "mgd/rng.hpp"
#include "mgd/snapshot.hpp"

namespace mgd::data {

std::size_t Dataset::label_of(std::size_t i) const {
  const std::size_t c = label_dim();
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (labels.at(i, j) > labels.at(i, best)) best = j;
  }
  return best;
}

void Dataset::validate() const {
  if (features.rank() != 2 || labels.rank() != 2) throw DataError("features and labels must be matrices");
  if (features.rows() != labels.rows()) throw DataError("feature/label row counts differ");
  for (double v : features.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DataError("feature outside [0,1]");
  }
  if (regression) {
    if (labels.cols() != 1) throw DataError("regression targets must be a single column");
    if (!labels.all_finite()) throw DataError("non-finite regression target");
    return;
  }
  for (std::size_t i = 0; i < labels.rows(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < labels.cols(); ++j) {
      const double v = labels.at(i, j);
      if (!(v >= 0.0)) throw DataError("negative label mass in row " + std::to_string(i));
      s += v;
    }
    if (std::abs(s - 1.0) > 1e-9) throw DataError("label row " + std::to_string(i) + " does not sum to 1");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  const std::size_t d = feature_dim(), c = label_dim();
  Dataset out;
  out.features = Tensor(Shape{rows.size(), d});
  out.labels = Tensor(Shape{rows.size(), c});
  out.regression = regression;
  out.provenance = provenance + "|subset";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= size()) throw DataError("subset index out of range");
    std::copy_n(features.data().data() + rows[r] * d, d, out.features.data().data() + r * d);
    std::copy_n(labels.data().data() + rows[r] * c, c, out.labels.data().data() + r * c);
  }
  return out;
}

SyntheticKind parse_synthetic_kind(const std::string& name) {
  if (name == "two-gaussians") return SyntheticKind::kTwoGaussians;
  if (name == "ring") return SyntheticKind::kRing;
  if (name == "linear-regression") return SyntheticKind::kLinearRegression;
  throw DataError("unknown synthetic dataset kind '" + name + "'");
}

std::string synthetic_kind_name(SyntheticKind kind) {
  switch (kind) {
    case SyntheticKind::kTwoGaussians:
      return "two-gaussians";
    case SyntheticKind::kRing:
      return "ring";
    case SyntheticKind::kLinearRegression:
      return "linear-regression";
  }
  return "unknown";
}

Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n < 2) throw DataError("synthetic dataset needs n >= 2");
  if (!(spec.noise >= 0.0)) throw DataError("synthetic noise must be >= 0");
  if (spec.dim < 1 || (spec.kind == SyntheticKind::kRing && spec.dim < 2)) throw DataError("synthetic dim too small");
  Rng rng = Rng::stream(spec.seed, "synthetic");
  const std::size_t n = spec.n, d = spec.dim;
  Dataset ds;
  ds.features = Tensor(Shape{n, d});
  ds.provenance = synthetic_kind_name(spec.kind) + ":n=" + std::to_string(n) + ":seed=" + std::to_string(spec.seed);
  auto clip = [](double v) { return std::min(1.0, std::max(0.0, v)); };

  switch (spec.kind) {
    case SyntheticKind::kTwoGaussians: {
      ds.labels = Tensor(Shape{n, 2});
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = i % 2;
        const double mean = cls == 0 ? 0.3 : 0.7;
        for (std::size_t j = 0; j < d; ++j) ds.features.at(i, j) = clip(mean + spec.noise * rng.normal());
        ds.labels.at(i, cls) = 1.0;
      }
      break;
    }
    case SyntheticKind::kRing: {
      ds.labels = Tensor(Shape{n, 2});
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = i % 2;
        const double angle = rng.uniform(0.0, 6.283185307179586);
        const double radius = (cls == 0 ? 0.1 : 0.35) + spec.noise * rng.normal();
        ds.features.at(i, 0) = clip(0.5 + radius * std::cos(angle));
        ds.features.at(i, 1) = clip(0.5 + radius * std::sin(angle));
        for (std::size_t j = 2; j < d; ++j) ds.features.at(i, j) = clip(0.5 + spec.noise * rng.normal());
        ds.labels.at(i, cls) = 1.0;
      }
      break;
    }
    case SyntheticKind::kLinearRegression: {
      ds.regression = true;
      ds.labels = Tensor(Shape{n, 1});
      Rng wrng = Rng::stream(spec.seed, "synthetic-weights");
      std::vector<double> w(d);
      for (double& v : w) v = wrng.normal();
      for (std::size_t i = 0; i < n; ++i) {
        double y = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          ds.features.at(i, j) = rng.uniform();
          y += w[j] * ds.features.at(i, j);
        }
        ds.labels.at(i, 0) = y + spec.noise * rng.normal();
      }
      break;
    }
  }
  return ds;
}

std::vector<std::size_t> flip_labels(Dataset& ds, double rate, std::uint64_t seed) {
  if (ds.regression) throw DataError("cannot flip regression targets");
  if (!(rate >= 0.0 && rate <= 1.0)) throw DataError("flip rate outside [0,1]");
  const std::size_t n = ds.size(), c = ds.label_dim();
  const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
  std::vector<std::size_t> perm = Rng::stream(seed, "label-flip").permutation(n);
  std::vector<std::size_t> flipped(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(flipped.begin(), flipped.end());
  for (std::size_t i : flipped) {
    const std::size_t cls = ds.label_of(i);
    for (std::size_t j = 0; j < c; ++j) ds.labels.at(i, j) = 0.0;
    ds.labels.at(i, (cls + 1) % c) = 1.0;
  }
  return flipped;
}

std::vector<std::vector<std::size_t>> split_indices(std::size_t n, std::span<const double> fractions,
                                                    std::uint64_t seed) {
  if (fractions.empty()) throw DataError("split needs at least one fraction");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw DataError("split fraction outside [0,1]");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw DataError("split fractions must sum to 1");
  std::vector<std::size_t> sizes(fractions.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    sizes[i] = static_cast<std::size_t>(std::floor(fractions[i] * static_cast<double>(n)));
    assigned += sizes[i];
  }
  sizes[0] += n - assigned;
  const std::vector<std::size_t> perm = Rng::stream(seed, "split").permutation(n);
  std::vector<std::vector<std::size_t>> out;
  std::size_t pos = 0;
  for (std::size_t s : sizes) {
    out.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(pos), perm.begin() + static_cast<std::ptrdiff_t>(pos + s));
    pos += s;
  }
  return out;
}

std::vector<Dataset> split(const Dataset& ds, std::span<const double> fractions, std::uint64_t seed) {
  std::vector<Dataset> out;
  for (const auto& idx : split_indices(ds.size(), fractions, seed)) out.push_back(ds.subset(idx));
  return out;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  Snapshot snap;
  snap.tensors.push_back({"features", ds.features});
  snap.tensors.push_back({"labels", ds.labels});
  snap.tensors.push_back({"regression", Tensor::scalar(ds.regression ? 1.0 : 0.0)});
  write_snapshot(path, snap);
}

Dataset load_dataset(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("dataset file not found: " + path.string());
  const Snapshot snap = read_snapshot(path);
  Dataset ds;
  ds.features = snap.get("features");
  ds.labels = snap.get("labels");
  ds.regression = snap.get("regression").item() != 0.0;
  ds.provenance = "snapshot:" + path.filename().string();
  ds.validate();
  return ds;
}

std::uint64_t checksum(const Dataset& ds) {
  std::uint64_t h = fnv1a(std::as_bytes(ds.features.data()));
  return fnv1a(std::as_bytes(ds.labels.data()), h);
}

}  // namespace mgd::data
