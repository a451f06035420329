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
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgd/tensor.hpp"

namespace mgd::data {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Features in [0,1] and labels that are either simplex rows (classification)
/// or a single regression target column.
struct Dataset {
  Tensor features;  // [n, d]
  Tensor labels;    // [n, c] one-hot/simplex rows, or [n, 1] regression targets
  bool regression = false;
  std::string provenance;

  std::size_t size() const { return features.rank() == 2 ? features.rows() : 0; }
  std::size_t feature_dim() const { return features.cols(); }
  std::size_t label_dim() const { return labels.cols(); }
  /// Class index of row i (arg-max of its label row).
  std::size_t label_of(std::size_t i) const;

  /// Throws DataError if the box/simplex constraints or shapes are violated.
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

enum class SyntheticKind { kTwoGaussians, kRing, kLinearRegression };

SyntheticKind parse_synthetic_kind(const std::string& name);
std::string synthetic_kind_name(SyntheticKind kind);

struct SyntheticSpec {
  SyntheticKind kind = SyntheticKind::kTwoGaussians;
  std::size_t n = 200;
  double noise = 0.1;
  std::uint64_t seed = 0;
  std::size_t dim = 2;
};

/// Deterministic from the seed; classification kinds alternate labels so
/// classes are balanced.
Dataset gen_synthetic(const SyntheticSpec& spec);

/// Flips round(rate * n) labels chosen by a seeded permutation; returns the
/// flipped indices in ascending order.
std::vector<std::size_t> flip_labels(Dataset& ds, double rate, std::uint64_t seed);

/// Disjoint covering index sets; sizes floor(f * n) with the remainder given
/// to the first split.
std::vector<std::vector<std::size_t>> split_indices(std::size_t n, std::span<const double> fractions,
                                                    std::uint64_t seed);
std::vector<Dataset> split(const Dataset& ds, std::span<const double> fractions, std::uint64_t seed);

// File formats.

/// `.csv` files load as CSV; anything else as an IDX image file whose label
/// file is `labels_path` or the same name with "images" replaced by "labels".
Dataset load_idx_or_csv(const std::filesystem::path& path,
                        const std::optional<std::filesystem::path>& labels_path = std::nullopt);
Dataset load_csv(const std::filesystem::path& path);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Header: f0..f{d-1} followed by `label` (class index, for one-hot rows),
/// p0..p{c-1} (soft labels) or `y` (regression).
void save_csv(const Dataset& ds, const std::filesystem::path& path);
/// IDX with big-endian double payload (type 0x0E) for features and ubyte
/// class indices for labels. Classification datasets with one-hot labels only.
void save_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels);

/// Bit-exact round trip through the snapshot format.
void save_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

std::uint64_t checksum(const Dataset& ds);

}  // namespace mgd::data
