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
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "mgd/dataset.hpp"
#include "mgd/snapshot.hpp"

using namespace mgd;
using namespace mgd::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mgd_test_data";
  fs::create_directories(dir);
  return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// IDX fixture written byte by byte: 4 images of 2x2 pixels, 2 classes.
void write_idx_fixture(const fs::path& images, const fs::path& labels) {
  write_bytes(images, {0, 0, 0x08, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2,
                       0,   51,  102, 255,  // sample 0
                       255, 102, 51,  0,    // sample 1
                       0,   0,   0,   0,    // sample 2
                       255, 255, 255, 255});
  write_bytes(labels, {0, 0, 0x08, 1, 0, 0, 0, 4, 0, 1, 1, 0});
}

}  // namespace

TEST_CASE("synthetic data is deterministic and class-balanced") {
  SyntheticSpec spec;
  spec.n = 101;
  spec.seed = 4;
  const Dataset a = gen_synthetic(spec), b = gen_synthetic(spec);
  CHECK(a.features.bit_equal(b.features));
  CHECK(a.labels.bit_equal(b.labels));
  CHECK(checksum(a) == checksum(b));
  std::size_t ones = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ones += a.label_of(i);
  CHECK(ones == 50);
  CHECK_NOTHROW(a.validate());

  spec.seed = 5;
  CHECK(checksum(gen_synthetic(spec)) != checksum(a));

  for (auto kind : {SyntheticKind::kRing, SyntheticKind::kLinearRegression}) {
    spec.kind = kind;
    const Dataset d = gen_synthetic(spec);
    CHECK_NOTHROW(d.validate());
    CHECK(d.regression == (kind == SyntheticKind::kLinearRegression));
  }
}

TEST_CASE("noise-free two-gaussians are linearly separable") {
  SyntheticSpec spec;
  spec.noise = 0.0;
  spec.n = 40;
  const Dataset ds = gen_synthetic(spec);
  // The probe x0 + x1 > 1 separates the class means 0.3 and 0.7.
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const bool predicted = ds.features.at(i, 0) + ds.features.at(i, 1) > 1.0;
    CHECK(predicted == (ds.label_of(i) == 1));
  }
}

TEST_CASE("synthetic argument checks") {
  SyntheticSpec spec;
  spec.noise = -0.1;
  CHECK_THROWS_AS(gen_synthetic(spec), DataError);
  spec.noise = 0.1;
  spec.n = 1;
  CHECK_THROWS_AS(gen_synthetic(spec), DataError);
  CHECK_THROWS_AS(parse_synthetic_kind("spiral"), DataError);
  CHECK(parse_synthetic_kind("ring") == SyntheticKind::kRing);
}

TEST_CASE("label flips hit exactly the requested fraction") {
  SyntheticSpec spec;
  spec.n = 200;
  const Dataset clean = gen_synthetic(spec);
  Dataset noisy = clean;
  const auto flipped = flip_labels(noisy, 0.1, 3);
  CHECK(flipped.size() == 20);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < clean.size(); ++i) changed += clean.label_of(i) != noisy.label_of(i);
  CHECK(changed == 20);
  for (std::size_t i : flipped) CHECK(clean.label_of(i) != noisy.label_of(i));
  CHECK(std::is_sorted(flipped.begin(), flipped.end()));
}

TEST_CASE("splits partition the index set") {
  SUBCASE("identity split") {
    const double f[] = {1.0};
    const auto parts = split_indices(7, f, 1);
    REQUIRE(parts.size() == 1);
    std::set<std::size_t> all(parts[0].begin(), parts[0].end());
    CHECK(all.size() == 7);
  }
  SUBCASE("halves") {
    const double f[] = {0.5, 0.5};
    const auto parts = split_indices(10, f, 1);
    CHECK(parts[0].size() == 5);
    CHECK(parts[1].size() == 5);
    std::set<std::size_t> all(parts[0].begin(), parts[0].end());
    all.insert(parts[1].begin(), parts[1].end());
    CHECK(all.size() == 10);
    CHECK(split_indices(10, f, 1) == parts);
  }
  SUBCASE("remainder goes to the first split") {
    const double f[] = {0.3, 0.3, 0.4};
    const auto parts = split_indices(11, f, 2);
    CHECK(parts[0].size() == 4);
    CHECK(parts[1].size() == 3);
    CHECK(parts[2].size() == 4);
  }
  SUBCASE("bad fractions") {
    const double over[] = {0.7, 0.7};
    const double negative[] = {1.5, -0.5};
    CHECK_THROWS_AS(split_indices(10, over, 1), DataError);
    CHECK_THROWS_AS(split_indices(10, negative, 1), DataError);
  }
  SUBCASE("datasets follow their indices") {
    const Dataset ds = gen_synthetic({});
    const double f[] = {0.75, 0.25};
    const auto parts = split(ds, f, 9);
    CHECK(parts[0].size() + parts[1].size() == ds.size());
  }
}

TEST_CASE("IDX fixture loads to known values") {
  const fs::path images = scratch("fixture-images.idx"), labels = scratch("fixture-labels.idx");
  write_idx_fixture(images, labels);
  const Dataset ds = load_idx_or_csv(images);
  REQUIRE(ds.size() == 4);
  REQUIRE(ds.feature_dim() == 4);
  CHECK(ds.features.at(0, 1) == 51.0 / 255.0);
  CHECK(ds.features.at(0, 3) == 1.0);
  CHECK(ds.features.at(1, 0) == 1.0);
  CHECK(ds.features.at(2, 2) == 0.0);
  CHECK(ds.label_of(0) == 0);
  CHECK(ds.label_of(1) == 1);
  CHECK(ds.label_of(3) == 0);
  CHECK(ds.labels.at(1, 1) == 1.0);

  // The same data as a headered CSV.
  const fs::path csv = scratch("fixture.csv");
  {
    std::ofstream out(csv);
    out << "f0,f1,f2,f3,label\n0,0.2,0.4,1,0\n1,0.4,0.2,0,1\n0,0,0,0,1\n1,1,1,1,0\n";
  }
  const Dataset from_csv = load_idx_or_csv(csv);
  CHECK(from_csv.features.bit_equal(ds.features));
  CHECK(from_csv.labels.bit_equal(ds.labels));
}

TEST_CASE("malformed inputs are rejected") {
  const fs::path empty = scratch("empty.idx");
  write_bytes(empty, {});
  CHECK_THROWS_AS(load_idx(empty, empty), DataError);
  const fs::path empty_csv = scratch("empty.csv");
  write_bytes(empty_csv, {});
  CHECK_THROWS_AS(load_csv(empty_csv), DataError);
  CHECK_THROWS_AS(load_idx_or_csv(scratch("missing.csv")), DataError);

  const fs::path truncated = scratch("trunc-images.idx");
  write_bytes(truncated, {0, 0, 0x08, 2, 0, 0, 0, 3, 0, 0, 0, 2, 1, 2});
  CHECK_THROWS_AS(load_idx(truncated, truncated), DataError);

  const fs::path huge = scratch("huge-images.idx");
  write_bytes(huge, {0, 0, 0x0E, 3, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF});
  CHECK_THROWS_AS(load_idx(huge, huge), DataError);

  const fs::path out_of_box = scratch("box.csv");
  {
    std::ofstream out(out_of_box);
    out << "f0,label\n1.5,0\n";
  }
  CHECK_THROWS_AS(load_csv(out_of_box), DataError);
}

TEST_CASE("round trips are bit-exact") {
  SyntheticSpec spec;
  spec.n = 30;
  spec.dim = 3;
  Dataset ds = gen_synthetic(spec);
  // Soft labels exercise the p0..pc columns.
  ds.labels.at(0, 0) = 0.25;
  ds.labels.at(0, 1) = 0.75;

  const fs::path snap = scratch("ds.snap");
  save_dataset(ds, snap);
  const Dataset back = load_dataset(snap);
  CHECK(back.features.bit_equal(ds.features));
  CHECK(back.labels.bit_equal(ds.labels));

  const fs::path csv = scratch("ds.csv");
  save_csv(ds, csv);
  const Dataset from_csv = load_csv(csv);
  CHECK(from_csv.features.bit_equal(ds.features));
  CHECK(from_csv.labels.bit_equal(ds.labels));

  const Dataset hard = gen_synthetic(spec);
  const fs::path img = scratch("rt-images.idx"), lab = scratch("rt-labels.idx");
  save_idx(hard, img, lab);
  const Dataset from_idx = load_idx(img, lab);
  CHECK(from_idx.features.bit_equal(hard.features));
  CHECK(from_idx.labels.bit_equal(hard.labels));

  spec.kind = SyntheticKind::kLinearRegression;
  const Dataset reg = gen_synthetic(spec);
  save_csv(reg, csv);
  const Dataset reg_back = load_csv(csv);
  CHECK(reg_back.regression);
  CHECK(reg_back.labels.bit_equal(reg.labels));
}

TEST_CASE("snapshot decoding guards against corruption") {
  Snapshot snap;
  snap.step = 3;
  snap.tensors.push_back({"a", Tensor::vector({1, 2, 3})});
  auto bytes = encode_snapshot(snap);
  CHECK(decode_snapshot(bytes).get("a").bit_equal(snap.tensors[0].value));
  auto truncated = bytes;
  truncated.pop_back();
  CHECK_THROWS_AS(decode_snapshot(truncated), SnapshotError);
  auto trailing = bytes;
  trailing.push_back(std::byte{0});
  CHECK_THROWS_AS(decode_snapshot(trailing), SnapshotError);
  auto bad_magic = bytes;
  bad_magic[0] = std::byte{'X'};
  CHECK_THROWS_AS(decode_snapshot(bad_magic), SnapshotError);
}
