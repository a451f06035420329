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

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "mgd/dataset.hpp"
#include "mgd/snapshot.hpp"

namespace mgd::data {
namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    out.push_back(field);
  }
  return out;
}

double parse_number(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw DataError("csv line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint32_t read_be32(std::span<const std::byte> bytes, std::size_t pos) {
  std::uint32_t v = 0;
  for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<std::uint32_t>(bytes[pos + i]);
  return v;
}

void put_be32(std::vector<std::byte>& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::byte>((v >> shift) & 0xFF));
}

struct IdxArray {
  std::vector<std::size_t> dims;
  std::vector<double> values;
  std::uint8_t type = 0;
};

// Parses an IDX file: two zero bytes, a type byte, a rank byte, big-endian
// u32 extents, then big-endian payload.
IdxArray parse_idx(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("file not found: " + path.string());
  const std::vector<std::byte> bytes = read_file_bytes(path);
  if (bytes.size() < 4 || bytes[0] != std::byte{0} || bytes[1] != std::byte{0}) {
    throw DataError("malformed IDX header in " + path.string());
  }
  IdxArray arr;
  arr.type = static_cast<std::uint8_t>(bytes[2]);
  const auto rank = static_cast<std::size_t>(bytes[3]);
  std::size_t width = 0;
  switch (arr.type) {
    case 0x08:
      width = 1;
      break;
    case 0x0D:
      width = 4;
      break;
    case 0x0E:
      width = 8;
      break;
    default:
      throw DataError("unsupported IDX element type in " + path.string());
  }
  if (rank == 0 || bytes.size() < 4 + 4 * rank) throw DataError("malformed IDX header in " + path.string());
  std::size_t total = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t e = read_be32(bytes, 4 + 4 * i);
    if (e != 0 && total > std::numeric_limits<std::size_t>::max() / e / width) {
      throw DataError("IDX dimension overflow in " + path.string());
    }
    total *= e;
    arr.dims.push_back(e);
  }
  const std::size_t offset = 4 + 4 * rank;
  if (bytes.size() - offset != total * width) {
    throw DataError("IDX payload size does not match header in " + path.string());
  }
  arr.values.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const std::size_t p = offset + i * width;
    if (width == 1) {
      arr.values[i] = static_cast<double>(static_cast<std::uint8_t>(bytes[p]));
    } else if (width == 4) {
      arr.values[i] = static_cast<double>(std::bit_cast<float>(read_be32(bytes, p)));
    } else {
      const std::uint64_t hi = read_be32(bytes, p), lo = read_be32(bytes, p + 4);
      arr.values[i] = std::bit_cast<double>((hi << 32) | lo);
    }
  }
  return arr;
}

Tensor one_hot(const std::vector<std::size_t>& cls, std::size_t classes) {
  Tensor labels(Shape{cls.size(), classes});
  for (std::size_t i = 0; i < cls.size(); ++i) labels.at(i, cls[i]) = 1.0;
  return labels;
}

bool is_one_hot(const Dataset& ds) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < ds.label_dim(); ++j) {
      const double v = ds.labels.at(i, j);
      if (v != 0.0 && v != 1.0) return false;
    }
  }
  return true;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("file not found: " + path.string());
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line) || line.empty()) throw DataError("malformed CSV header in " + path.string());
  const std::vector<std::string> header = split_fields(line);

  std::size_t d = 0;
  while (d < header.size() && header[d] == "f" + std::to_string(d)) ++d;
  if (d == 0) throw DataError("CSV header must start with f0 in " + path.string());
  enum class LabelKind { kIndex, kSoft, kRegression } kind;
  std::size_t soft = 0;
  const std::size_t rest = header.size() - d;
  if (rest == 1 && header[d] == "label") {
    kind = LabelKind::kIndex;
  } else if (rest == 1 && header[d] == "y") {
    kind = LabelKind::kRegression;
  } else {
    while (soft < rest && header[d + soft] == "p" + std::to_string(soft)) ++soft;
    if (soft == 0 || soft != rest) throw DataError("unrecognized CSV label columns in " + path.string());
    kind = LabelKind::kSoft;
  }

  std::vector<double> feats, targets;
  std::vector<std::size_t> classes;
  std::size_t n = 0, line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    const std::vector<std::string> fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError("csv line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) + " fields");
    }
    for (std::size_t j = 0; j < d; ++j) feats.push_back(parse_number(fields[j], line_no));
    if (kind == LabelKind::kIndex) {
      const double c = parse_number(fields[d], line_no);
      if (c < 0 || c != std::floor(c)) throw DataError("csv line " + std::to_string(line_no) + ": bad class index");
      classes.push_back(static_cast<std::size_t>(c));
    } else {
      for (std::size_t j = d; j < fields.size(); ++j) targets.push_back(parse_number(fields[j], line_no));
    }
    ++n;
  }
  if (n == 0) throw DataError("CSV has no rows: " + path.string());

  Dataset ds;
  ds.features = Tensor(Shape{n, d}, std::move(feats));
  ds.provenance = "csv:" + path.filename().string();
  switch (kind) {
    case LabelKind::kIndex: {
      std::size_t c = 2;
      for (std::size_t k : classes) c = std::max(c, k + 1);
      ds.labels = one_hot(classes, c);
      break;
    }
    case LabelKind::kSoft:
      ds.labels = Tensor(Shape{n, soft}, std::move(targets));
      break;
    case LabelKind::kRegression:
      ds.regression = true;
      ds.labels = Tensor(Shape{n, 1}, std::move(targets));
      break;
  }
  ds.validate();
  return ds;
}

void save_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  const std::size_t d = ds.feature_dim(), c = ds.label_dim();
  const bool index_labels = !ds.regression && is_one_hot(ds);
  for (std::size_t j = 0; j < d; ++j) out << 'f' << j << ',';
  if (ds.regression) {
    out << "y\n";
  } else if (index_labels) {
    out << "label\n";
  } else {
    for (std::size_t j = 0; j < c; ++j) out << 'p' << j << (j + 1 < c ? "," : "\n");
  }
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) out << format_double(ds.features.at(i, j)) << ',';
    if (ds.regression) {
      out << format_double(ds.labels.at(i, 0)) << '\n';
    } else if (index_labels) {
      out << ds.label_of(i) << '\n';
    } else {
      for (std::size_t j = 0; j < c; ++j) out << format_double(ds.labels.at(i, j)) << (j + 1 < c ? "," : "\n");
    }
  }
  if (!out) throw DataError("short write to " + path.string());
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const IdxArray img = parse_idx(images);
  const IdxArray lab = parse_idx(labels);
  if (lab.dims.size() != 1) throw DataError("IDX label file must be rank 1: " + labels.string());
  const std::size_t n = img.dims[0];
  if (lab.dims[0] != n) throw DataError("IDX image and label counts differ");
  const std::size_t d = n == 0 ? 0 : img.values.size() / n;
  std::vector<double> feats = img.values;
  if (img.type == 0x08) {
    for (double& v : feats) v /= 255.0;
  }
  std::vector<std::size_t> classes(n);
  std::size_t c = 2;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = lab.values[i];
    if (v < 0 || v != std::floor(v)) throw DataError("IDX label is not a class index");
    classes[i] = static_cast<std::size_t>(v);
    c = std::max(c, classes[i] + 1);
  }
  Dataset ds;
  ds.features = Tensor(Shape{n, d}, std::move(feats));
  ds.labels = one_hot(classes, c);
  ds.provenance = "idx:" + images.filename().string();
  ds.validate();
  return ds;
}

void save_idx(const Dataset& ds, const std::filesystem::path& images, const std::filesystem::path& labels) {
  if (ds.regression || !is_one_hot(ds)) throw DataError("IDX export needs one-hot classification labels");
  std::vector<std::byte> img;
  img.insert(img.end(), {std::byte{0}, std::byte{0}, std::byte{0x0E}, std::byte{2}});
  put_be32(img, static_cast<std::uint32_t>(ds.size()));
  put_be32(img, static_cast<std::uint32_t>(ds.feature_dim()));
  for (double v : ds.features.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    put_be32(img, static_cast<std::uint32_t>(bits >> 32));
    put_be32(img, static_cast<std::uint32_t>(bits & 0xFFFFFFFFu));
  }
  std::vector<std::byte> lab;
  lab.insert(lab.end(), {std::byte{0}, std::byte{0}, std::byte{0x08}, std::byte{1}});
  put_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t cls = ds.label_of(i);
    if (cls > 255) throw DataError("IDX export supports at most 256 classes");
    lab.push_back(static_cast<std::byte>(cls));
  }
  write_file_bytes(images, img);
  write_file_bytes(labels, lab);
}

Dataset load_idx_or_csv(const std::filesystem::path& path, const std::optional<std::filesystem::path>& labels_path) {
  if (!std::filesystem::exists(path)) throw DataError("file not found: " + path.string());
  if (path.extension() == ".csv") return load_csv(path);
  if (labels_path) return load_idx(path, *labels_path);
  std::string name = path.filename().string();
  const auto pos = name.find("images");
  if (pos == std::string::npos) throw DataError("cannot infer IDX label file for " + path.string());
  name.replace(pos, 6, "labels");
  return load_idx(path, path.parent_path() / name);
}

}  // namespace mgd::data
