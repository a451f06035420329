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

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mgd::io {

/// Identifies the run that produced an output file.
struct Provenance {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;
};

/// 16 hex digits of FNV-1a over the resolved config text.
std::string config_hash(std::string_view resolved_config);

/// Shortest round-trip form for doubles ("nan"/"inf" spelled out).
std::string fmt(double v);
std::string fmt(std::size_t v);
std::string fmt(bool v);
/// Doubles joined with ';' (for vector-valued cells).
std::string fmt_list(const std::vector<double>& values);

class Table {
 public:
  explicit Table(std::vector<std::string> columns) : columns_(std::move(columns)) {}
  /// Throws std::invalid_argument if the row width is wrong.
  void add(std::vector<std::string> row);
  const std::vector<std::string>& columns() const { return columns_; }
  const std::vector<std::vector<std::string>>& rows() const { return rows_; }

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

/// CSV with a leading '#' comment line carrying the provenance. Cells with
/// commas or quotes are quoted.
void write_csv(const std::filesystem::path& path, const Provenance& provenance, const Table& table);
std::string to_csv(const Provenance& provenance, const Table& table);

/// JSON manifest: provenance plus named artifacts with their checksums.
struct Artifact {
  std::string name;
  std::string path;
  std::uint64_t checksum = 0;
};
void write_manifest(const std::filesystem::path& path, const Provenance& provenance,
                    const std::vector<Artifact>& artifacts);

}  // namespace mgd::io
