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

#include "mgd/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mgd/rng.hpp"

namespace mgd::io {

std::string config_hash(std::string_view resolved_config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(resolved_config)));
  return buf;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("could not format a number");
  return std::string(buf, end);
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "1" : "0"; }

std::string fmt_list(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ';';
    out += fmt(values[i]);
  }
  return out;
}

void Table::add(std::vector<std::string> row) {
  if (row.size() != columns_.size()) {
    throw std::invalid_argument("row has " + std::to_string(row.size()) + " cells, table has " +
                                std::to_string(columns_.size()) + " columns");
  }
  rows_.push_back(std::move(row));
}

namespace {

std::string cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string quoted = "\"";
  for (char c : s) {
    if (c == '"') quoted += '"';
    quoted += c;
  }
  return quoted + '"';
}

void append_row(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    out += cell(cells[i]);
  }
  out += '\n';
}

}  // namespace

std::string to_csv(const Provenance& provenance, const Table& table) {
  std::string out = "# mgd " + provenance.version + " command=" + provenance.command +
                    " config_hash=" + provenance.config_hash + " seed=" + std::to_string(provenance.seed) + "\n";
  append_row(out, table.columns());
  for (const auto& row : table.rows()) append_row(out, row);
  return out;
}

void write_csv(const std::filesystem::path& path, const Provenance& provenance, const Table& table) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv(provenance, table);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_manifest(const std::filesystem::path& path, const Provenance& provenance,
                    const std::vector<Artifact>& artifacts) {
  nlohmann::ordered_json doc;
  doc["command"] = provenance.command;
  doc["version"] = provenance.version;
  doc["config_hash"] = provenance.config_hash;
  doc["seed"] = provenance.seed;
  doc["artifacts"] = nlohmann::ordered_json::array();
  for (const auto& a : artifacts) {
    char sum[17];
    std::snprintf(sum, sizeof sum, "%016llx", static_cast<unsigned long long>(a.checksum));
    doc["artifacts"].push_back({{"name", a.name}, {"path", a.path}, {"checksum", sum}});
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << doc.dump(2) << '\n';
}

}  // namespace mgd::io
