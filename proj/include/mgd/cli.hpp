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

#include <filesystem>
#include <map>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace mgd::cli {

enum ExitCode : int { kOk = 0, kConfigError = 2, kNumericalFailure = 3, kToleranceBreach = 4 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct KeySpec {
  /// "section.key".
  std::string name;
  std::string default_value;
  std::string help;
};

/// Keys accepted by a subcommand, common keys first.
std::vector<KeySpec> schema(std::string_view command);
std::vector<std::string> command_names();

/// Resolved key=value settings for one subcommand. Every key is declared
/// in the command's schema; anything else is a ConfigError.
class Config {
 public:
  explicit Config(std::string command);

  /// INI-style text: `[section]` headers, `key = value` lines, '#' or ';'
  /// comments. Keys before any header belong to the "run" section.
  void load_text(std::string_view text, std::string_view origin = "<text>");
  void load_file(const std::filesystem::path& path);
  /// "section.key=value".
  void set_assignment(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  const std::string& command() const { return command_; }
  const std::string& str(const std::string& key) const;
  double real(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t u64(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> reals(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;
  std::vector<std::string> words(const std::string& key) const;
  bool empty(const std::string& key) const { return str(key).empty(); }

  /// Canonical text of every key in schema order; re-parses to the same config.
  std::string resolved() const;
  /// 16 hex digits identifying `resolved()`.
  std::string hash() const;

 private:
  std::string command_;
  std::vector<KeySpec> schema_;
  std::map<std::string, std::string> values_;
};

/// Runs a subcommand; progress goes to `log`. Returns an ExitCode.
int run_command(const Config& config, std::ostream& log);

/// Directory the command writes to: <out_dir>/<command>-<hash>.
std::filesystem::path output_dir(const Config& config);

std::string version();

}  // namespace mgd::cli
