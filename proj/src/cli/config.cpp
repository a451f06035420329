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
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mgd/cli.hpp"
#include "mgd/csv.hpp"

#ifndef MGD_VERSION
#define MGD_VERSION "0.0.0"
#endif

namespace mgd::cli {

namespace {

const std::vector<KeySpec> kRunKeys = {
    {"run.seed", "0", "master seed; every random stream derives from it"},
    {"run.out_dir", "mgd-out", "output root; files go to <out_dir>/<command>-<config hash>"},
    {"run.k", "4", "checkpoint tree arity"},
    {"run.precision", "f64", "f64 or f32"},
    {"run.memory_budget", "0", "most optimizer states held in memory (0 = unlimited); extras spill to disk"},
    {"run.max_train_steps", "100000", "largest training horizon accepted"},
};

const std::vector<KeySpec> kTrainingKeys = {
    {"data.kind", "two-gaussians", "synthetic generator: two-gaussians, ring"},
    {"data.noise", "0.15", "synthetic noise level"},
    {"data.path", "", "CSV or IDX file to load instead of synthetic data"},
    {"data.split", "0.5;0.25;0.25", "fractions used to split data.path into the command's three sets"},
    {"model.hidden", "16", "hidden widths, ';'-separated (empty = linear model)"},
    {"model.norm", "before", "normalization placement: before, after, none"},
    {"model.final_scale", "0.125", "output layer scale"},
    {"model.activation", "gelu", "gelu or relu"},
    {"model.pooling", "avg", "avg, max or none"},
    {"train.rule", "sgd", "sgd, momentum or adam"},
    {"train.lr", "0.5", "learning rate"},
    {"train.steps", "64", "optimizer steps per training run"},
    {"train.batch_size", "16", "minibatch size"},
    {"train.momentum", "0.9", "momentum coefficient"},
    {"train.weight_decay", "0", "decoupled weight decay"},
};

const std::vector<KeySpec> kCheckKeys = {
    {"check.rules", "sgd;momentum;adam", "update rules to test"},
    {"check.metas", "weights;rows;keypoints", "metaparameters: weights, rows, keypoints"},
    {"check.steps", "16", "training horizon"},
    {"check.k_values", "2;4;8", "tree arities"},
    {"check.n", "32", "training set size"},
    {"check.hidden", "8", "hidden width of the test MLP"},
    {"check.lr", "0.1", "learning rate for sgd and momentum"},
    {"check.adam_lr", "0.02", "learning rate for adam"},
    {"check.directions", "3", "random directions for the finite-difference check"},
    {"check.h", "1e-5", "finite-difference step"},
    {"check.tol", "1e-4", "largest accepted relative finite-difference error"},
    {"check.corrupt_replay", "false", "test hook: perturb re-executed steps"},
};

const std::vector<KeySpec> kScanKeys = {
    {"scan.width", "8", "base hidden width (the grid also uses twice this)"},
    {"scan.batch_size", "16", "base batch size (the grid also uses twice this)"},
    {"scan.steps", "64", "training horizon"},
    {"scan.rule", "sgd", "update rule"},
    {"scan.lr", "1.0", "learning rate"},
    {"scan.n", "128", "training and evaluation set size"},
    {"scan.noise", "0.15", "synthetic noise level"},
    {"scan.probes", "3", "probe directions per configuration"},
    {"scan.perturbed_rows", "16", "training rows whose features form the metaparameter"},
    {"scan.h", "", "probe step (empty = 1e-3 * (|z0|_inf + 1))"},
};

const std::vector<KeySpec> kSelectKeys = {
    {"select.pool_n", "200", "candidate pool size"},
    {"select.target_n", "200", "target set size"},
    {"select.val_n", "200", "validation set size"},
    {"select.flip_rate", "0.1", "fraction of pool labels flipped"},
    {"select.p", "0.3", "step mask probability"},
    {"select.rounds", "10", "MGD rounds"},
    {"select.surrogate_iteration", "", "iteration carrying the weights (empty = 90% of train.steps)"},
    {"select.weight_scale", "1", "scale of the weighted loss term"},
    {"select.eval_fraction", "1", "fraction of the target set scored per round"},
    {"select.fixed_size", "false", "keep the selected-set size fixed"},
};

const std::vector<KeySpec> kPoisonKeys = {
    {"poison.train_n", "400", "training set size"},
    {"poison.val_n", "200", "validation set size"},
    {"poison.test_n", "400", "held-out test set size"},
    {"poison.budget", "0.025", "fraction of training rows replaced"},
    {"poison.step", "0.05", "signed ascent step"},
    {"poison.rounds", "50", "MGD rounds"},
    {"poison.val_fraction", "0.5", "validation fraction scored per round"},
    {"poison.fresh_seed", "true", "retrain with a new seed every round"},
    {"poison.transfer_seeds", "5", "seeds for the transfer evaluation"},
    {"transfer.norm", "after", "normalization placement of the transfer model"},
    {"transfer.final_scale", "1.0", "output scale of the transfer model"},
};

const std::vector<KeySpec> kLrKeys = {
    {"lr.problem", "mlp", "mlp or quadratic"},
    {"lr.keypoints", "5", "schedule keypoints"},
    {"lr.init", "0.05", "flat initial schedule value"},
    {"lr.alpha", "0.05", "signed step on the keypoints"},
    {"lr.rounds", "20", "MGD rounds"},
    {"lr.floor", "1e-4", "smallest keypoint value"},
    {"lr.train_n", "200", "training set size"},
    {"lr.target_n", "200", "target set size"},
    {"lr.test_n", "200", "test set size"},
    {"lr.grid_points", "0", "flat-schedule grid size for comparison (0 = no grid)"},
    {"lr.grid_max", "2.0", "largest learning rate on the grid"},
    {"quadratic.curvature", "1", "diagonal curvature of the quadratic problem"},
    {"quadratic.linear", "1", "linear term of the quadratic problem"},
};

const std::vector<KeySpec> kBenchKeys = {
    {"bench.n", "8;27;81;256;1024", "state counts"},
    {"bench.k", "2;3;4;8", "tree arities"},
    {"bench.timing", "false", "add a wall_time_ms column (makes output run-dependent)"},
};

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ';')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw ConfigError(key + ": '" + text + "' is not a valid number");
  return value;
}

}  // namespace

std::vector<std::string> command_names() {
  return {"metagrad-check", "smoothness-scan", "select-data", "poison", "lr-opt", "bench-replay"};
}

std::vector<KeySpec> schema(std::string_view command) {
  std::vector<KeySpec> keys = kRunKeys;
  auto append = [&](const std::vector<KeySpec>& more) { keys.insert(keys.end(), more.begin(), more.end()); };
  if (command == "metagrad-check") {
    append(kCheckKeys);
  } else if (command == "smoothness-scan") {
    append(kScanKeys);
  } else if (command == "select-data") {
    append(kTrainingKeys);
    append(kSelectKeys);
  } else if (command == "poison") {
    append(kTrainingKeys);
    append(kPoisonKeys);
  } else if (command == "lr-opt") {
    append(kTrainingKeys);
    append(kLrKeys);
  } else if (command == "bench-replay") {
    append(kBenchKeys);
  } else {
    throw ConfigError("unknown command '" + std::string(command) + "'");
  }
  return keys;
}

Config::Config(std::string command) : command_(std::move(command)), schema_(schema(command_)) {
  for (const auto& k : schema_) values_[k.name] = k.default_value;
}

void Config::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown key '" + key + "' for command " + command_);
  it->second = trim(value);
}

void Config::set_assignment(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  set(trim(assignment.substr(0, eq)), std::string(assignment.substr(eq + 1)));
}

void Config::load_text(std::string_view text, std::string_view origin) {
  std::string section = "run";
  std::size_t line_no = 0;
  std::stringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const std::string where = std::string(origin) + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    try {
      set(section + "." + key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  load_text(buf.str(), path.string());
}

const std::string& Config::str(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("internal: key '" + key + "' missing from the schema");
  return it->second;
}

double Config::real(const std::string& key) const { return parse_number<double>(key, str(key)); }
std::size_t Config::count(const std::string& key) const { return parse_number<std::size_t>(key, str(key)); }
std::uint64_t Config::u64(const std::string& key) const { return parse_number<std::uint64_t>(key, str(key)); }

bool Config::flag(const std::string& key) const {
  const std::string& v = str(key);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::vector<double> Config::reals(const std::string& key) const {
  std::vector<double> out;
  for (const auto& item : split_list(str(key))) out.push_back(parse_number<double>(key, item));
  return out;
}

std::vector<std::size_t> Config::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& item : split_list(str(key))) out.push_back(parse_number<std::size_t>(key, item));
  return out;
}

std::vector<std::string> Config::words(const std::string& key) const { return split_list(str(key)); }

std::string Config::resolved() const {
  std::string out = "# command = " + command_ + "\n";
  std::string section;
  for (const auto& k : schema_) {
    const auto dot = k.name.find('.');
    const std::string sec = k.name.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "[" : "\n[") + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(dot + 1) + " = " + values_.at(k.name) + "\n";
  }
  return out;
}

std::string Config::hash() const {
  // The output location says where results go, not what they are.
  std::string text;
  std::stringstream in(resolved());
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("out_dir = ", 0) != 0) text += line + "\n";
  }
  return io::config_hash(text);
}

std::filesystem::path output_dir(const Config& config) {
  return std::filesystem::path(config.str("run.out_dir")) / (config.command() + "-" + config.hash());
}

std::string version() { return MGD_VERSION; }

}  // namespace mgd::cli
