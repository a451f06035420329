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

// Command-line driver: one subcommand per experiment.
#include <iostream>
#include <utility>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mgd/cli.hpp"

namespace {

struct CommonFlags {
  std::optional<std::string> config_path;
  std::optional<std::string> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> k;
  std::optional<std::string> precision;
  std::vector<std::string> assignments;
  bool print_config = false;
};

void add_common(CLI::App* sub, CommonFlags& flags) {
  sub->add_option("--config", flags.config_path, "key = value config file with [section] headers");
  sub->add_option("--seed", flags.seed, "master seed (run.seed)");
  sub->add_option("--out-dir", flags.out_dir, "output root (run.out_dir)");
  sub->add_option("--k", flags.k, "checkpoint tree arity (run.k)");
  sub->add_option("--precision", flags.precision, "f64 or f32 (run.precision)")->check(CLI::IsMember({"f64", "f32"}));
  sub->add_option("--set", flags.assignments, "override any key: section.key=value (repeatable)");
  sub->add_flag("--print-config", flags.print_config, "print the resolved config and exit");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Metagradient experiments: REPLAY checks, smoothness scans, data selection, poisoning and "
               "learning-rate schedule search."};
  app.set_version_flag("--version", mgd::cli::version());
  app.require_subcommand(1);
  app.footer("Spill files go to $MGD_SCRATCH_DIR when set. Exit codes: 0 ok, 2 config error, 3 numerical "
             "failure, 4 tolerance breach.");

  CommonFlags flags;
  const std::pair<const char*, const char*> commands[] = {
      {"metagrad-check", "replay vs stepwise metagradients, finite differences and tree accounting"},
      {"smoothness-scan", "sign-agreement smoothness of a grid of model configurations"},
      {"select-data", "choose training-set counts by metagradient descent"},
      {"poison", "optimize poisoned training samples and measure transfer"},
      {"lr-opt", "search a piecewise-linear learning-rate schedule"},
      {"bench-replay", "checkpoint tree storage and replay counts over (n, k)"},
  };
  for (const auto& [name, about] : commands) add_common(app.add_subcommand(name, about), flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : mgd::cli::kConfigError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    mgd::cli::Config config(command);
    // The file first, then dedicated flags, then --set.
    if (flags.config_path) config.load_file(*flags.config_path);
    if (flags.seed) config.set("run.seed", *flags.seed);
    if (flags.out_dir) config.set("run.out_dir", *flags.out_dir);
    if (flags.k) config.set("run.k", *flags.k);
    if (flags.precision) config.set("run.precision", *flags.precision);
    for (const auto& a : flags.assignments) config.set_assignment(a);
    if (flags.print_config) {
      std::cout << config.resolved();
      return mgd::cli::kOk;
    }
    return mgd::cli::run_command(config, std::cerr);
  } catch (const mgd::cli::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return mgd::cli::kConfigError;
  }
}
