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
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgd/trainer.hpp"

namespace mgd::replay {

using train::OptimizerState;

/// A re-executed step produced a state that differs from an earlier
/// execution of the same step.
class DeterminismError : public std::runtime_error {
 public:
  DeterminismError(std::size_t index, const std::string& what)
      : std::runtime_error("nondeterministic replay at state " + std::to_string(index) + ": " + what), index_(index) {}
  std::size_t index() const { return index_; }

 private:
  std::size_t index_;
};

struct TreeOptions {
  /// Most states kept in memory at once; 0 means no limit. Extra states
  /// spill to disk in the snapshot format.
  std::size_t memory_budget = 0;
  /// Spill directory; empty means $MGD_SCRATCH_DIR, else the system temp dir.
  std::filesystem::path spill_dir;
  std::string run_id = "run";
};

struct TreeStats {
  std::size_t live = 0;
  std::size_t peak_live = 0;
  std::size_t forward_steps = 0;
  std::size_t replayed_steps = 0;
  std::size_t spilled = 0;
};

/// s_{index+1} from s_index. Must be bit-deterministic.
using Advance = std::function<OptimizerState(const OptimizerState&, std::size_t index)>;
using Visit = std::function<void(std::size_t index, const OptimizerState&)>;

/// Smallest L with k^L >= n.
std::size_t tree_levels(std::size_t n, std::size_t k);
/// k * L + k: the most states the tree may hold at once.
std::size_t live_state_bound(std::size_t n, std::size_t k);
/// n * L: the most re-executed steps a full traversal may need.
std::size_t replay_step_bound(std::size_t n, std::size_t k);

/// Lazy k-ary checkpoint tree over states s_0 .. s_{n-1}. The index range is
/// padded to k^L; a node covering [start, start + span) materializes its
/// children at start + j * span / k by stepping forward from its own state,
/// visits them last to first and frees each child once its subtree is done.
/// Both bounds are checked on every insert and every step.
class CheckpointTree {
 public:
  CheckpointTree(std::size_t n, std::size_t k, OptimizerState initial, Advance advance, TreeOptions options = {});
  ~CheckpointTree();
  CheckpointTree(const CheckpointTree&) = delete;
  CheckpointTree& operator=(const CheckpointTree&) = delete;

  /// Yields every state exactly once, in strictly decreasing index order.
  void traverse(const Visit& visit);

  const TreeStats& stats() const { return stats_; }
  std::size_t size() const { return n_; }
  std::size_t arity() const { return k_; }
  std::size_t levels() const { return levels_; }
  /// Indices currently stored, in memory or on disk, ascending.
  std::vector<std::size_t> stored_indices() const;

 private:
  struct Slot {
    std::optional<OptimizerState> state;
    std::filesystem::path file;
    std::uint64_t checksum = 0;
  };

  void visit_node(std::size_t start, std::size_t span, bool root, const Visit& visit);
  void insert(std::size_t index, OptimizerState state);
  void erase(std::size_t index);
  OptimizerState fetch(std::size_t index);
  void note_checksum(std::size_t index, const OptimizerState& state);
  void count_step(bool root);
  void spill_one();
  void write_manifest() const;

  std::size_t n_;
  std::size_t k_;
  std::size_t levels_;
  std::size_t padded_;
  Advance advance_;
  TreeOptions options_;
  std::filesystem::path spill_dir_;
  std::map<std::size_t, Slot> stored_;
  std::vector<std::optional<std::uint64_t>> seen_;
  std::size_t in_memory_ = 0;
  TreeStats stats_;
};

struct MetagradOptions {
  enum class Overflow { kAbort, kClip };
  /// Abort reports a non-finite cotangent with its step; clip bounds every
  /// cotangent entry to +-clip_value and counts the steps it touched.
  Overflow overflow = Overflow::kAbort;
  double clip_value = 1e8;
  bool keep_contributions = false;
  TreeOptions tree;
  /// Test hook: perturbs the state produced by re-executed steps.
  bool corrupt_replay = false;
};

struct MetagradReport {
  Tensor zbar;
  /// Per-step terms z̄_t indexed by t, when requested.
  std::vector<Tensor> contributions;
  /// f(z) = output of the trained model.
  double output_value = 0.0;
  std::size_t peak_live_states = 0;
  std::size_t replayed_steps = 0;
  std::size_t forward_steps = 0;
  std::size_t backward_steps = 0;
  std::size_t clipped_steps = 0;
  std::size_t arity = 0;
  std::size_t levels = 0;

  /// Optimizer steps executed, in units of one full training run.
  double equivalent_trainings(std::size_t steps) const;
};

/// Stores every state, then runs the backward recurrence one step at a time.
MetagradReport metagrad_stepwise(const train::TrainPlan& plan, const Tensor& z, const train::OutputFn& output,
                                 const MetagradOptions& options = {});

/// Same recurrence, with states re-instantiated through a k-ary tree.
MetagradReport metagrad_replay(const train::TrainPlan& plan, const Tensor& z, const train::OutputFn& output,
                               std::size_t k, const MetagradOptions& options = {});

/// Metagradient along `direction` against a central difference of the
/// trained output.
struct DirectionalCheck {
  double analytic = 0.0;
  double numeric = 0.0;
  /// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
  double rel_err = 0.0;
};
DirectionalCheck directional_check(const train::TrainPlan& plan, const Tensor& z, const train::OutputFn& output,
                                   const Tensor& zbar, const Tensor& direction, double h);

/// Pieces of the backward recurrence, exposed for tests.
struct Cotangent {
  std::vector<Tensor> state;
  Tensor meta;
};
/// d output / d s_T (zero for the optimizer auxiliaries) and the output value.
std::pair<std::vector<Tensor>, double> terminal_cotangent(const train::TrainPlan& plan, const train::OutputFn& output,
                                                          const OptimizerState& final_state);
/// Pulls the cotangent of s_{t+1} back through step t.
Cotangent backward_step(const train::TrainPlan& plan, const OptimizerState& state, const Tensor& z,
                        std::span<const Tensor> next_cotangent);

}  // namespace mgd::replay
