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

#include <cstdlib>
#include <fstream>

#include "json.hpp"
#include "mgd/replay.hpp"

namespace mgd::replay {

std::size_t tree_levels(std::size_t n, std::size_t k) {
  if (k < 2) throw std::invalid_argument("tree arity must be >= 2");
  std::size_t levels = 0, reach = 1;
  while (reach < n) {
    reach *= k;
    ++levels;
  }
  return levels;
}

std::size_t live_state_bound(std::size_t n, std::size_t k) { return k * tree_levels(n, k) + k; }

std::size_t replay_step_bound(std::size_t n, std::size_t k) { return n * tree_levels(n, k); }

CheckpointTree::CheckpointTree(std::size_t n, std::size_t k, OptimizerState initial, Advance advance,
                               TreeOptions options)
    : n_(n), k_(k), levels_(tree_levels(n, k)), advance_(std::move(advance)), options_(std::move(options)) {
  if (n_ == 0) throw std::invalid_argument("checkpoint tree needs at least one state");
  padded_ = 1;
  for (std::size_t i = 0; i < levels_; ++i) padded_ *= k_;
  seen_.resize(n_);
  if (options_.memory_budget > 0) {
    spill_dir_ = options_.spill_dir;
    if (spill_dir_.empty()) {
      const char* env = std::getenv("MGD_SCRATCH_DIR");
      spill_dir_ = env != nullptr && *env != '\0' ? std::filesystem::path(env) : std::filesystem::temp_directory_path();
    }
    std::filesystem::create_directories(spill_dir_);
  }
  note_checksum(0, initial);
  insert(0, std::move(initial));
}

CheckpointTree::~CheckpointTree() {
  std::error_code ec;
  for (const auto& [index, slot] : stored_) {
    if (!slot.file.empty()) std::filesystem::remove(slot.file, ec);
  }
  if (!spill_dir_.empty()) std::filesystem::remove(spill_dir_ / (options_.run_id + "-manifest.json"), ec);
}

std::vector<std::size_t> CheckpointTree::stored_indices() const {
  std::vector<std::size_t> out;
  for (const auto& entry : stored_) out.push_back(entry.first);
  return out;
}

void CheckpointTree::note_checksum(std::size_t index, const OptimizerState& state) {
  const std::uint64_t sum = state.checksum();
  auto& seen = seen_.at(index);
  if (seen && *seen != sum) throw DeterminismError(index, "state checksum differs from the first execution");
  seen = sum;
}

void CheckpointTree::count_step(bool root) {
  if (root) {
    ++stats_.forward_steps;
    return;
  }
  ++stats_.replayed_steps;
  if (stats_.replayed_steps > replay_step_bound(n_, k_)) {
    throw std::logic_error("checkpoint tree exceeded its replayed-step bound");
  }
}

void CheckpointTree::insert(std::size_t index, OptimizerState state) {
  Slot slot;
  slot.checksum = state.checksum();
  slot.state = std::move(state);
  stored_[index] = std::move(slot);
  ++in_memory_;
  stats_.live = stored_.size();
  stats_.peak_live = std::max(stats_.peak_live, stats_.live);
  if (stats_.live > live_state_bound(n_, k_)) throw std::logic_error("checkpoint tree exceeded its live-state bound");
  while (options_.memory_budget > 0 && in_memory_ > options_.memory_budget) spill_one();
}

void CheckpointTree::spill_one() {
  // The lowest index is needed last, so it goes to disk first.
  for (auto& [index, slot] : stored_) {
    if (!slot.state) continue;
    slot.file = spill_dir_ / (options_.run_id + "-" + std::to_string(index) + ".snap");
    write_snapshot(slot.file, slot.state->to_snapshot());
    slot.state.reset();
    --in_memory_;
    ++stats_.spilled;
    write_manifest();
    return;
  }
}

void CheckpointTree::write_manifest() const {
  nlohmann::json manifest;
  manifest["run_id"] = options_.run_id;
  manifest["states"] = nlohmann::json::array();
  for (const auto& [index, slot] : stored_) {
    if (slot.file.empty()) continue;
    manifest["states"].push_back(
        {{"index", index}, {"file", slot.file.filename().string()}, {"checksum", std::to_string(slot.checksum)}});
  }
  std::ofstream out(spill_dir_ / (options_.run_id + "-manifest.json"), std::ios::trunc);
  out << manifest.dump(2) << '\n';
}

OptimizerState CheckpointTree::fetch(std::size_t index) {
  Slot& slot = stored_.at(index);
  if (slot.state) return *slot.state;
  OptimizerState state = OptimizerState::from_snapshot(read_snapshot(slot.file));
  if (state.checksum() != slot.checksum) throw DeterminismError(index, "spilled state failed its checksum");
  return state;
}

void CheckpointTree::erase(std::size_t index) {
  auto it = stored_.find(index);
  if (it == stored_.end()) return;
  if (it->second.state) {
    --in_memory_;
  } else {
    std::error_code ec;
    std::filesystem::remove(it->second.file, ec);
  }
  const bool had_file = !it->second.file.empty();
  stored_.erase(it);
  stats_.live = stored_.size();
  if (had_file) write_manifest();
}

void CheckpointTree::traverse(const Visit& visit) { visit_node(0, padded_, true, visit); }

void CheckpointTree::visit_node(std::size_t start, std::size_t span, bool root, const Visit& visit) {
  if (span == 1) {
    visit(start, fetch(start));
    return;
  }
  const std::size_t child = span / k_;
  const std::size_t last = std::min(k_ - 1, (n_ - 1 - start) / child);
  if (last > 0) {
    OptimizerState cur = fetch(start);
    std::size_t index = start;
    for (std::size_t j = 1; j <= last; ++j) {
      const std::size_t target = start + j * child;
      while (index < target) {
        cur = advance_(cur, index);
        ++index;
        count_step(root);
        note_checksum(index, cur);
      }
      insert(target, cur);
    }
  }
  for (std::size_t j = last + 1; j-- > 0;) {
    const std::size_t child_start = start + j * child;
    visit_node(child_start, child, false, visit);
    erase(child_start);
  }
}

}  // namespace mgd::replay
