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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mgd/tensor.hpp"

// Binary snapshot format (all integers little-endian):
//
//   "MGDSNAP1"                      8-byte magic
//   u32 version                     currently 1
//   u64 step
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u8 dtype (1 = f64),
//               u32 rank, u64 extent * rank
//   payloads, in manifest order, as raw little-endian IEEE-754 doubles
//
// Encoding then decoding is bit-exact.

namespace mgd {

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Snapshot {
  std::uint64_t step = 0;
  std::vector<NamedTensor> tensors;

  const Tensor& get(const std::string& name) const;
};

inline constexpr std::uint32_t kSnapshotVersion = 1;

std::vector<std::byte> encode_snapshot(const Snapshot& snap);
Snapshot decode_snapshot(std::span<const std::byte> bytes);

void write_snapshot(const std::filesystem::path& path, const Snapshot& snap);
Snapshot read_snapshot(const std::filesystem::path& path);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes);

}  // namespace mgd
