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

#include "mgd/snapshot.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mgd {
namespace {

constexpr char kMagic[8] = {'M', 'G', 'D', 'S', 'N', 'A', 'P', '1'};
constexpr std::uint8_t kDtypeF64 = 1;

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<std::byte, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  template <typename T>
  void put(T v) {
    v = to_little(v);
    const auto* p = reinterpret_cast<const std::byte*>(&v);
    out_.insert(out_.end(), p, p + sizeof(T));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::byte*>(data);
    out_.insert(out_.end(), p, p + n);
  }
  std::vector<std::byte> take() { return std::move(out_); }

 private:
  std::vector<std::byte> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::byte> in) : in_(in) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, in_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return to_little(v);
  }
  void get_bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, in_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw SnapshotError("snapshot truncated");
  }
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Snapshot::get(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw SnapshotError("snapshot has no tensor named '" + name + "'");
}

std::vector<std::byte> encode_snapshot(const Snapshot& snap) {
  Writer w;
  w.put_bytes(kMagic, sizeof(kMagic));
  w.put<std::uint32_t>(kSnapshotVersion);
  w.put<std::uint64_t>(snap.step);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(snap.tensors.size()));
  for (const auto& t : snap.tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name.data(), t.name.size());
    w.put<std::uint8_t>(kDtypeF64);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.value.rank()));
    for (std::size_t e : t.value.shape()) w.put<std::uint64_t>(e);
  }
  for (const auto& t : snap.tensors) {
    for (double v : t.value.data()) w.put<std::uint64_t>(std::bit_cast<std::uint64_t>(v));
  }
  return w.take();
}

Snapshot decode_snapshot(std::span<const std::byte> bytes) {
  Reader r(bytes);
  char magic[8];
  r.get_bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw SnapshotError("bad snapshot magic");
  const auto version = r.get<std::uint32_t>();
  if (version != kSnapshotVersion) throw SnapshotError("unsupported snapshot version " + std::to_string(version));
  Snapshot snap;
  snap.step = r.get<std::uint64_t>();
  const auto count = r.get<std::uint32_t>();
  std::vector<Shape> shapes;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto len = r.get<std::uint32_t>();
    if (len > bytes.size()) throw SnapshotError("snapshot name length overflow");
    t.name.resize(len);
    r.get_bytes(t.name.data(), len);
    if (r.get<std::uint8_t>() != kDtypeF64) throw SnapshotError("unsupported dtype in snapshot");
    const auto rank = r.get<std::uint32_t>();
    if (rank > 8) throw SnapshotError("snapshot tensor rank too large");
    Shape shape(rank);
    std::size_t total = 1;
    for (auto& e : shape) {
      e = r.get<std::uint64_t>();
      if (e != 0 && total > bytes.size() / e) throw SnapshotError("snapshot extent overflow");
      total *= e;
    }
    shapes.push_back(std::move(shape));
    snap.tensors.push_back(std::move(t));
  }
  for (std::size_t i = 0; i < snap.tensors.size(); ++i) {
    std::vector<double> data(shape_size(shapes[i]));
    for (double& v : data) v = std::bit_cast<double>(r.get<std::uint64_t>());
    snap.tensors[i].value = Tensor(std::move(shapes[i]), std::move(data));
  }
  if (!r.done()) throw SnapshotError("trailing bytes after snapshot payload");
  return snap;
}

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError("cannot open " + path.string());
  std::vector<char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<std::byte> out(raw.size());
  if (!raw.empty()) std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw SnapshotError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw SnapshotError("short write to " + path.string());
}

void write_snapshot(const std::filesystem::path& path, const Snapshot& snap) {
  write_file_bytes(path, encode_snapshot(snap));
}

Snapshot read_snapshot(const std::filesystem::path& path) { return decode_snapshot(read_file_bytes(path)); }

}  // namespace mgd
