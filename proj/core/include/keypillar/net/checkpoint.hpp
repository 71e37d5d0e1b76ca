// Copyright 2026 The Keypillar Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Versioned binary parameter container.
//
//   magic "AFDK" | u32 version | u64 spec digest | u32 count
//   manifest: count x (u32 name length, name bytes, u32 rank, rank x u32 dim)
//   payload:  every array in manifest order as little-endian IEEE-754 f64
//
// All integers are little-endian.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace keypillar::net {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> shape;
  std::vector<double> data;
};

struct Checkpoint {
  std::uint64_t spec_digest = 0;
  std::vector<NamedArray> arrays;

  const NamedArray* find(std::string_view name) const;
};

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view text);

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
// Throws FormatError with the byte offset of the first inconsistency.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace keypillar::net
