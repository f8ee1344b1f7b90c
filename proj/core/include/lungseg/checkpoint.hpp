/*
 * Copyright 2026 The lungseg Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

// Checkpoint file layout (all integers little-endian):
//
//   "DLFN"                      4-byte magic
//   u32 version                 kCheckpointVersion
//   u32 header_length
//   header_length bytes         JSON: {"config": NetworkConfig,
//                                      "tensors": [{name, kind, shape, offset, count}],
//                                      "metadata": {...}}
//   f32 blocks                  one per tensor, in header order; `offset` is
//                               relative to the end of the header

#include <cstdint>
#include <filesystem>

#include "lungseg/net.hpp"

namespace lungseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMetadata {
  std::size_t epoch = 0;
  std::uint64_t seed = 0;
  std::size_t input_size = 256;
  friend bool operator==(const CheckpointMetadata&, const CheckpointMetadata&) = default;
};

struct Checkpoint {
  Network<float> network;
  CheckpointMetadata metadata;
};

/// Throws IoError if the file cannot be written.
void save_checkpoint(const Network<float>& net, const std::filesystem::path& path,
                     const CheckpointMetadata& metadata = {});

/// Rebuilds the network from the embedded config and restores every tensor.
/// Throws IoError on bad magic, unsupported version, truncation, or a tensor
/// that does not match the embedded config.
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Restores into an existing network. Throws IoError naming the first tensor
/// whose name or shape differs from `net`.
CheckpointMetadata load_checkpoint_into(Network<float>& net, const std::filesystem::path& path);

}  // namespace lungseg
