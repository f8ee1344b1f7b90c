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

#include <filesystem>
#include <optional>

#include "lungseg/data.hpp"
#include "lungseg/net.hpp"
#include "lungseg/postproc.hpp"
#include "lungseg/train.hpp"

namespace lungseg {

struct PostprocessConfig {
  bool enabled = true;
  int k = 2;
  Connectivity connectivity = Connectivity::kEight;
};

/// Everything one pipeline run needs. Exactly one of `manifest` and
/// `phantoms` names the data source.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  std::optional<std::filesystem::path> manifest;
  std::optional<PhantomParams> phantoms;
  PostprocessConfig postprocess;
  std::optional<double> boundary_tolerance;
  std::filesystem::path output_dir = "output";

  /// Checks nested configs and that a referenced manifest exists.
  void validate() const;
};

/// Reads a JSON run config; relative paths resolve against its directory.
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace lungseg
