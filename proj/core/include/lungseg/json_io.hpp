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

// JSON (de)serialization of configuration types. Missing keys keep their
// defaults; unknown keys are rejected so typos surface as errors.

#include <nlohmann/json.hpp>

#include "lungseg/data.hpp"
#include "lungseg/net.hpp"
#include "lungseg/run_config.hpp"
#include "lungseg/train.hpp"

namespace lungseg {

void to_json(nlohmann::json& j, const AsppConfig& c);
void from_json(const nlohmann::json& j, AsppConfig& c);
void to_json(nlohmann::json& j, const NetworkConfig& c);
void from_json(const nlohmann::json& j, NetworkConfig& c);
void to_json(nlohmann::json& j, const AugmentPolicy& p);
void from_json(const nlohmann::json& j, AugmentPolicy& p);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const PhantomParams& p);
void from_json(const nlohmann::json& j, PhantomParams& p);
void to_json(nlohmann::json& j, const PostprocessConfig& c);
void from_json(const nlohmann::json& j, PostprocessConfig& c);

/// Parses a JSON file, wrapping syntax errors in IoError.
nlohmann::json read_json_file(const std::filesystem::path& path);

namespace detail {
/// Throws ConfigError if `j` is not an object or has a key outside `allowed`.
void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const char* what);
}  // namespace detail

}  // namespace lungseg
