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
#include "lungseg/json_io.hpp"

#include <fstream>
#include <iterator>
#include <string>

namespace lungseg {

namespace detail {
void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const char* what) {
  if (!j.is_object()) throw ConfigError(std::string(what) + " must be a JSON object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* key : allowed) known = known || item.key() == key;
    if (!known) throw ConfigError(std::string("unknown key '") + item.key() + "' in " + what);
  }
}
}  // namespace detail

namespace {
template <typename V>
void read(const nlohmann::json& j, const char* key, V& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}
}  // namespace

void to_json(nlohmann::json& j, const AsppConfig& c) {
  j = {{"rates", c.rates}, {"branch_channels", c.branch_channels},
       {"out_channels", c.out_channels}};
}

void from_json(const nlohmann::json& j, AsppConfig& c) {
  detail::require_keys(j, {"rates", "branch_channels", "out_channels"}, "aspp config");
  read(j, "rates", c.rates);
  read(j, "branch_channels", c.branch_channels);
  read(j, "out_channels", c.out_channels);
}

void to_json(nlohmann::json& j, const NetworkConfig& c) {
  j = {{"input_channels", c.input_channels},
       {"num_classes", c.num_classes},
       {"output_stride", c.output_stride},
       {"low_level_stride", c.low_level_stride},
       {"encoder_widths", c.encoder_widths},
       {"aspp", c.aspp},
       {"decoder_channels", c.decoder_channels},
       {"low_level_projection_channels", c.low_level_projection_channels},
       {"batch_norm_epsilon", c.batch_norm.epsilon},
       {"batch_norm_momentum", c.batch_norm.momentum}};
}

void from_json(const nlohmann::json& j, NetworkConfig& c) {
  detail::require_keys(j,
                       {"input_channels", "num_classes", "output_stride", "low_level_stride",
                        "encoder_widths", "aspp", "decoder_channels",
                        "low_level_projection_channels", "batch_norm_epsilon",
                        "batch_norm_momentum"},
                       "network config");
  read(j, "input_channels", c.input_channels);
  read(j, "num_classes", c.num_classes);
  read(j, "output_stride", c.output_stride);
  read(j, "low_level_stride", c.low_level_stride);
  read(j, "encoder_widths", c.encoder_widths);
  read(j, "aspp", c.aspp);
  read(j, "decoder_channels", c.decoder_channels);
  read(j, "low_level_projection_channels", c.low_level_projection_channels);
  read(j, "batch_norm_epsilon", c.batch_norm.epsilon);
  read(j, "batch_norm_momentum", c.batch_norm.momentum);
}

void to_json(nlohmann::json& j, const AugmentPolicy& p) {
  j = {{"enabled", p.enabled},
       {"scale_range", p.scale_range},
       {"shift_fraction", p.shift_fraction},
       {"rotation_deg", p.rotation_deg},
       {"fill_value", p.fill_value}};
}

void from_json(const nlohmann::json& j, AugmentPolicy& p) {
  detail::require_keys(j, {"enabled", "scale_range", "shift_fraction", "rotation_deg", "fill_value"},
                       "augment policy");
  read(j, "enabled", p.enabled);
  read(j, "scale_range", p.scale_range);
  read(j, "shift_fraction", p.shift_fraction);
  read(j, "rotation_deg", p.rotation_deg);
  read(j, "fill_value", p.fill_value);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"momentum", c.momentum},
       {"epochs", c.epochs},
       {"seed", c.seed},
       {"class_weight_mode",
        c.class_weight_mode == ClassWeightMode::kUniform ? "uniform" : "median-frequency"},
       {"augment", c.augment},
       {"input_size", c.input_size},
       {"split_ratio", c.split_ratio}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  detail::require_keys(j,
                       {"batch_size", "learning_rate", "momentum", "epochs", "seed",
                        "class_weight_mode", "augment", "input_size", "split_ratio"},
                       "train config");
  read(j, "batch_size", c.batch_size);
  read(j, "learning_rate", c.learning_rate);
  read(j, "momentum", c.momentum);
  read(j, "epochs", c.epochs);
  read(j, "seed", c.seed);
  if (j.contains("class_weight_mode")) {
    std::string mode;
    read(j, "class_weight_mode", mode);
    if (mode == "median-frequency") {
      c.class_weight_mode = ClassWeightMode::kMedianFrequency;
    } else if (mode == "uniform") {
      c.class_weight_mode = ClassWeightMode::kUniform;
    } else {
      throw ConfigError("class_weight_mode must be 'median-frequency' or 'uniform', got '" +
                        mode + "'");
    }
  }
  read(j, "augment", c.augment);
  read(j, "input_size", c.input_size);
  read(j, "split_ratio", c.split_ratio);
}

void to_json(nlohmann::json& j, const PhantomParams& p) {
  j = {{"count", p.count},
       {"image_size", p.image_size},
       {"seed", p.seed},
       {"semi_axis_x", p.semi_axis_x},
       {"semi_axis_y", p.semi_axis_y},
       {"max_rotation_deg", p.max_rotation_deg},
       {"max_shear", p.max_shear},
       {"noise_sigma", p.noise_sigma},
       {"occluder_probability", p.occluder_probability},
       {"occluder_intensity", p.occluder_intensity},
       {"occluder_radius", p.occluder_radius}};
}

void from_json(const nlohmann::json& j, PhantomParams& p) {
  detail::require_keys(j,
                       {"count", "image_size", "seed", "semi_axis_x", "semi_axis_y",
                        "max_rotation_deg", "max_shear", "noise_sigma", "occluder_probability",
                        "occluder_intensity", "occluder_radius"},
                       "phantom params");
  read(j, "count", p.count);
  read(j, "image_size", p.image_size);
  read(j, "seed", p.seed);
  read(j, "semi_axis_x", p.semi_axis_x);
  read(j, "semi_axis_y", p.semi_axis_y);
  read(j, "max_rotation_deg", p.max_rotation_deg);
  read(j, "max_shear", p.max_shear);
  read(j, "noise_sigma", p.noise_sigma);
  read(j, "occluder_probability", p.occluder_probability);
  read(j, "occluder_intensity", p.occluder_intensity);
  read(j, "occluder_radius", p.occluder_radius);
}

void to_json(nlohmann::json& j, const PostprocessConfig& c) {
  j = {{"enabled", c.enabled}, {"k", c.k}, {"connectivity", static_cast<int>(c.connectivity)}};
}

void from_json(const nlohmann::json& j, PostprocessConfig& c) {
  detail::require_keys(j, {"enabled", "k", "connectivity"}, "postprocess config");
  read(j, "enabled", c.enabled);
  read(j, "k", c.k);
  if (j.contains("connectivity")) {
    int value = 0;
    read(j, "connectivity", value);
    c.connectivity = connectivity_from_int(value);
  }
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  const std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

void RunConfig::validate() const {
  network.validate();
  train.validate();
  if (manifest.has_value() == phantoms.has_value()) {
    throw ConfigError("run config data must name exactly one of 'manifest' and 'phantoms'");
  }
  if (manifest && !std::filesystem::exists(*manifest)) {
    throw ConfigError("manifest '" + manifest->string() + "' does not exist");
  }
  if (phantoms) phantoms->validate();
  if (postprocess.k < 1) throw ConfigError("postprocess k must be >= 1");
  if (boundary_tolerance && !(*boundary_tolerance >= 0.0)) {
    throw ConfigError("metrics boundary_tolerance must be >= 0");
  }
  if (train.input_size % network.output_stride != 0) {
    throw ConfigError("train input_size " + std::to_string(train.input_size) +
                      " is not divisible by output_stride " +
                      std::to_string(network.output_stride));
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  const nlohmann::json j = read_json_file(path);
  const std::filesystem::path base = path.parent_path();
  RunConfig c;
  try {
    detail::require_keys(j, {"network", "train", "data", "postprocess", "metrics", "output_dir"},
                         "run config");
    read(j, "network", c.network);
    read(j, "train", c.train);
    read(j, "postprocess", c.postprocess);
    if (j.contains("data")) {
      const nlohmann::json& d = j["data"];
      detail::require_keys(d, {"manifest", "phantoms"}, "data config");
      if (d.contains("manifest")) {
        std::string m;
        read(d, "manifest", m);
        c.manifest = base / m;
      }
      if (d.contains("phantoms")) {
        PhantomParams p;
        read(d, "phantoms", p);
        c.phantoms = p;
      }
    }
    if (j.contains("metrics")) {
      const nlohmann::json& m = j["metrics"];
      detail::require_keys(m, {"boundary_tolerance"}, "metrics config");
      if (m.contains("boundary_tolerance") && !m["boundary_tolerance"].is_null()) {
        double t = 0.0;
        read(m, "boundary_tolerance", t);
        c.boundary_tolerance = t;
      }
    }
    if (j.contains("output_dir")) {
      std::string out;
      read(j, "output_dir", out);
      c.output_dir = base / out;
    } else {
      c.output_dir = base / c.output_dir;
    }
  } catch (const ConfigError& e) {
    throw ConfigError("run config '" + path.string() + "': " + e.what());
  }
  return c;
}

}  // namespace lungseg
