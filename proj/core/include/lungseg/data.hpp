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

// Image and mask I/O, the fixed-size resize step, dataset manifests, the
// synthetic lung phantom generator, and boundary overlays.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lungseg/postproc.hpp"

namespace lungseg {

/// Single-channel intensities in [0, 1], row-major.
struct GrayImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<float> values;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w, float fill = 0.0f)
      : height(h), width(w), values(h * w, fill) {}
  float at(std::size_t i, std::size_t j) const { return values[i * width + j]; }
  float& at(std::size_t i, std::size_t j) { return values[i * width + j]; }
  friend bool operator==(const GrayImage&, const GrayImage&) = default;
};

struct RgbImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // 3 bytes per pixel

  std::array<std::uint8_t, 3> at(std::size_t i, std::size_t j) const {
    const std::size_t p = 3 * (i * width + j);
    return {rgb[p], rgb[p + 1], rgb[p + 2]};
  }
};

/// Raw decoded samples before normalization.
struct RawImage {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;  // 1 (gray) or 3 (RGB)
  std::uint32_t max_value = 255;
  std::vector<std::uint16_t> samples;
};

/// Decodes PGM (P2/P5, 8- or 16-bit) or PNG (gray/RGB/palette, alpha
/// discarded). Throws IoError naming the file on unsupported or corrupt input.
RawImage decode_image(const std::filesystem::path& path);

/// Gray samples scaled by 1 / max_value; RGB converted with Rec. 601 luma
/// weights (0.299, 0.587, 0.114).
GrayImage load_image(const std::filesystem::path& path);

/// 1 where the (luma) sample exceeds half the maximum value. Color files are
/// accepted with a warning.
BinaryMask load_mask(const std::filesystem::path& path);

/// Binary PGM (P5). Values are clamped to [0, 1] and rounded to `max_value`
/// levels (255 or 65535).
void save_pgm(const GrayImage& image, const std::filesystem::path& path,
              std::uint32_t max_value = 255);
/// Mask as an 8-bit P5 PGM with values 0 / 255.
void save_mask(const BinaryMask& mask, const std::filesystem::path& path);
void save_png(const RgbImage& image, const std::filesystem::path& path);

/// Half-pixel bilinear resampling (same convention as bilinear_resize).
GrayImage resize_image(const GrayImage& image, std::size_t height, std::size_t width);
/// Nearest-neighbor resampling at half-pixel centers.
BinaryMask resize_mask(const BinaryMask& mask, std::size_t height, std::size_t width);
/// Both to size x size, aspect ratio not preserved.
std::pair<GrayImage, BinaryMask> resize_pair(const GrayImage& image, const BinaryMask& mask,
                                             std::size_t size = 256);

enum class Split { kTrain, kTest };

struct Sample {
  std::string id;
  std::filesystem::path image;
  std::optional<std::filesystem::path> mask;
  std::optional<Split> split;
};

struct DatasetManifest {
  std::vector<Sample> samples;
  std::string provenance;

  /// Samples tagged with `split`.
  DatasetManifest subset(Split split) const;
  bool has_split_tags() const;
  const Sample* find(const std::string& id) const;
};

/// JSON array of {id, image, mask?, split?}, or an object
/// {"provenance": ..., "samples": [...]}. Relative paths resolve against the
/// manifest's directory. Throws IoError on duplicate ids or split tags that
/// do not cover every sample.
DatasetManifest load_manifest(const std::filesystem::path& path);
/// Paths under the manifest's directory are written relative to it.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct PhantomParams {
  std::size_t count = 300;
  std::size_t image_size = 128;
  std::uint64_t seed = 7;
  /// Lung semi-axes as fractions of the image size.
  std::pair<double, double> semi_axis_x{0.12, 0.17};
  std::pair<double, double> semi_axis_y{0.26, 0.34};
  double max_rotation_deg = 12.0;
  double max_shear = 0.15;
  double noise_sigma = 0.04;
  double occluder_probability = 0.3;
  std::pair<double, double> occluder_intensity{0.6, 0.95};
  /// Occluder radius as a fraction of the image size.
  std::pair<double, double> occluder_radius{0.05, 0.10};

  void validate() const;
};

/// One phantom: noisy dark background with an intensity gradient, two
/// disjoint bright-rimmed ellipses (the ground truth), and optionally an
/// opaque bright disc overlapping a lung.
std::pair<GrayImage, BinaryMask> generate_phantom(const PhantomParams& params,
                                                  std::size_t index);

/// Writes images/<id>.pgm, masks/<id>.pgm and manifest.json under `out_dir`.
DatasetManifest generate_phantoms(const PhantomParams& params,
                                  const std::filesystem::path& out_dir);

/// Grayscale base; ground-truth boundary green, predicted boundary red,
/// coincident boundary pixels yellow.
RgbImage render_overlay(const GrayImage& image, const BinaryMask& gt, const BinaryMask& pred);

}  // namespace lungseg
