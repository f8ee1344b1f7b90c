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
#include "lungseg/data.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>
#include <set>

#include <nlohmann/json.hpp>

#include "lungseg/log.hpp"
#include "lungseg/metrics.hpp"
#include "lungseg/ops.hpp"
#include "lungseg/random.hpp"

namespace fs = std::filesystem;

namespace lungseg {
namespace {

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------------------
// PGM

class PgmReader {
 public:
  PgmReader(const std::string& bytes, const fs::path& path) : bytes_(bytes), path_(path) {}

  RawImage read() {
    const bool binary = bytes_[1] == '5';
    RawImage img;
    img.width = header_value("width");
    img.height = header_value("height");
    const std::size_t maxval = header_value("maxval");
    if (img.width == 0 || img.height == 0) fail("has zero width or height");
    if (maxval == 0 || maxval > 65535) fail("has maxval outside [1, 65535]");
    img.max_value = static_cast<std::uint32_t>(maxval);
    const std::size_t count = img.width * img.height;
    img.samples.resize(count);
    if (binary) {
      // Exactly one whitespace byte separates the header from the raster.
      if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
        fail("is truncated after the header");
      }
      ++pos_;
      const std::size_t width = maxval > 255 ? 2 : 1;
      if (bytes_.size() - pos_ < count * width) fail("is truncated (raster too short)");
      for (std::size_t k = 0; k < count; ++k) {
        std::uint32_t v = static_cast<unsigned char>(bytes_[pos_ + k * width]);
        if (width == 2) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + 2 * k + 1]);
        if (v > maxval) fail("has a sample above maxval");
        img.samples[k] = static_cast<std::uint16_t>(v);
      }
    } else {
      for (std::size_t k = 0; k < count; ++k) {
        const std::size_t v = header_value("sample");
        if (v > maxval) fail("has a sample above maxval");
        img.samples[k] = static_cast<std::uint16_t>(v);
      }
    }
    return img;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw IoError("PGM file '" + path_.string() + "' " + what);
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char ch = bytes_[pos_];
      if (ch == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(ch))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t header_value(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) fail(std::string("is truncated (missing ") + what + ")");
    std::size_t value = 0;
    std::size_t digits = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
      if (value > (1u << 30)) fail(std::string("has an oversized ") + what);
      ++pos_;
      ++digits;
    }
    if (digits == 0) fail(std::string("has a malformed ") + what);
    return value;
  }

  const std::string& bytes_;
  const fs::path& path_;
  std::size_t pos_ = 2;
};

// ---------------------------------------------------------------------------
// PNG (libpng). The setjmp frames below hold no objects with destructors;
// all state lives in the structs passed by reference.

struct PngState {
  std::FILE* file = nullptr;
  png_structp png = nullptr;
  png_infop info = nullptr;
  std::string error;
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 0;
  int depth = 0;
  std::vector<png_byte> pixels;
  std::vector<png_bytep> rows;
};

void png_error_handler(png_structp png, png_const_charp message) {
  auto* state = static_cast<PngState*>(png_get_error_ptr(png));
  state->error = message ? message : "unknown libpng error";
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

bool png_read_all(PngState& s) {
  if (setjmp(png_jmpbuf(s.png))) return false;
  png_init_io(s.png, s.file);
  png_read_info(s.png, s.info);
  const int color = png_get_color_type(s.png, s.info);
  const int bit_depth = png_get_bit_depth(s.png, s.info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(s.png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(s.png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(s.png);
  png_read_update_info(s.png, s.info);
  s.width = png_get_image_width(s.png, s.info);
  s.height = png_get_image_height(s.png, s.info);
  s.channels = png_get_channels(s.png, s.info);
  s.depth = png_get_bit_depth(s.png, s.info);
  const std::size_t stride = png_get_rowbytes(s.png, s.info);
  s.pixels.resize(stride * s.height);
  s.rows.resize(s.height);
  for (std::size_t i = 0; i < s.height; ++i) s.rows[i] = s.pixels.data() + i * stride;
  png_read_image(s.png, s.rows.data());
  png_read_end(s.png, nullptr);
  return true;
}

RawImage read_png(const fs::path& path) {
  PngState s;
  s.file = std::fopen(path.c_str(), "rb");
  if (!s.file) throw IoError("cannot open '" + path.string() + "'");
  s.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &s, png_error_handler,
                                 png_warning_handler);
  s.info = s.png ? png_create_info_struct(s.png) : nullptr;
  const bool ok = s.info && png_read_all(s);
  png_destroy_read_struct(&s.png, &s.info, nullptr);
  std::fclose(s.file);
  if (!ok) throw IoError("PNG file '" + path.string() + "' is corrupt: " + s.error);
  if (s.channels != 1 && s.channels != 3) {
    throw IoError("PNG file '" + path.string() + "' has unsupported channel count " +
                  std::to_string(s.channels));
  }
  RawImage img;
  img.width = s.width;
  img.height = s.height;
  img.channels = static_cast<std::size_t>(s.channels);
  img.max_value = s.depth == 16 ? 65535 : 255;
  const std::size_t count = s.width * s.height * img.channels;
  img.samples.resize(count);
  for (std::size_t i = 0; i < s.height; ++i) {
    const png_byte* row = s.rows[i];
    for (std::size_t k = 0; k < s.width * img.channels; ++k) {
      img.samples[i * s.width * img.channels + k] =
          s.depth == 16 ? static_cast<std::uint16_t>((row[2 * k] << 8) | row[2 * k + 1])
                        : row[k];
    }
  }
  return img;
}

bool png_write_all(PngState& s, const RgbImage& image) {
  if (setjmp(png_jmpbuf(s.png))) return false;
  png_init_io(s.png, s.file);
  png_set_IHDR(s.png, s.info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(s.png, s.info);
  for (std::size_t i = 0; i < image.height; ++i) {
    png_write_row(s.png, const_cast<png_bytep>(image.rgb.data() + 3 * i * image.width));
  }
  png_write_end(s.png, nullptr);
  return true;
}

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

}  // namespace

RawImage decode_image(const fs::path& path) {
  static const unsigned char kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  std::string bytes = read_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '2')) {
    return PgmReader(bytes, path).read();
  }
  if (bytes.size() >= 8 && std::equal(kPngSignature, kPngSignature + 8,
                                      reinterpret_cast<const unsigned char*>(bytes.data()))) {
    return read_png(path);
  }
  throw IoError("'" + path.string() + "' is not a supported image (expected PGM P2/P5 or PNG)");
}

GrayImage load_image(const fs::path& path) {
  const RawImage raw = decode_image(path);
  GrayImage out(raw.height, raw.width);
  const double scale = 1.0 / static_cast<double>(raw.max_value);
  for (std::size_t p = 0; p < out.values.size(); ++p) {
    if (raw.channels == 1) {
      out.values[p] = static_cast<float>(raw.samples[p] * scale);
    } else {
      const std::uint16_t* px = raw.samples.data() + 3 * p;
      out.values[p] = static_cast<float>(luma(px[0], px[1], px[2]) * scale);
    }
  }
  return out;
}

BinaryMask load_mask(const fs::path& path) {
  const RawImage raw = decode_image(path);
  if (raw.channels != 1) {
    warn("mask '" + path.string() + "' is not grayscale; thresholding its luma");
  }
  const double threshold = static_cast<double>(raw.max_value) / 2.0;
  std::vector<std::uint8_t> values(raw.height * raw.width);
  for (std::size_t p = 0; p < values.size(); ++p) {
    double v = raw.samples[p];
    if (raw.channels != 1) {
      const std::uint16_t* px = raw.samples.data() + 3 * p;
      v = luma(px[0], px[1], px[2]);
    }
    values[p] = v > threshold ? 1 : 0;
  }
  return BinaryMask(raw.height, raw.width, std::move(values));
}

void save_pgm(const GrayImage& image, const fs::path& path, std::uint32_t max_value) {
  if (max_value != 255 && max_value != 65535) {
    throw ConfigError("save_pgm supports max_value 255 or 65535");
  }
  std::string bytes = "P5\n" + std::to_string(image.width) + " " +
                      std::to_string(image.height) + "\n" + std::to_string(max_value) + "\n";
  for (float v : image.values) {
    const double clamped = std::clamp(static_cast<double>(v), 0.0, 1.0);
    const auto q = static_cast<std::uint32_t>(std::lround(clamped * max_value));
    if (max_value > 255) bytes.push_back(static_cast<char>(q >> 8));
    bytes.push_back(static_cast<char>(q & 0xffu));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

void save_mask(const BinaryMask& mask, const fs::path& path) {
  GrayImage image(mask.height(), mask.width());
  for (std::size_t p = 0; p < image.values.size(); ++p) image.values[p] = mask.values()[p];
  save_pgm(image, path);
}

void save_png(const RgbImage& image, const fs::path& path) {
  PngState s;
  s.file = std::fopen(path.c_str(), "wb");
  if (!s.file) throw IoError("cannot write '" + path.string() + "'");
  s.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &s, png_error_handler,
                                  png_warning_handler);
  s.info = s.png ? png_create_info_struct(s.png) : nullptr;
  const bool ok = s.info && png_write_all(s, image);
  png_destroy_write_struct(&s.png, &s.info);
  const bool closed = std::fclose(s.file) == 0;
  if (!ok || !closed) throw IoError("failed writing PNG '" + path.string() + "': " + s.error);
}

GrayImage resize_image(const GrayImage& image, std::size_t height, std::size_t width) {
  if (image.height == 0 || image.width == 0 || height == 0 || width == 0) {
    throw ShapeError("resize needs nonzero dimensions");
  }
  if (image.height == height && image.width == width) return image;
  Tensor<float> t({1, 1, image.height, image.width}, image.values);
  Tensor<float> r = bilinear_resize(t, height, width);
  GrayImage out(height, width);
  std::copy(r.values().begin(), r.values().end(), out.values.begin());
  return out;
}

BinaryMask resize_mask(const BinaryMask& mask, std::size_t height, std::size_t width) {
  if (mask.height() == 0 || mask.width() == 0 || height == 0 || width == 0) {
    throw ShapeError("resize needs nonzero dimensions");
  }
  if (mask.height() == height && mask.width() == width) return mask;
  auto nearest = [](std::size_t dst, std::size_t in, std::size_t out) {
    const auto src = static_cast<std::size_t>(
        std::floor((static_cast<double>(dst) + 0.5) * static_cast<double>(in) /
                   static_cast<double>(out)));
    return std::min(src, in - 1);
  };
  BinaryMask out(height, width);
  for (std::size_t i = 0; i < height; ++i) {
    const std::size_t si = nearest(i, mask.height(), height);
    for (std::size_t j = 0; j < width; ++j) {
      out.set(i, j, mask.at(si, nearest(j, mask.width(), width)));
    }
  }
  return out;
}

std::pair<GrayImage, BinaryMask> resize_pair(const GrayImage& image, const BinaryMask& mask,
                                             std::size_t size) {
  if (image.height != mask.height() || image.width != mask.width()) {
    throw ShapeError("resize_pair: image and mask dimensions differ");
  }
  return {resize_image(image, size, size), resize_mask(mask, size, size)};
}

// ---------------------------------------------------------------------------
// Manifests

DatasetManifest DatasetManifest::subset(Split split) const {
  DatasetManifest out;
  out.provenance = provenance;
  for (const Sample& s : samples) {
    if (s.split == split) out.samples.push_back(s);
  }
  return out;
}

bool DatasetManifest::has_split_tags() const {
  return std::any_of(samples.begin(), samples.end(),
                     [](const Sample& s) { return s.split.has_value(); });
}

const Sample* DatasetManifest::find(const std::string& id) const {
  for (const Sample& s : samples) {
    if (s.id == id) return &s;
  }
  return nullptr;
}

DatasetManifest load_manifest(const fs::path& path) {
  const std::string where = "manifest '" + path.string() + "'";
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_bytes(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + " is not valid JSON: " + e.what());
  }
  DatasetManifest manifest;
  const nlohmann::json* list = &doc;
  if (doc.is_object()) {
    if (doc.contains("provenance")) manifest.provenance = doc["provenance"].get<std::string>();
    if (!doc.contains("samples")) throw IoError(where + " has no 'samples' array");
    list = &doc["samples"];
  }
  if (!list->is_array()) throw IoError(where + " must hold a JSON array of samples");
  const fs::path base = path.parent_path();
  std::set<std::string> ids;
  std::size_t tagged = 0;
  for (const nlohmann::json& item : *list) {
    Sample s;
    try {
      s.id = item.at("id").get<std::string>();
      s.image = base / item.at("image").get<std::string>();
      if (item.contains("mask") && !item["mask"].is_null()) {
        s.mask = base / item["mask"].get<std::string>();
      }
      if (item.contains("split") && !item["split"].is_null()) {
        const std::string tag = item["split"].get<std::string>();
        if (tag == "train") {
          s.split = Split::kTrain;
        } else if (tag == "test") {
          s.split = Split::kTest;
        } else {
          throw IoError(where + ": sample '" + s.id + "' has unknown split '" + tag + "'");
        }
        ++tagged;
      }
    } catch (const nlohmann::json::exception& e) {
      throw IoError(where + " has a malformed sample entry: " + e.what());
    }
    if (!ids.insert(s.id).second) throw IoError(where + " repeats sample id '" + s.id + "'");
    manifest.samples.push_back(std::move(s));
  }
  if (tagged != 0 && tagged != manifest.samples.size()) {
    throw IoError(where + ": split tags must cover every sample or none");
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  auto relative = [&base](const fs::path& p) {
    const fs::path abs = fs::absolute(p).lexically_normal();
    const fs::path rel = abs.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return abs.generic_string();
  };
  nlohmann::json samples = nlohmann::json::array();
  for (const Sample& s : manifest.samples) {
    nlohmann::json item = {{"id", s.id}, {"image", relative(s.image)}};
    if (s.mask) item["mask"] = relative(*s.mask);
    if (s.split) item["split"] = *s.split == Split::kTrain ? "train" : "test";
    samples.push_back(std::move(item));
  }
  nlohmann::json doc = samples;
  if (!manifest.provenance.empty()) {
    doc = {{"provenance", manifest.provenance}, {"samples", samples}};
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << doc.dump(2) << '\n';
  if (!out) throw IoError("failed writing manifest '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Phantoms

void PhantomParams::validate() const {
  auto range_ok = [](const std::pair<double, double>& r, double lo, double hi) {
    return r.first >= lo && r.second <= hi && r.first <= r.second;
  };
  if (count == 0) throw ConfigError("phantom count must be positive");
  if (image_size < 32) throw ConfigError("phantom image_size must be >= 32");
  if (!range_ok(semi_axis_x, 0.02, 0.2)) {
    throw ConfigError("phantom semi_axis_x must lie within [0.02, 0.2]");
  }
  if (!range_ok(semi_axis_y, 0.02, 0.45)) {
    throw ConfigError("phantom semi_axis_y must lie within [0.02, 0.45]");
  }
  if (max_rotation_deg < 0.0 || max_rotation_deg > 45.0) {
    throw ConfigError("phantom max_rotation_deg must lie within [0, 45]");
  }
  if (max_shear < 0.0 || max_shear > 0.5) throw ConfigError("phantom max_shear must lie within [0, 0.5]");
  if (noise_sigma < 0.0) throw ConfigError("phantom noise_sigma must be >= 0");
  if (occluder_probability < 0.0 || occluder_probability > 1.0) {
    throw ConfigError("phantom occluder_probability must lie within [0, 1]");
  }
  if (!range_ok(occluder_intensity, 0.0, 1.0)) {
    throw ConfigError("phantom occluder_intensity must lie within [0, 1]");
  }
  if (!range_ok(occluder_radius, 0.0, 0.5)) {
    throw ConfigError("phantom occluder_radius must lie within [0, 0.5]");
  }
}

namespace {

struct Ellipse {
  double cx, cy, a, b, cos_t, sin_t, shear;

  // Normalized radius: <= 1 inside.
  double radius(double x, double y) const {
    const double dx = x - cx;
    const double dy = y - cy;
    const double u = cos_t * dx + sin_t * dy;
    const double v = -sin_t * dx + cos_t * dy;
    const double us = u - shear * v;
    return std::sqrt((us / a) * (us / a) + (v / b) * (v / b));
  }
  // Point at normalized radius r and angle phi.
  std::pair<double, double> point(double r, double phi) const {
    const double v = r * b * std::sin(phi);
    const double u = r * a * std::cos(phi) + shear * v;
    return {cx + cos_t * u - sin_t * v, cy + sin_t * u + cos_t * v};
  }
};

Ellipse draw_lung(Rng& rng, const PhantomParams& p, double center_fraction) {
  const double s = static_cast<double>(p.image_size);
  const double theta = rng.uniform(-p.max_rotation_deg, p.max_rotation_deg) *
                       std::numbers::pi / 180.0;
  Ellipse e{};
  e.cx = s * (center_fraction + rng.uniform(-0.03, 0.03));
  e.cy = s * rng.uniform(0.45, 0.55);
  e.a = s * rng.uniform(p.semi_axis_x.first, p.semi_axis_x.second);
  e.b = s * rng.uniform(p.semi_axis_y.first, p.semi_axis_y.second);
  e.cos_t = std::cos(theta);
  e.sin_t = std::sin(theta);
  e.shear = rng.uniform(-p.max_shear, p.max_shear);
  return e;
}

}  // namespace

std::pair<GrayImage, BinaryMask> generate_phantom(const PhantomParams& params,
                                                  std::size_t index) {
  params.validate();
  const std::size_t n = params.image_size;
  const double size = static_cast<double>(n);
  Rng rng(derive_seed(params.seed, index));

  // Draw lungs until they rasterize as two separate components clear of the
  // image border.
  Ellipse lungs[2];
  BinaryMask mask;
  constexpr int kMaxAttempts = 200;
  int attempt = 0;
  for (; attempt < kMaxAttempts; ++attempt) {
    lungs[0] = draw_lung(rng, params, 0.30);
    lungs[1] = draw_lung(rng, params, 0.70);
    mask = BinaryMask(n, n);
    bool touches_border = false;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double x = static_cast<double>(j);
        const double y = static_cast<double>(i);
        if (lungs[0].radius(x, y) <= 1.0 || lungs[1].radius(x, y) <= 1.0) {
          mask.set(i, j, true);
          touches_border = touches_border || i < 2 || j < 2 || i + 2 >= n || j + 2 >= n;
        }
      }
    }
    if (!touches_border && label_components(mask).count() == 2) break;
  }
  if (attempt == kMaxAttempts) {
    throw ConfigError("phantom parameters cannot place two separate lungs");
  }

  GrayImage image(n, n);
  const double base = rng.uniform(0.10, 0.18);
  const double tilt = rng.uniform(-0.06, 0.06);
  const double lung_level = rng.uniform(0.45, 0.55);
  const double rim_level = rng.uniform(0.78, 0.88);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double x = static_cast<double>(j);
      const double y = static_cast<double>(i);
      double v = base + 0.12 * (y / size) + tilt * (x / size - 0.5);
      const double r = std::min(lungs[0].radius(x, y), lungs[1].radius(x, y));
      if (r <= 1.0) {
        // Bright rim over the outer 20% of the radius.
        const double rim = std::clamp((r - 0.8) / 0.2, 0.0, 1.0);
        v = lung_level + (rim_level - lung_level) * rim;
      }
      image.at(i, j) = static_cast<float>(v);
    }
  }
  if (rng.uniform() < params.occluder_probability) {
    const Ellipse& lung = lungs[rng.below(2)];
    const auto [ox, oy] =
        lung.point(rng.uniform(0.4, 0.9), rng.uniform(0.0, 2.0 * std::numbers::pi));
    const double radius = size * rng.uniform(params.occluder_radius.first,
                                             params.occluder_radius.second);
    const double level =
        rng.uniform(params.occluder_intensity.first, params.occluder_intensity.second);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double dx = static_cast<double>(j) - ox;
        const double dy = static_cast<double>(i) - oy;
        if (dx * dx + dy * dy <= radius * radius) image.at(i, j) = static_cast<float>(level);
      }
    }
  }
  for (float& v : image.values) {
    const double noisy = std::clamp(v + params.noise_sigma * rng.normal(), 0.0, 1.0);
    // Quantize exactly as an 8-bit file would store it.
    v = static_cast<float>(static_cast<double>(std::lround(noisy * 255.0)) / 255.0);
  }
  return {std::move(image), std::move(mask)};
}

DatasetManifest generate_phantoms(const PhantomParams& params, const fs::path& out_dir) {
  params.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  if (!ec) fs::create_directories(out_dir / "masks", ec);
  if (ec) throw IoError("cannot create phantom directory '" + out_dir.string() + "': " + ec.message());
  DatasetManifest manifest;
  manifest.provenance = "synthetic lung phantoms, seed " + std::to_string(params.seed);
  const int digits = std::max<int>(4, static_cast<int>(std::to_string(params.count - 1).size()));
  for (std::size_t i = 0; i < params.count; ++i) {
    std::string number = std::to_string(i);
    number.insert(0, static_cast<std::size_t>(std::max(0, digits - static_cast<int>(number.size()))), '0');
    const std::string id = "phantom_" + number;
    auto [image, mask] = generate_phantom(params, i);
    Sample s{id, out_dir / "images" / (id + ".pgm"), out_dir / "masks" / (id + ".pgm"), {}};
    save_pgm(image, s.image);
    save_mask(mask, *s.mask);
    manifest.samples.push_back(std::move(s));
  }
  save_manifest(manifest, out_dir / "manifest.json");
  return manifest;
}

RgbImage render_overlay(const GrayImage& image, const BinaryMask& gt, const BinaryMask& pred) {
  if (image.height != gt.height() || image.width != gt.width() ||
      image.height != pred.height() || image.width != pred.width()) {
    throw ShapeError("render_overlay: image, ground truth and prediction sizes differ");
  }
  const BinaryMask gb = boundary_pixels(gt);
  const BinaryMask pb = boundary_pixels(pred);
  RgbImage out{image.height, image.width, std::vector<std::uint8_t>(3 * image.values.size())};
  for (std::size_t p = 0; p < image.values.size(); ++p) {
    const auto g = static_cast<std::uint8_t>(
        std::lround(std::clamp(static_cast<double>(image.values[p]), 0.0, 1.0) * 255.0));
    std::uint8_t* px = out.rgb.data() + 3 * p;
    const bool in_gt = gb.values()[p] != 0;
    const bool in_pred = pb.values()[p] != 0;
    if (in_gt && in_pred) {
      px[0] = 255, px[1] = 255, px[2] = 0;
    } else if (in_gt) {
      px[0] = 0, px[1] = 255, px[2] = 0;
    } else if (in_pred) {
      px[0] = 255, px[1] = 0, px[2] = 0;
    } else {
      px[0] = g, px[1] = g, px[2] = g;
    }
  }
  return out;
}

}  // namespace lungseg
