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
#include "lungseg/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "lungseg/json_io.hpp"

namespace lungseg {
namespace {

constexpr char kMagic[4] = {'D', 'L', 'F', 'N'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint32_t get_u32(const std::string& in, std::size_t at) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  }
  return v;
}

struct TensorEntry {
  std::string name;
  std::string kind;
  std::vector<std::size_t> shape;
  float* data;
};

template <typename Net>
std::vector<TensorEntry> entries(Net& net) {
  std::vector<TensorEntry> out;
  for (Parameter<float>* p : net.parameters()) {
    out.push_back({p->name, "parameter", p->dims, p->value.data()});
  }
  for (const Buffer<float>& b : net.buffers()) {
    out.push_back({b.name, "buffer", {b.values->size()}, b.values->data()});
  }
  return out;
}

std::string describe(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? ", " : "") + std::to_string(shape[i]);
  return s + "]";
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Parsed {
  nlohmann::json header;
  std::string bytes;
  std::size_t data_start = 0;
};

Parsed parse(const std::filesystem::path& path) {
  Parsed p;
  p.bytes = read_file(path);
  const std::string where = "checkpoint '" + path.string() + "'";
  if (p.bytes.size() < 12) throw IoError(where + " is truncated (no header)");
  if (p.bytes.compare(0, 4, kMagic, 4) != 0) throw IoError(where + " has bad magic bytes");
  const std::uint32_t version = get_u32(p.bytes, 4);
  if (version != kCheckpointVersion) {
    throw IoError(where + " has unsupported format version " + std::to_string(version));
  }
  const std::uint32_t length = get_u32(p.bytes, 8);
  if (p.bytes.size() < 12 + static_cast<std::size_t>(length)) {
    throw IoError(where + " is truncated inside the header");
  }
  try {
    p.header = nlohmann::json::parse(p.bytes.begin() + 12, p.bytes.begin() + 12 + length);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + " has a corrupt header: " + e.what());
  }
  p.data_start = 12 + length;
  return p;
}

void restore(Network<float>& net, const Parsed& parsed, const std::string& where) {
  const nlohmann::json& tensors = parsed.header.at("tensors");
  std::vector<TensorEntry> expected = entries(net);
  if (tensors.size() != expected.size()) {
    // Report the first name that differs before falling back to the count.
    for (std::size_t i = 0; i < std::min(tensors.size(), expected.size()); ++i) {
      if (tensors[i].at("name").get<std::string>() != expected[i].name) {
        throw IoError(where + ": parameter mismatch at '" + expected[i].name +
                      "' (checkpoint has '" + tensors[i].at("name").get<std::string>() + "')");
      }
    }
    throw IoError(where + ": has " + std::to_string(tensors.size()) +
                  " tensors, network expects " + std::to_string(expected.size()));
  }
  const std::size_t payload = parsed.bytes.size() - parsed.data_start;
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const nlohmann::json& t = tensors[i];
    const std::string name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<std::vector<std::size_t>>();
    if (name != expected[i].name) {
      throw IoError(where + ": parameter mismatch at '" + expected[i].name +
                    "' (checkpoint has '" + name + "')");
    }
    if (shape != expected[i].shape) {
      throw IoError(where + ": shape mismatch for '" + name + "': checkpoint " +
                    describe(shape) + ", network " + describe(expected[i].shape));
    }
    const std::size_t count = t.at("count").get<std::size_t>();
    const std::size_t offset = t.at("offset").get<std::size_t>();
    std::size_t declared = 1;
    for (std::size_t d : shape) declared *= d;
    if (count != declared || offset != expected_offset) {
      throw IoError(where + ": inconsistent tensor table entry for '" + name + "'");
    }
    if (offset + 4 * count > payload) throw IoError(where + " is truncated in '" + name + "'");
    float* dst = expected[i].data;
    const char* src = parsed.bytes.data() + parsed.data_start + offset;
    for (std::size_t k = 0; k < count; ++k) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) {
        bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(src[4 * k + b])) << (8 * b);
      }
      dst[k] = std::bit_cast<float>(bits);
    }
    expected_offset += 4 * count;
  }
  if (expected_offset != payload) {
    throw IoError(where + " has " + std::to_string(payload - expected_offset) +
                  " unexpected trailing bytes");
  }
}

CheckpointMetadata read_metadata(const nlohmann::json& header) {
  CheckpointMetadata m;
  const nlohmann::json& j = header.at("metadata");
  m.epoch = j.at("epoch").get<std::size_t>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.input_size = j.at("input_size").get<std::size_t>();
  return m;
}

}  // namespace

void save_checkpoint(const Network<float>& net, const std::filesystem::path& path,
                     const CheckpointMetadata& metadata) {
  auto& mutable_net = const_cast<Network<float>&>(net);
  std::vector<TensorEntry> table = entries(mutable_net);

  nlohmann::json header;
  header["config"] = net.config();
  header["metadata"] = {{"epoch", metadata.epoch},
                        {"seed", metadata.seed},
                        {"input_size", metadata.input_size}};
  nlohmann::json tensors = nlohmann::json::array();
  std::string payload;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const float* src = table[i].data;
    std::size_t count = 1;
    for (std::size_t d : table[i].shape) count *= d;
    tensors.push_back({{"name", table[i].name},
                       {"kind", table[i].kind},
                       {"shape", table[i].shape},
                       {"offset", payload.size()},
                       {"count", count}});
    for (std::size_t k = 0; k < count; ++k) put_u32(payload, std::bit_cast<std::uint32_t>(src[k]));
  }
  header["tensors"] = std::move(tensors);
  const std::string text = header.dump();

  std::string bytes(kMagic, 4);
  put_u32(bytes, kCheckpointVersion);
  put_u32(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  bytes += payload;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const Parsed parsed = parse(path);
  const std::string where = "checkpoint '" + path.string() + "'";
  try {
    NetworkConfig config = parsed.header.at("config").get<NetworkConfig>();
    Checkpoint ckpt{Network<float>::build(config, 0), read_metadata(parsed.header)};
    restore(ckpt.network, parsed, where);
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + " has a malformed header: " + e.what());
  } catch (const ConfigError& e) {
    throw IoError(where + " embeds an invalid config: " + e.what());
  }
}

CheckpointMetadata load_checkpoint_into(Network<float>& net, const std::filesystem::path& path) {
  const Parsed parsed = parse(path);
  const std::string where = "checkpoint '" + path.string() + "'";
  try {
    restore(net, parsed, where);
    return read_metadata(parsed.header);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(where + " has a malformed header: " + e.what());
  }
}

}  // namespace lungseg
