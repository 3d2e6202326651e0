// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gmnf/tensor.hpp"

namespace gmnf {

// Binary layout (all integers little-endian):
//   bytes 0..3    magic "GMNF"
//   bytes 4..7    u32 format version
//   bytes 8..15   u64 manifest length L
//   bytes 16..    manifest, UTF-8 JSON of L bytes:
//                 {"tensors": [{"name", "shape", "offset", "bytes"}...],
//                  "payload_bytes": P, "metadata": {...}}
//   then          payload of P bytes, row-major little-endian f64 arrays at
//                 the listed offsets (relative to the payload start)

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::vector<NamedTensor> tensors;
  nlohmann::json metadata = nlohmann::json::object();

  const Tensor& get(std::string_view name) const;
  std::size_t payload_bytes() const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError naming the byte position of the first inconsistency.
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace gmnf
