// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>

#include "gmnf/errors.hpp"

namespace gmnf {

namespace {

constexpr char kMagic[4] = {'G', 'M', 'N', 'F'};
constexpr std::size_t kHeaderBytes = 16;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_le(std::string_view in, std::size_t pos, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

std::string at(std::size_t pos) { return "checkpoint byte " + std::to_string(pos) + ": "; }

}  // namespace

const Tensor& Checkpoint::get(std::string_view name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.tensor;
  throw FormatError("checkpoint has no tensor '" + std::string(name) + "'");
}

std::size_t Checkpoint::payload_bytes() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.tensor.size() * sizeof(double);
  return n;
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  nlohmann::ordered_json manifest;
  auto entries = nlohmann::ordered_json::array();
  std::set<std::string> names;
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    if (!names.insert(t.name).second) {
      throw FormatError("checkpoint: duplicate tensor name '" + t.name + "'");
    }
    const std::size_t bytes = t.tensor.size() * sizeof(double);
    entries.push_back(
        {{"name", t.name}, {"shape", t.tensor.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  manifest["tensors"] = std::move(entries);
  manifest["payload_bytes"] = offset;
  manifest["metadata"] = ckpt.metadata;
  const std::string text = manifest.dump();

  std::string out(kMagic, 4);
  put_le(out, ckpt.version, 4);
  put_le(out, text.size(), 8);
  out += text;
  out.reserve(out.size() + offset);
  for (const auto& t : ckpt.tensors) {
    for (double v : t.tensor.values()) put_le(out, std::bit_cast<std::uint64_t>(v), 8);
  }
  return out;
}

Checkpoint parse_checkpoint(std::string_view bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw FormatError(at(bytes.size()) + "truncated header: expected " +
                      std::to_string(kHeaderBytes) + " bytes, got " + std::to_string(bytes.size()));
  }
  for (std::size_t i = 0; i < 4; ++i) {
    if (bytes[i] != kMagic[i]) throw FormatError(at(i) + "bad magic, not a GMNF checkpoint");
  }
  Checkpoint ckpt;
  ckpt.version = static_cast<std::uint32_t>(get_le(bytes, 4, 4));
  if (ckpt.version != kCheckpointVersion) {
    throw FormatError(at(4) + "unsupported format version " + std::to_string(ckpt.version) +
                      " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  const std::uint64_t manifest_len = get_le(bytes, 8, 8);
  if (manifest_len > bytes.size() - kHeaderBytes) {
    throw FormatError(at(bytes.size()) + "truncated manifest: expected " +
                      std::to_string(manifest_len) + " bytes, got " +
                      std::to_string(bytes.size() - kHeaderBytes));
  }
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.substr(kHeaderBytes, manifest_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(at(kHeaderBytes + (e.byte > 0 ? e.byte - 1 : 0)) + "malformed manifest");
  }

  const std::size_t payload_start = kHeaderBytes + manifest_len;
  const std::size_t actual = bytes.size() - payload_start;
  std::size_t expected = 0;
  try {
    expected = manifest.at("payload_bytes").get<std::size_t>();
    if (manifest.contains("metadata")) ckpt.metadata = manifest.at("metadata");
    std::size_t cursor = 0;
    std::set<std::string> names;
    for (const auto& e : manifest.at("tensors")) {
      NamedTensor nt;
      nt.name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto len = e.at("bytes").get<std::size_t>();
      if (!names.insert(nt.name).second) {
        throw FormatError(at(kHeaderBytes) + "duplicate tensor name '" + nt.name + "'");
      }
      const std::size_t need = shape_numel(shape) * sizeof(double);
      if (need != len) {
        throw FormatError(at(payload_start + offset) + "tensor '" + nt.name + "' has shape " +
                          shape_string(shape) + " needing " + std::to_string(need) +
                          " bytes, manifest says " + std::to_string(len));
      }
      if (offset != cursor) {
        throw FormatError(at(payload_start + cursor) + "tensor '" + nt.name + "' starts at offset " +
                          std::to_string(offset) + ", expected " + std::to_string(cursor));
      }
      if (offset + len > actual) {
        throw FormatError(at(bytes.size()) + "truncated payload: expected " +
                          std::to_string(expected) + " bytes, got " + std::to_string(actual));
      }
      std::vector<double> data(shape_numel(shape));
      for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = std::bit_cast<double>(get_le(bytes, payload_start + offset + 8 * i, 8));
      }
      nt.tensor = Tensor(shape, std::move(data));
      ckpt.tensors.push_back(std::move(nt));
      cursor += len;
    }
    if (cursor != expected) {
      throw FormatError(at(payload_start + cursor) + "manifest tensors cover " +
                        std::to_string(cursor) + " bytes, payload_bytes says " +
                        std::to_string(expected));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(at(kHeaderBytes) + "invalid manifest: " + e.what());
  }
  if (actual != expected) {
    throw FormatError(at(payload_start + std::min(actual, expected)) +
                      (actual < expected ? "truncated payload: expected " : "trailing bytes: expected ") +
                      std::to_string(expected) + " bytes, got " + std::to_string(actual));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ResourceError("cannot open '" + path.string() + "' for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ResourceError("write to '" + path.string() + "' failed");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ResourceError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

}  // namespace gmnf
