// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace gmnf {

/// Flat `key = value` document. `#` starts a comment; blank lines are
/// ignored. Keys must appear in the whitelist and at most once.
class Config {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  static Config parse(std::string_view text, std::string_view source = "config");
  static Config load(const std::filesystem::path& path);

  static const std::vector<std::string>& known_keys();

  bool has(std::string_view key) const;
  /// Line number of `key`, or 0 when absent.
  std::size_t line(std::string_view key) const;

  std::string get_string(std::string_view key, std::string_view fallback) const;
  double get_double(std::string_view key, double fallback) const;
  std::size_t get_size(std::string_view key, std::size_t fallback) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<double> get_double_list(std::string_view key, std::vector<double> fallback) const;
  std::vector<std::size_t> get_size_list(std::string_view key, std::vector<std::size_t> fallback) const;
  std::vector<std::uint64_t> get_u64_list(std::string_view key,
                                          std::vector<std::uint64_t> fallback) const;
  std::vector<std::string> get_string_list(std::string_view key,
                                           std::vector<std::string> fallback) const;

  /// Sets a key as if it were given on `line` 0 (command-line override).
  void set(std::string_view key, std::string value);

  /// Sorted `key = value` lines; identical for equivalent documents.
  std::string canonical() const;
  std::uint64_t hash() const;

  /// Prefix for error messages about `key`: "<source>:<line>: ".
  std::string where(std::string_view key) const;

 private:
  std::string source_ = "config";
  std::map<std::string, Entry, std::less<>> entries_;
};

}  // namespace gmnf
