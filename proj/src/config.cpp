// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gmnf/errors.hpp"
#include "gmnf/rng.hpp"

namespace gmnf {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = s.find(',', start);
    out.push_back(trim(s.substr(start, comma == std::string_view::npos ? s.npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if constexpr (std::is_unsigned_v<T>) {
    if (s.front() == '-' || s.front() == '+') return false;
  }
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

}  // namespace

const std::vector<std::string>& Config::known_keys() {
  static const std::vector<std::string> keys = {
      "seed",
      "dataset.tokens",
      "dataset.channels",
      "dataset.classes",
      "dataset.samples",
      "dataset.eval_samples",
      "dataset.modalities",
      "dataset.noise",
      "dataset.rule",
      "model.layers",
      "model.heads",
      "model.fusion",
      "model.theta",
      "model.l1_weight",
      "model.relation",
      "model.noise",
      "model.relation_enabled",
      "model.self_entry",
      "model.positional",
      "model.positional_init",
      "train.lr",
      "train.momentum",
      "train.epochs",
      "train.batch",
      "bench.ops",
      "bench.n_list",
      "bench.d",
      "bench.h",
      "bench.repeats",
      "bench.memory_cap",
      "sweep.theta_list",
      "sweep.seeds",
      "sweep.workers",
  };
  return keys;
}

Config Config::parse(std::string_view text, std::string_view source) {
  Config cfg;
  cfg.source_ = std::string(source);
  const auto& known = known_keys();
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string at = cfg.source_ + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(at + "expected 'key = value'");
    const std::string key(trim(line.substr(0, eq)));
    const std::string value(trim(line.substr(eq + 1)));
    if (key.empty()) throw ConfigError(at + "missing key");
    if (value.empty()) throw ConfigError(at + "missing value for '" + key + "'");
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw ConfigError(at + "unknown key '" + key + "'");
    }
    if (auto it = cfg.entries_.find(key); it != cfg.entries_.end()) {
      throw ConfigError(at + "duplicate key '" + key + "' (first set on line " +
                        std::to_string(it->second.line) + ")");
    }
    cfg.entries_.emplace(key, Entry{value, line_no});
  }
  return cfg;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError(path.string() + ": cannot open config file");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse(ss.str(), path.string());
}

bool Config::has(std::string_view key) const { return entries_.find(key) != entries_.end(); }

std::size_t Config::line(std::string_view key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? 0 : it->second.line;
}

std::string Config::where(std::string_view key) const {
  const std::size_t l = line(key);
  if (l == 0) return "'" + std::string(key) + "': ";
  return source_ + ":" + std::to_string(l) + ": '" + std::string(key) + "': ";
}

std::string Config::get_string(std::string_view key, std::string_view fallback) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? std::string(fallback) : it->second.value;
}

double Config::get_double(std::string_view key, double fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  double v = 0;
  if (!parse_number(std::string_view(it->second.value), v) || !std::isfinite(v)) {
    throw ConfigError(where(key) + "expected a number, got '" + it->second.value + "'");
  }
  return v;
}

std::size_t Config::get_size(std::string_view key, std::size_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::size_t v = 0;
  if (!parse_number(std::string_view(it->second.value), v)) {
    throw ConfigError(where(key) + "expected a non-negative integer, got '" + it->second.value + "'");
  }
  return v;
}

std::uint64_t Config::get_u64(std::string_view key, std::uint64_t fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::uint64_t v = 0;
  if (!parse_number(std::string_view(it->second.value), v)) {
    throw ConfigError(where(key) + "expected a non-negative integer, got '" + it->second.value + "'");
  }
  return v;
}

bool Config::get_bool(std::string_view key, bool fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  const std::string& v = it->second.value;
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError(where(key) + "expected true/false, got '" + v + "'");
}

std::vector<double> Config::get_double_list(std::string_view key, std::vector<double> fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<double> out;
  for (auto item : split_list(it->second.value)) {
    double v = 0;
    if (!parse_number(item, v) || !std::isfinite(v)) {
      throw ConfigError(where(key) + "bad list element '" + std::string(item) + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::size_t> Config::get_size_list(std::string_view key,
                                               std::vector<std::size_t> fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<std::size_t> out;
  for (auto item : split_list(it->second.value)) {
    std::size_t v = 0;
    if (!parse_number(item, v)) {
      throw ConfigError(where(key) + "bad list element '" + std::string(item) + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::uint64_t> Config::get_u64_list(std::string_view key,
                                                std::vector<std::uint64_t> fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<std::uint64_t> out;
  for (auto item : split_list(it->second.value)) {
    std::uint64_t v = 0;
    if (!parse_number(item, v)) {
      throw ConfigError(where(key) + "bad list element '" + std::string(item) + "'");
    }
    out.push_back(v);
  }
  return out;
}

std::vector<std::string> Config::get_string_list(std::string_view key,
                                                 std::vector<std::string> fallback) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return fallback;
  std::vector<std::string> out;
  for (auto item : split_list(it->second.value)) {
    if (item.empty()) throw ConfigError(where(key) + "empty list element");
    out.emplace_back(item);
  }
  return out;
}

void Config::set(std::string_view key, std::string value) {
  const auto& known = known_keys();
  if (std::find(known.begin(), known.end(), key) == known.end()) {
    throw ConfigError("unknown key '" + std::string(key) + "'");
  }
  entries_[std::string(key)] = Entry{std::move(value), 0};
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, e] : entries_) out += k + " = " + e.value + "\n";
  return out;
}

std::uint64_t Config::hash() const { return fnv1a64(canonical()); }

}  // namespace gmnf
