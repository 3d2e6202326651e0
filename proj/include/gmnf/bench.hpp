// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace gmnf {

struct BenchConfig {
  std::size_t repeats = 5;
  std::size_t warmup = 3;
  std::uint64_t seed = 1;
  /// Largest N * d accepted.
  std::size_t memory_cap = std::size_t{1} << 30;
  /// Pin the measuring thread to the CPU it starts on.
  bool pin_cpu = true;
  /// MAD / median above this sets load_warning.
  double load_threshold = 0.2;
};

struct BenchResult {
  std::string op;
  std::size_t n = 0, d = 0, h = 0;
  std::size_t repeats = 0;
  std::size_t warmup = 0;
  std::vector<double> samples_ns;
  double median_ns = 0.0;
  double mad_ns = 0.0;
  bool load_warning = false;
  bool pinned = false;
  std::uint64_t input_checksum = 0;
  std::uint64_t output_checksum = 0;
};

/// Ops accepted by time_op: exchange, cross_attention, pixelwise, geminifusion.
const std::vector<std::string>& bench_ops();

/// Times the forward pass of `op` on fresh random inputs drawn from cfg.seed.
/// Warmup iterations are discarded. Throws ConfigError for unknown ops or
/// repeats < 5, ResourceError when n * d exceeds the cap and StateError when
/// another measurement is in progress or an input changed while timing.
BenchResult time_op(std::string_view op, std::size_t n, std::size_t d, std::size_t h,
                    const BenchConfig& cfg = {});

/// True while a time_op call is measuring in this process.
bool bench_in_progress();

struct ScalingCurve {
  std::string op;
  std::size_t d = 0, h = 0;
  std::vector<BenchResult> points;
  /// Least-squares slope of log(median ns) against log(N).
  double slope = 0.0;
};

std::vector<std::size_t> default_scaling_sizes();

ScalingCurve scaling_curve(std::string_view op, std::size_t d, std::size_t h,
                           const std::vector<std::size_t>& n_list, const BenchConfig& cfg = {});

double median(std::vector<double> xs);
/// Median absolute deviation from the median.
double median_abs_deviation(const std::vector<double>& xs);

/// Header `op,n,d,h,median_ns,mad_ns`, one row per result.
std::string bench_csv(const std::vector<BenchResult>& results);
nlohmann::ordered_json to_json(const BenchResult& r);

}  // namespace gmnf
