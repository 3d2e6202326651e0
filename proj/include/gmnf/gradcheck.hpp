// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace gmnf {

struct GradCheckOptions {
  std::uint64_t seed = 1;
  std::size_t instances = 24;
  double step = 1e-5;
  double tolerance = 1e-6;
  /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-2;
  /// Test hook: perturb the analytic gradient of this op ("" for none).
  std::string inject_fault;
};

struct GradCheckEntry {
  std::string op;
  std::string parameter;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  std::size_t instances = 0;
  double tolerance = 0.0;

  const GradCheckEntry& worst() const;
  bool passed() const;
};

/// Central-difference check of every fusion backward pass over random small
/// instances (N <= 4, d <= 8, heads in {1, 2}). Ops covered: cross_attention,
/// pixelwise, geminifusion (all relation variants and ablation switches) and
/// exchange (with the score predictor and its L1 term).
GradCheckReport run_gradcheck(const GradCheckOptions& opts);

}  // namespace gmnf
