// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gmnf/config.hpp"
#include "gmnf/toy.hpp"

namespace gmnf::cli {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kCheckFailed = 1, kUsage = 2 };

/// Runs one command line (without the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Shortest round-trip decimal form.
std::string format_double(double v);

struct Experiment {
  ToyDatasetConfig data;
  ToyModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 1;
  std::size_t eval_samples = 512;
};

/// Reads dataset.*, model.* and train.* keys. `fusion` is used when
/// model.fusion is absent.
Experiment experiment_from_config(const Config& cfg, ToyFusion fusion);

std::string train_metrics_csv(const TrainHistory& history);
std::string exchange_rates_csv(const std::vector<std::vector<double>>& rates);
std::string sweep_csv(const SweepResult& result, std::size_t modalities);
std::string sweep_summary_csv(const SweepResult& result);
std::string trace_csv(const std::vector<LayerAttention>& trace);

}  // namespace gmnf::cli
