// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <json.hpp>

#include "gmnf/checkpoint.hpp"
#include "gmnf/toy.hpp"

namespace gmnf {

nlohmann::ordered_json to_json(const ToyModelConfig& cfg);
ToyModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::ordered_json to_json(const ToyDatasetConfig& cfg);
ToyDatasetConfig dataset_config_from_json(const nlohmann::json& j);

/// Every parameter under its for_each_param name; the model config goes into
/// metadata["model"].
Checkpoint model_checkpoint(const ToyModel& model);
/// Rebuilds a model from model_checkpoint output. Missing, extra or
/// misshapen tensors are FormatErrors.
ToyModel model_from_checkpoint(const Checkpoint& ckpt);

/// Inputs as "x{m}" [samples*N x d] and labels as "labels" [samples x N].
Checkpoint dataset_checkpoint(const Dataset& data);
Dataset dataset_from_checkpoint(const Checkpoint& ckpt);

}  // namespace gmnf
