// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/toy_io.hpp"

#include <cmath>
#include <map>
#include <set>
#include <string>

#include "gmnf/errors.hpp"

namespace gmnf {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json to_json(const ToyModelConfig& cfg) {
  ordered_json j;
  j["layers"] = cfg.layers;
  j["dim"] = cfg.dim;
  j["heads"] = cfg.heads;
  j["tokens"] = cfg.tokens;
  j["classes"] = cfg.classes;
  j["modalities"] = cfg.modalities;
  ordered_json fusion = ordered_json::array();
  for (ToyFusion f : cfg.fusion) fusion.push_back(std::string(to_string(f)));
  j["fusion"] = fusion;
  j["theta"] = cfg.theta;
  j["l1_weight"] = cfg.l1_weight;
  j["relation"] = std::string(to_string(cfg.relation));
  j["noise"] = cfg.gemini.noise;
  j["relation_enabled"] = cfg.gemini.relation;
  j["self_entry"] = cfg.gemini.self_entry;
  j["positional"] = cfg.positional;
  j["positional_init"] = cfg.positional_init;
  return j;
}

ToyModelConfig model_config_from_json(const json& j) {
  try {
    ToyModelConfig cfg;
    cfg.layers = j.at("layers").get<std::size_t>();
    cfg.dim = j.at("dim").get<std::size_t>();
    cfg.heads = j.at("heads").get<std::size_t>();
    cfg.tokens = j.at("tokens").get<std::size_t>();
    cfg.classes = j.at("classes").get<std::size_t>();
    cfg.modalities = j.at("modalities").get<std::size_t>();
    cfg.fusion.clear();
    for (const auto& f : j.at("fusion")) cfg.fusion.push_back(parse_toy_fusion(f.get<std::string>()));
    cfg.theta = j.at("theta").get<double>();
    cfg.l1_weight = j.at("l1_weight").get<double>();
    cfg.relation = parse_relation_variant(j.at("relation").get<std::string>());
    cfg.gemini.noise = j.at("noise").get<bool>();
    cfg.gemini.relation = j.at("relation_enabled").get<bool>();
    cfg.gemini.self_entry = j.at("self_entry").get<bool>();
    cfg.positional = j.at("positional").get<bool>();
    cfg.positional_init = j.at("positional_init").get<double>();
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
}

ordered_json to_json(const ToyDatasetConfig& cfg) {
  ordered_json j;
  j["tokens"] = cfg.tokens;
  j["channels"] = cfg.channels;
  j["classes"] = cfg.classes;
  j["samples"] = cfg.samples;
  j["modalities"] = cfg.modalities;
  j["seed"] = cfg.seed;
  j["noise"] = cfg.noise;
  j["rule"] = std::string(to_string(cfg.rule));
  return j;
}

ToyDatasetConfig dataset_config_from_json(const json& j) {
  try {
    ToyDatasetConfig cfg;
    cfg.tokens = j.at("tokens").get<std::size_t>();
    cfg.channels = j.at("channels").get<std::size_t>();
    cfg.classes = j.at("classes").get<std::size_t>();
    cfg.samples = j.at("samples").get<std::size_t>();
    cfg.modalities = j.at("modalities").get<std::size_t>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.noise = j.at("noise").get<double>();
    cfg.rule = parse_label_rule(j.at("rule").get<std::string>());
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset config: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("dataset config: ") + e.what());
  }
}

Checkpoint model_checkpoint(const ToyModel& model) {
  Checkpoint ckpt;
  ckpt.metadata["kind"] = "toy_model";
  ckpt.metadata["model"] = json::parse(to_json(model.config).dump());
  for_each_param(model, [&](const std::string& name, const Tensor& t) {
    ckpt.tensors.push_back({name, t});
  });
  return ckpt;
}

ToyModel model_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("model")) throw FormatError("checkpoint has no model config");
  const ToyModelConfig cfg = model_config_from_json(ckpt.metadata.at("model"));
  ToyModel model = ToyModel::init(cfg, 0);
  std::map<std::string, const Tensor*> stored;
  for (const auto& nt : ckpt.tensors) stored[nt.name] = &nt.tensor;
  std::set<std::string> used;
  for_each_param(model, [&](const std::string& name, Tensor& t) {
    auto it = stored.find(name);
    if (it == stored.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " +
                        shape_string(it->second->shape()) + ", model expects " +
                        shape_string(t.shape()));
    }
    t = *it->second;
    used.insert(name);
  });
  for (const auto& [name, t] : stored) {
    if (!used.count(name)) throw FormatError("checkpoint has unexpected tensor '" + name + "'");
  }
  return model;
}

Checkpoint dataset_checkpoint(const Dataset& data) {
  const auto& cfg = data.config;
  const std::size_t n = cfg.tokens, d = cfg.channels, s = data.size();
  Checkpoint ckpt;
  ckpt.metadata["kind"] = "toy_dataset";
  ckpt.metadata["dataset"] = json::parse(to_json(cfg).dump());
  ckpt.metadata["size"] = s;
  for (std::size_t m = 0; m < cfg.modalities; ++m) {
    Tensor x({s * n, d});
    for (std::size_t i = 0; i < s; ++i) {
      const auto src = data.inputs[i][m].values();
      std::copy(src.begin(), src.end(), x.data() + i * n * d);
    }
    ckpt.tensors.push_back({"x" + std::to_string(m), std::move(x)});
  }
  Tensor labels({s, n});
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t t = 0; t < n; ++t) labels(i, t) = data.labels[i][t];
  }
  ckpt.tensors.push_back({"labels", std::move(labels)});
  return ckpt;
}

Dataset dataset_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("dataset") || !ckpt.metadata.contains("size")) {
    throw FormatError("checkpoint has no dataset config");
  }
  Dataset data;
  data.config = dataset_config_from_json(ckpt.metadata.at("dataset"));
  const std::size_t n = data.config.tokens, d = data.config.channels;
  const std::size_t s = ckpt.metadata.at("size").get<std::size_t>();
  const Tensor& labels = ckpt.get("labels");
  if (labels.shape() != Shape{s, n}) throw FormatError("dataset labels have the wrong shape");
  data.inputs.assign(s, std::vector<Tensor>(data.config.modalities));
  data.labels.assign(s, std::vector<int>(n));
  for (std::size_t m = 0; m < data.config.modalities; ++m) {
    const Tensor& x = ckpt.get("x" + std::to_string(m));
    if (x.shape() != Shape{s * n, d}) throw FormatError("dataset inputs have the wrong shape");
    for (std::size_t i = 0; i < s; ++i) {
      Tensor xi({n, d});
      std::copy(x.data() + i * n * d, x.data() + (i + 1) * n * d, xi.data());
      data.inputs[i][m] = std::move(xi);
    }
  }
  for (std::size_t i = 0; i < s; ++i) {
    for (std::size_t t = 0; t < n; ++t) {
      const double v = labels(i, t);
      if (v != std::floor(v) || v < 0 || v >= static_cast<double>(data.config.classes)) {
        throw FormatError("dataset label out of range");
      }
      data.labels[i][t] = static_cast<int>(v);
    }
  }
  return data;
}

}  // namespace gmnf
