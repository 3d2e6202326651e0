// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "gmnf/exchange.hpp"
#include "gmnf/fusion.hpp"
#include "gmnf/relation.hpp"
#include "gmnf/tensor.hpp"

namespace gmnf {

// -- Synthetic dataset ----------------------------------------------------------

/// Label rules over the latent z of a token.
///   xor:      [z_0 > 0] xor [z_{d-1} > 0]        (2 classes)
///   sign:     [z_0 > 0]                          (2 classes)
///   quadrant: 2 [z_0 > 0] + [z_{d-1} > 0]        (4 classes)
enum class LabelRule { xor_sign, sign, quadrant };

std::string_view to_string(LabelRule r);
LabelRule parse_label_rule(std::string_view name);
std::size_t label_classes(LabelRule r);

struct ToyDatasetConfig {
  std::size_t tokens = 4;
  std::size_t channels = 8;
  std::size_t classes = 2;
  std::size_t samples = 2048;
  std::size_t modalities = 2;
  std::uint64_t seed = 1;
  double noise = 0.02;
  LabelRule rule = LabelRule::xor_sign;

  void validate() const;
};

/// Modality m observes latent channels [m d / M, (m + 1) d / M) plus Gaussian
/// noise on every channel; unobserved channels carry noise only.
struct Dataset {
  ToyDatasetConfig config;
  std::vector<std::vector<Tensor>> inputs;  // [sample][modality] -> [N x d]
  std::vector<std::vector<int>> labels;     // [sample][token]

  std::size_t size() const { return inputs.size(); }
};

Dataset generate_dataset(const ToyDatasetConfig& cfg);

/// Channel range [begin, end) observed by modality m.
std::pair<std::size_t, std::size_t> observed_channels(const ToyDatasetConfig& cfg, std::size_t m);

// -- Model ------------------------------------------------------------------------

enum class ToyFusion { none, exchange, cross_attention, geminifusion };

std::string_view to_string(ToyFusion f);
ToyFusion parse_toy_fusion(std::string_view name);

struct ToyModelConfig {
  std::size_t layers = 2;
  std::size_t dim = 8;
  std::size_t heads = 2;
  std::size_t tokens = 4;
  std::size_t classes = 2;
  std::size_t modalities = 2;
  /// One entry per layer.
  std::vector<ToyFusion> fusion{ToyFusion::geminifusion, ToyFusion::geminifusion};
  double theta = 0.02;
  double l1_weight = 1e-4;
  RelationVariant relation = RelationVariant::mlp2_softmax;
  GeminiOptions gemini;
  bool positional = true;
  double positional_init = 0.3;

  void set_fusion(ToyFusion f) { fusion.assign(layers, f); }
  bool uses(ToyFusion f) const;
  void validate() const;
};

/// Affine -> ReLU -> affine residual block. One object per layer, used by
/// every modality.
struct ToyBlock {
  Tensor w1, b1, w2, b2;
};

struct ToyLayer {
  ToyBlock block;
  std::vector<Tensor> gamma;  // per modality, [d]
  std::vector<Tensor> beta;   // per modality, [d]
  FusionParams fusion;        // attention-style fusion layers
  ExchangeConfig exchange;    // exchange layers
};

struct ToyModel {
  ToyModelConfig config;
  Tensor positional;  // [N x d], added to every modality
  std::vector<ToyLayer> layers;
  Tensor merge_logits;  // [M]
  Tensor head_w;        // [d x C]
  Tensor head_b;        // [C]

  static ToyModel init(const ToyModelConfig& cfg, std::uint64_t seed);
  ToyModel zeros_like() const;

  /// Block parameters seen by modality m at layer l. The same object for
  /// every modality.
  const ToyBlock& block(std::size_t layer, std::size_t modality) const;
};

/// Every trainable tensor with a stable name, in a fixed order.
void for_each_param(ToyModel& m, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_param(const ToyModel& m,
                    const std::function<void(const std::string&, const Tensor&)>& fn);

/// Forward result of one sample.
struct ToyForward {
  Tensor logits;  // [N x C]
  double loss = 0.0;  // cross-entropy mean over tokens + L1 score term
  double cross_entropy = 0.0;
  /// [layer][modality] exchange decisions; modality 0 holds one block of N
  /// per partner modality. Empty for non-exchange layers.
  std::vector<std::vector<std::vector<std::uint8_t>>> exchanged;
  /// Per GeminiFusion layer, mean self/cross attention weights.
  std::vector<LayerAttention> attention;
};

ToyForward toy_forward(const ToyModel& model, const std::vector<Tensor>& inputs,
                       const std::vector<int>& labels);

/// Loss and exact gradients of one sample; adds `weight` x dLoss/dparams to
/// `grads`.
ToyForward toy_forward_backward(const ToyModel& model, const std::vector<Tensor>& inputs,
                                const std::vector<int>& labels, double weight, ToyModel& grads);

// -- Training and evaluation ----------------------------------------------------

struct TrainConfig {
  double lr = 1e-2;
  double momentum = 0.9;
  std::size_t epochs = 100;
  std::size_t batch = 32;
};

struct EvalMetrics {
  double accuracy = 0.0;
  double mean_class_accuracy = 0.0;
  double loss = 0.0;
  /// [layer][modality] exchange masks over every evaluated token.
  std::vector<std::vector<std::vector<std::uint8_t>>> exchange_masks;
  std::vector<LayerAttention> attention;
};

EvalMetrics evaluate(const ToyModel& model, const Dataset& data);

/// Fraction of predictions equal to labels, and the mean over classes that
/// occur in `labels` of the per-class hit rate.
std::pair<double, double> token_accuracy(const std::vector<int>& predictions,
                                         const std::vector<int>& labels, std::size_t classes);

struct TrainHistory {
  double initial_loss = 0.0;
  std::vector<double> epoch_loss;
};

/// Minibatch SGD with momentum (v = mu v + g, p -= lr v). Sample order is
/// reshuffled every epoch from `seed`.
TrainHistory train(ToyModel& model, const Dataset& data, const TrainConfig& opt, std::uint64_t seed);

struct ToyRun {
  ToyDatasetConfig dataset;
  ToyModelConfig model_config;
  TrainConfig train_config;
  std::uint64_t seed = 0;
  TrainHistory history;
  EvalMetrics eval;
  ToyModel model;
};

/// Fresh data and model from `seed`: training set with the dataset config,
/// held-out set of `eval_samples`, training, then evaluation.
ToyRun run_experiment(const ToyDatasetConfig& data_cfg, const ToyModelConfig& model_cfg,
                      const TrainConfig& opt, std::uint64_t seed, std::size_t eval_samples = 512);

/// [layer][modality] fraction of exchanged tokens, recomputed from the stored
/// evaluation masks. Layers without exchange report 0.
std::vector<std::vector<double>> layer_exchange_rate(const ToyRun& run);

// -- Threshold sweep and trace ------------------------------------------------------

struct SweepRow {
  double theta = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  std::size_t layer = 0;
  std::vector<double> exchange_rate;  // per modality
};

struct SweepSummary {
  double theta = 0.0;
  double mean_accuracy = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;  // ordered by theta (input order), seed, layer
  std::vector<SweepSummary> summary;
};

/// One run per (theta, seed). Runs may execute on `workers` threads; results
/// do not depend on the worker count.
SweepResult threshold_sweep(const ToyDatasetConfig& data_cfg, const ToyModelConfig& model_cfg,
                            const TrainConfig& opt, const std::vector<double>& thetas,
                            const std::vector<std::uint64_t>& seeds, std::size_t workers = 1,
                            std::size_t eval_samples = 512);

/// Mean self/cross GeminiFusion attention weight per fusion layer over every
/// sample of `data`.
std::vector<LayerAttention> toy_attention_trace(const ToyModel& model, const Dataset& data);

}  // namespace gmnf
