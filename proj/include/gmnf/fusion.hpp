// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gmnf/exchange.hpp"
#include "gmnf/relation.hpp"
#include "gmnf/rng.hpp"
#include "gmnf/tensor.hpp"

namespace gmnf {

enum class Mechanism { token_exchange, cross_attention, pixelwise, geminifusion };

std::string_view to_string(Mechanism m);
Mechanism parse_mechanism(std::string_view name);

/// Parameters of one fusion layer. Projections carry no bias. The noise
/// vectors are shared by both modalities and all tokens of the layer.
struct FusionParams {
  std::size_t dim = 0;
  std::size_t heads = 1;
  Tensor w_q;  // [d x d]
  Tensor w_k;  // [d x d]
  Tensor w_v;  // [d x d]
  RelationDiscriminator phi;
  Tensor noise_k;  // [d]
  Tensor noise_v;  // [d]

  /// Random initialisation: projections ~ N(0, 1/sqrt(d)), noise ~ N(0, 0.02).
  /// `phi_hidden` of 0 selects the default hidden width d.
  static FusionParams init(std::size_t dim, std::size_t heads, Rng& rng,
                           RelationVariant variant = RelationVariant::mlp2_softmax,
                           std::size_t phi_hidden = 0);
  static FusionParams zeros(std::size_t dim, std::size_t heads,
                            RelationVariant variant = RelationVariant::mlp2_softmax,
                            std::size_t phi_hidden = 0);
  FusionParams zeros_like() const;

  std::size_t head_dim() const { return dim / heads; }
  /// Throws ConfigError / DimensionError / DomainError on a broken invariant.
  void validate() const;
};

void for_each_tensor(FusionParams& p, const std::function<void(std::string_view, Tensor&)>& fn);
void for_each_tensor(const FusionParams& p,
                     const std::function<void(std::string_view, const Tensor&)>& fn);

/// Ablation switches for GeminiFusion. All off reduces the module to the plain
/// pixel-wise cross-attention.
struct GeminiOptions {
  bool noise = true;
  bool relation = true;
  bool self_entry = true;
};

/// State retained by one direction of an attention mechanism.
struct DirectionCache {
  Tensor self_in;   // X of the query modality
  Tensor other_in;  // X of the other modality
  Tensor q;         // [N x d]
  // Per-token mechanisms: key/value entries, ordered {self, cross} (the self
  // entry is absent when disabled).
  std::vector<Tensor> keys;
  std::vector<Tensor> values;
  Tensor cross_key_base;  // X_self W_K before relation scaling (geminifusion)
  Tensor relation;        // [N]
  RelationCache relation_cache;
  Tensor weights;  // [N x heads x entries]
  // Full cross-attention.
  Tensor k;                   // [N x d]
  Tensor v;                   // [N x d]
  std::vector<Tensor> probs;  // per head, [N x N]
};

/// Everything the backward pass needs, including a copy of the parameters.
struct FusionCache {
  Mechanism mechanism = Mechanism::geminifusion;
  bool retained = false;
  Shape input_shape;
  FusionParams params;
  GeminiOptions options;
  std::array<DirectionCache, 2> dirs;
  // Token exchange: 1 where the token was replaced by the other modality.
  std::vector<std::uint8_t> exchanged1;
  std::vector<std::uint8_t> exchanged2;
};

struct FusionOutput {
  Tensor y1;
  Tensor y2;
  FusionCache cache;
};

struct FusionGrads {
  Tensor dx1;
  Tensor dx2;
  FusionParams params;  // shaped like the forward parameters; empty for exchange
};

/// Hard token exchange: Y1[i] = X1[i] if s1[i] >= theta else X2[i], and
/// symmetrically for Y2. Scores receive no gradient through the indicator.
FusionOutput token_exchange(const Tensor& x1, const Tensor& x2, const Tensor& s1,
                            const Tensor& s2, double theta);

/// Multi-head cross-attention over all N tokens plus residual. With
/// `retain_cache == false` the attention matrices are not kept and the
/// result cannot be differentiated.
FusionOutput cross_attention(const Tensor& x1, const Tensor& x2, const FusionParams& p,
                             bool retain_cache = true);

/// Attention restricted to the co-located token: one key/value entry per
/// head, so Y1[i] = X2[i] W_V + X1[i].
FusionOutput pixelwise_cross_attention(const Tensor& x1, const Tensor& x2, const FusionParams& p,
                                       bool retain_cache = true);

/// Per-token attention over two entries per head:
///   K = [(noise_k + X1[i]) W_K, phi(X1[i], X2[i]) X1[i] W_K]
///   V = [(noise_v + X1[i]) W_V, X2[i] W_V],  Q = X1[i] W_Q
/// and symmetrically for Y2 with the modalities swapped.
FusionOutput geminifusion_forward(const Tensor& x1, const Tensor& x2, const FusionParams& p,
                                  const GeminiOptions& opts = {}, bool retain_cache = true);

/// Exact gradients of <dy1, Y1> + <dy2, Y2> through the forward recorded in
/// `cache`.
FusionGrads fusion_backward(const FusionCache& cache, const Tensor& dy1, const Tensor& dy2);

/// Attention weights of one direction (0: Y1, 1: Y2) as [N x heads x 2],
/// ordered {self, cross}. A missing self entry reports weight 0.
Tensor attention_weights(const FusionCache& cache, int direction);

struct LayerAttention {
  std::size_t layer = 0;
  double self_weight = 0.0;   // mean over tokens, heads and both directions
  double cross_weight = 0.0;
};

LayerAttention summarize_attention(const FusionCache& cache, std::size_t layer);

/// Runs a stack of GeminiFusion layers, feeding each layer's outputs to the
/// next, and reports the mean self/cross attention weight per layer.
std::vector<LayerAttention> attention_trace(const Tensor& x1, const Tensor& x2,
                                            std::span<const FusionParams> layers,
                                            const GeminiOptions& opts = {});

}  // namespace gmnf
