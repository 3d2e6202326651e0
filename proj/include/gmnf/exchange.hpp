// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "gmnf/rng.hpp"
#include "gmnf/tensor.hpp"

namespace gmnf {

/// Threshold and per-token score predictor for the token-exchange baseline.
/// The predictor is a two-layer map d -> d (ReLU) -> 1 followed by a sigmoid.
struct ExchangeConfig {
  double theta = 0.02;
  Tensor w1;  // [d x d]
  Tensor b1;  // [d]
  Tensor w2;  // [d x 1]
  Tensor b2;  // [1]

  static ExchangeConfig init(std::size_t dim, double theta, Rng& rng);
  static ExchangeConfig zeros(std::size_t dim, double theta);
  std::size_t dim() const { return w1.rank() == 2 ? w1.rows() : 0; }
};

struct ScoreCache {
  Tensor input;   // [N x d]
  Tensor pre;     // [N x d]
  Tensor hidden;  // [N x d]
  Tensor score;   // [N]
};

/// Per-token score s(x_i) in (0, 1).
Tensor score_predict(const Tensor& x, const ExchangeConfig& cfg, ScoreCache* cache = nullptr);

/// Accumulates dL/dx and dL/d(predictor) given dL/dscore.
void score_predict_backward(const ExchangeConfig& cfg, const ScoreCache& cache,
                            const Tensor& dscore, Tensor& dx, ExchangeConfig& dcfg);

}  // namespace gmnf
