// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/exchange.hpp"

#include <cmath>
#include <string>

#include "gmnf/errors.hpp"

namespace gmnf {

ExchangeConfig ExchangeConfig::zeros(std::size_t dim, double theta) {
  ExchangeConfig cfg;
  cfg.theta = theta;
  cfg.w1 = Tensor({dim, dim});
  cfg.b1 = Tensor({dim});
  cfg.w2 = Tensor({dim, 1});
  cfg.b2 = Tensor({1});
  return cfg;
}

ExchangeConfig ExchangeConfig::init(std::size_t dim, double theta, Rng& rng) {
  ExchangeConfig cfg = zeros(dim, theta);
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  cfg.w1 = rng_normal(rng, cfg.w1.shape(), 0.0, sd);
  cfg.w2 = rng_normal(rng, cfg.w2.shape(), 0.0, sd);
  return cfg;
}

Tensor score_predict(const Tensor& x, const ExchangeConfig& cfg, ScoreCache* cache) {
  require_rank(x, 2, "score_predict");
  if (cfg.w1.rank() != 2 || cfg.w1.rows() != x.cols()) {
    throw DimensionError("score_predict: predictor expects width " + std::to_string(cfg.dim()) +
                         ", got " + std::to_string(x.cols()));
  }
  Tensor pre = add_row_vector(matmul(x, cfg.w1), cfg.b1);
  Tensor hidden = pre;
  for (auto& v : hidden.values()) v = relu(v);
  Tensor logit = add_row_vector(matmul(hidden, cfg.w2), cfg.b2);
  require_finite(logit, "score_logits");
  Tensor score({x.rows()});
  for (std::size_t i = 0; i < x.rows(); ++i) score[i] = sigmoid(logit[i]);
  if (cache) {
    cache->input = x;
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
    cache->score = score;
  }
  return score;
}

void score_predict_backward(const ExchangeConfig& cfg, const ScoreCache& cache,
                            const Tensor& dscore, Tensor& dx, ExchangeConfig& dcfg) {
  const std::size_t n = cache.score.size();
  if (dscore.size() != n) {
    throw DimensionError("score_predict_backward: gradient length mismatch");
  }
  Tensor dlogit({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    const double s = cache.score[i];
    dlogit[i] = dscore[i] * s * (1.0 - s);
  }
  add_inplace(dcfg.w2, matmul_tn(cache.hidden, dlogit));
  add_inplace(dcfg.b2, column_sum(dlogit));
  Tensor dpre = matmul_nt(dlogit, cfg.w2);
  for (std::size_t k = 0; k < dpre.size(); ++k) {
    if (!(cache.pre[k] > 0.0)) dpre[k] = 0.0;
  }
  add_inplace(dcfg.w1, matmul_tn(cache.input, dpre));
  add_inplace(dcfg.b1, column_sum(dpre));
  add_inplace(dx, matmul_nt(dpre, cfg.w1));
}

}  // namespace gmnf
