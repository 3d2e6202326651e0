// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/relation.hpp"

#include <cmath>
#include <string>

#include "gmnf/errors.hpp"

namespace gmnf {

std::string_view to_string(RelationVariant v) {
  switch (v) {
    case RelationVariant::mlp2_softmax:
      return "mlp2_softmax";
    case RelationVariant::mlp2_sigmoid:
      return "mlp2_sigmoid";
    case RelationVariant::conv1x1_softmax:
      return "conv1x1_softmax";
  }
  throw ConfigError("unknown relation variant");
}

RelationVariant parse_relation_variant(std::string_view name) {
  if (name == "mlp2_softmax") return RelationVariant::mlp2_softmax;
  if (name == "mlp2_sigmoid") return RelationVariant::mlp2_sigmoid;
  if (name == "conv1x1_softmax") return RelationVariant::conv1x1_softmax;
  throw ConfigError("unknown relation variant '" + std::string(name) + "'");
}

RelationDiscriminator RelationDiscriminator::zeros(RelationVariant variant, std::size_t dim,
                                                   std::size_t hidden) {
  RelationDiscriminator phi;
  phi.variant = variant;
  switch (variant) {
    case RelationVariant::mlp2_softmax:
    case RelationVariant::mlp2_sigmoid:
      phi.w1 = Tensor({2 * dim, hidden});
      phi.b1 = Tensor({hidden});
      phi.w2 = Tensor({hidden, 2});
      phi.b2 = Tensor({2});
      break;
    case RelationVariant::conv1x1_softmax:
      phi.w1 = Tensor({2 * dim, 2});
      phi.b1 = Tensor({2});
      phi.w2 = Tensor({0, 2});
      phi.b2 = Tensor({0});
      break;
    default:
      throw ConfigError("unknown relation variant");
  }
  return phi;
}

RelationDiscriminator RelationDiscriminator::init(RelationVariant variant, std::size_t dim,
                                                  std::size_t hidden, Rng& rng) {
  RelationDiscriminator phi = zeros(variant, dim, hidden);
  phi.w1 = rng_normal(rng, phi.w1.shape(), 0.0, 1.0 / std::sqrt(2.0 * dim));
  if (phi.has_hidden_layer()) {
    phi.w2 = rng_normal(rng, phi.w2.shape(), 0.0, 1.0 / std::sqrt(static_cast<double>(hidden)));
  }
  return phi;
}

namespace {

void check_shapes(const Tensor& x_self, const Tensor& x_other, const RelationDiscriminator& phi) {
  require_rank(x_self, 2, "relation_score");
  require_same_shape(x_self, x_other, "relation_score");
  if (phi.w1.rank() != 2 || phi.w1.rows() != 2 * x_self.cols()) {
    throw DimensionError("relation_score: discriminator expects input width " +
                         std::to_string(phi.w1.rank() == 2 ? phi.w1.rows() : 0) + ", got 2x" +
                         std::to_string(x_self.cols()));
  }
}

}  // namespace

Tensor relation_score(const Tensor& x_self, const Tensor& x_other,
                      const RelationDiscriminator& phi, RelationCache* cache) {
  check_shapes(x_self, x_other, phi);
  const std::size_t n = x_self.rows();
  Tensor input = concat_cols(x_self, x_other);
  Tensor pre, hidden, logits;
  switch (phi.variant) {
    case RelationVariant::mlp2_softmax:
    case RelationVariant::mlp2_sigmoid: {
      pre = add_row_vector(matmul(input, phi.w1), phi.b1);
      hidden = pre;
      for (auto& v : hidden.values()) v = relu(v);
      logits = add_row_vector(matmul(hidden, phi.w2), phi.b2);
      break;
    }
    case RelationVariant::conv1x1_softmax:
      logits = add_row_vector(matmul(input, phi.w1), phi.b1);
      break;
    default:
      throw ConfigError("unknown relation variant");
  }
  require_finite(logits, "relation_logits");

  Tensor score({n});
  for (std::size_t i = 0; i < n; ++i) {
    if (phi.variant == RelationVariant::mlp2_sigmoid) {
      score[i] = sigmoid(logits(i, 0));
    } else {
      // First component of a two-way softmax.
      score[i] = sigmoid(logits(i, 0) - logits(i, 1));
    }
  }
  if (cache) {
    cache->input = std::move(input);
    cache->pre = std::move(pre);
    cache->hidden = std::move(hidden);
    cache->logits = std::move(logits);
    cache->score = score;
  }
  return score;
}

void relation_backward(const RelationDiscriminator& phi, const RelationCache& cache,
                       const Tensor& dscore, Tensor& dx_self, Tensor& dx_other,
                       RelationDiscriminator& dphi) {
  const std::size_t n = cache.score.size();
  if (dscore.size() != n) {
    throw DimensionError("relation_backward: gradient length " + std::to_string(dscore.size()) +
                         " does not match " + std::to_string(n) + " tokens");
  }
  Tensor dlogits({n, 2});
  for (std::size_t i = 0; i < n; ++i) {
    const double s = cache.score[i];
    const double g = dscore[i] * s * (1.0 - s);
    dlogits(i, 0) = g;
    dlogits(i, 1) = phi.variant == RelationVariant::mlp2_sigmoid ? 0.0 : -g;
  }

  Tensor dinput;
  if (phi.has_hidden_layer()) {
    add_inplace(dphi.w2, matmul_tn(cache.hidden, dlogits));
    add_inplace(dphi.b2, column_sum(dlogits));
    Tensor dpre = matmul_nt(dlogits, phi.w2);
    for (std::size_t k = 0; k < dpre.size(); ++k) {
      if (!(cache.pre[k] > 0.0)) dpre[k] = 0.0;
    }
    add_inplace(dphi.w1, matmul_tn(cache.input, dpre));
    add_inplace(dphi.b1, column_sum(dpre));
    dinput = matmul_nt(dpre, phi.w1);
  } else {
    add_inplace(dphi.w1, matmul_tn(cache.input, dlogits));
    add_inplace(dphi.b1, column_sum(dlogits));
    dinput = matmul_nt(dlogits, phi.w1);
  }
  const std::size_t d = dx_self.cols();
  add_inplace(dx_self, slice_cols(dinput, 0, d));
  add_inplace(dx_other, slice_cols(dinput, d, d));
}

}  // namespace gmnf
