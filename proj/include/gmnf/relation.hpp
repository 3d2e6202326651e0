// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

#include "gmnf/rng.hpp"
#include "gmnf/tensor.hpp"

namespace gmnf {

/// Architecture of the relation discriminator.
///
/// The MLP variants map the concatenated token pair (2d) through a hidden
/// ReLU layer to two logits. `conv1x1_softmax` is a single affine map 2d -> 2,
/// which is what a 1x1 convolution reduces to at per-token granularity.
enum class RelationVariant { mlp2_softmax, mlp2_sigmoid, conv1x1_softmax };

std::string_view to_string(RelationVariant v);
RelationVariant parse_relation_variant(std::string_view name);

/// Parameters of the relation discriminator. For `conv1x1_softmax`, `w2` and
/// `b2` are empty.
struct RelationDiscriminator {
  RelationVariant variant = RelationVariant::mlp2_softmax;
  Tensor w1;  // [2d x hidden], or [2d x 2] for conv1x1
  Tensor b1;  // [hidden], or [2]
  Tensor w2;  // [hidden x 2]
  Tensor b2;  // [2]

  static RelationDiscriminator init(RelationVariant variant, std::size_t dim, std::size_t hidden,
                                    Rng& rng);
  static RelationDiscriminator zeros(RelationVariant variant, std::size_t dim, std::size_t hidden);

  std::size_t input_dim() const { return w1.rows(); }
  bool has_hidden_layer() const { return variant != RelationVariant::conv1x1_softmax; }
};

struct RelationCache {
  Tensor input;   // [N x 2d], concatenation [x_self, x_other]
  Tensor pre;     // [N x hidden], pre-activation (MLP variants)
  Tensor hidden;  // [N x hidden]
  Tensor logits;  // [N x 2]
  Tensor score;   // [N]
};

/// Per-token relation score in (0, 1) from the pair (x_self[i], x_other[i]).
/// Softmax variants return the first component of the two-way softmax; the
/// sigmoid variant applies a logistic to the first logit.
Tensor relation_score(const Tensor& x_self, const Tensor& x_other,
                      const RelationDiscriminator& phi, RelationCache* cache = nullptr);

/// Accumulates gradients of a scalar loss through `relation_score`, given
/// dL/dscore. Adds into `dx_self`, `dx_other` and `dphi`.
void relation_backward(const RelationDiscriminator& phi, const RelationCache& cache,
                       const Tensor& dscore, Tensor& dx_self, Tensor& dx_other,
                       RelationDiscriminator& dphi);

}  // namespace gmnf
