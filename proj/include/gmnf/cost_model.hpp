// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gmnf/fusion.hpp"

namespace gmnf {

// Multiply-accumulate counts of one forward call of each fusion mechanism.
//
// Conventions:
//  * 1 MAC = 1 FLOP.
//  * Counts cover both fusion directions, i.e. exactly what one forward call
//    computes. Every mechanism is symmetric, so a single direction is half.
//  * Softmax exponentials and divisions, the 1/sqrt(d_h) logit scaling,
//    the relation-score scaling of the cross key, bias additions and
//    residual additions are not counted.
//  * `core_macs` drops the Q/K/V projection terms. Those linear maps exist in
//    every attention-style fusion; the core is the fusion-specific work, and
//    `reduction_vs_cross` compares cores.

struct CostTerm {
  std::string name;
  std::uint64_t macs = 0;
  bool projection = false;
};

struct CostReport {
  Mechanism mechanism = Mechanism::cross_attention;
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t h = 1;
  std::size_t phi_hidden = 0;
  std::vector<CostTerm> terms;
  std::uint64_t total_macs = 0;
  std::uint64_t single_direction_macs = 0;
  std::uint64_t core_macs = 0;
  /// core_macs / core_macs(cross-attention at the same n, d).
  double relative_cost_vs_cross = 1.0;
  /// max(0, 1 - relative_cost_vs_cross).
  double reduction_vs_cross = 0.0;
  /// Same ratio on total_macs, projections included.
  double total_reduction_vs_cross = 0.0;

  const CostTerm& term(std::string_view name) const;
  /// Largest term; the first one listed wins ties.
  const CostTerm& dominant_term() const;
};

CostReport flops_cross_attention(std::size_t n, std::size_t d, std::size_t h);

CostReport flops_pixelwise(std::size_t n, std::size_t d, std::size_t h);

/// `phi_hidden` is the relation discriminator's hidden width (ignored for the
/// conv1x1 variant and when the discriminator is disabled).
CostReport flops_geminifusion(std::size_t n, std::size_t d, std::size_t h, std::size_t phi_hidden,
                              const GeminiOptions& opts = {},
                              RelationVariant variant = RelationVariant::mlp2_softmax);

/// Exchange cost is the score predictor only; selection is a copy.
CostReport flops_token_exchange(std::size_t n, std::size_t d, bool predictor = true);

/// Dispatch with default options (phi_hidden = d, predictor on).
CostReport flops_for(Mechanism m, std::size_t n, std::size_t d, std::size_t h);

/// Least-squares slope of log(total MACs) against log(N).
double scaling_law(Mechanism m, std::size_t d, std::span<const std::size_t> n_list);

/// Ordinary least-squares slope of y on x.
double least_squares_slope(std::span<const double> x, std::span<const double> y);

nlohmann::ordered_json to_json(const CostReport& report);

/// Reports of every mechanism at (n, d, h) with default options, plus the
/// GeminiFusion reduction versus cross-attention.
nlohmann::ordered_json flops_table(std::size_t n, std::size_t d, std::size_t h);

}  // namespace gmnf
