// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gmnf/errors.hpp"

namespace gmnf {

namespace {

using u64 = std::uint64_t;

void check_heads(std::size_t d, std::size_t h) {
  if (d == 0 || h == 0 || d % h != 0) {
    throw ConfigError("cost model: heads (" + std::to_string(h) + ") must divide d (" +
                      std::to_string(d) + ")");
  }
}

u64 cross_core(std::size_t n, std::size_t d) { return 4 * u64(n) * n * d; }
u64 cross_total(std::size_t n, std::size_t d) { return 6 * u64(n) * d * d + cross_core(n, d); }

void finish(CostReport& r) {
  r.total_macs = 0;
  r.core_macs = 0;
  for (const auto& t : r.terms) {
    r.total_macs += t.macs;
    if (!t.projection) r.core_macs += t.macs;
  }
  r.single_direction_macs = r.total_macs / 2;
  if (r.mechanism == Mechanism::cross_attention) {
    r.relative_cost_vs_cross = 1.0;
    r.reduction_vs_cross = 0.0;
    r.total_reduction_vs_cross = 0.0;
    return;
  }
  const u64 cc = cross_core(r.n, r.d);
  const u64 ct = cross_total(r.n, r.d);
  r.relative_cost_vs_cross = cc ? static_cast<double>(r.core_macs) / static_cast<double>(cc) : 0.0;
  r.reduction_vs_cross = cc ? std::max(0.0, 1.0 - r.relative_cost_vs_cross) : 0.0;
  r.total_reduction_vs_cross =
      ct ? std::max(0.0, 1.0 - static_cast<double>(r.total_macs) / static_cast<double>(ct)) : 0.0;
}

}  // namespace

const CostTerm& CostReport::term(std::string_view name) const {
  for (const auto& t : terms)
    if (t.name == name) return t;
  throw ConfigError("cost report has no term '" + std::string(name) + "'");
}

const CostTerm& CostReport::dominant_term() const {
  if (terms.empty()) throw StateError("cost report has no terms");
  const CostTerm* best = &terms.front();
  for (const auto& t : terms)
    if (t.macs > best->macs) best = &t;
  return *best;
}

CostReport flops_cross_attention(std::size_t n, std::size_t d, std::size_t h) {
  check_heads(d, h);
  CostReport r;
  r.mechanism = Mechanism::cross_attention;
  r.n = n;
  r.d = d;
  r.h = h;
  const u64 proj = 2 * u64(n) * d * d;
  r.terms = {
      {"q_projection", proj, true},
      {"k_projection", proj, true},
      {"v_projection", proj, true},
      {"attention_logits", 2 * u64(n) * n * d, false},
      {"attention_weighted_sum", 2 * u64(n) * n * d, false},
  };
  finish(r);
  return r;
}

CostReport flops_pixelwise(std::size_t n, std::size_t d, std::size_t h) {
  check_heads(d, h);
  CostReport r;
  r.mechanism = Mechanism::pixelwise;
  r.n = n;
  r.d = d;
  r.h = h;
  const u64 proj = 2 * u64(n) * d * d;
  r.terms = {
      {"q_projection", proj, true},
      {"k_projection", proj, true},
      {"v_projection", proj, true},
      {"attention_logits", 2 * u64(n) * d, false},
      {"attention_weighted_sum", 2 * u64(n) * d, false},
  };
  finish(r);
  return r;
}

CostReport flops_geminifusion(std::size_t n, std::size_t d, std::size_t h, std::size_t phi_hidden,
                              const GeminiOptions& opts, RelationVariant variant) {
  check_heads(d, h);
  CostReport r;
  r.mechanism = Mechanism::geminifusion;
  r.n = n;
  r.d = d;
  r.h = h;
  r.phi_hidden = phi_hidden;
  const u64 proj = 2 * u64(n) * d * d;
  const u64 entries = opts.self_entry ? 2 : 1;
  r.terms.push_back({"q_projection", proj, true});
  if (opts.self_entry) r.terms.push_back({"k_projection_self", proj, true});
  r.terms.push_back({"k_projection_cross", proj, true});
  if (opts.self_entry) r.terms.push_back({"v_projection_self", proj, true});
  r.terms.push_back({"v_projection_cross", proj, true});
  if (opts.relation) {
    const u64 per_token = variant == RelationVariant::conv1x1_softmax
                              ? u64(2) * d * 2
                              : u64(2) * d * phi_hidden + u64(phi_hidden) * 2;
    r.terms.push_back({"relation_discriminator", 2 * u64(n) * per_token, false});
  }
  r.terms.push_back({"attention_logits", 2 * u64(n) * entries * d, false});
  r.terms.push_back({"attention_weighted_sum", 2 * u64(n) * entries * d, false});
  finish(r);
  return r;
}

CostReport flops_token_exchange(std::size_t n, std::size_t d, bool predictor) {
  CostReport r;
  r.mechanism = Mechanism::token_exchange;
  r.n = n;
  r.d = d;
  r.h = 1;
  r.terms.push_back({"score_predictor", predictor ? 2 * u64(n) * (u64(d) * d + d) : 0, false});
  finish(r);
  return r;
}

CostReport flops_for(Mechanism m, std::size_t n, std::size_t d, std::size_t h) {
  switch (m) {
    case Mechanism::cross_attention:
      return flops_cross_attention(n, d, h);
    case Mechanism::pixelwise:
      return flops_pixelwise(n, d, h);
    case Mechanism::geminifusion:
      return flops_geminifusion(n, d, h, d);
    case Mechanism::token_exchange:
      return flops_token_exchange(n, d);
  }
  throw ConfigError("unknown mechanism");
}

double least_squares_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw ConfigError("least squares: need at least two paired points");
  }
  const double m = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= m;
  my /= m;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw ConfigError("least squares: x values are all equal");
  return sxy / sxx;
}

double scaling_law(Mechanism m, std::size_t d, std::span<const std::size_t> n_list) {
  std::vector<double> lx, ly;
  for (std::size_t n : n_list) {
    if (n == 0) throw ConfigError("scaling_law: N must be positive");
    const CostReport r = flops_for(m, n, d, 1);
    if (r.total_macs == 0) throw ConfigError("scaling_law: zero cost at N=" + std::to_string(n));
    lx.push_back(std::log(static_cast<double>(n)));
    ly.push_back(std::log(static_cast<double>(r.total_macs)));
  }
  return least_squares_slope(lx, ly);
}

nlohmann::ordered_json to_json(const CostReport& r) {
  nlohmann::ordered_json j;
  j["mechanism"] = std::string(to_string(r.mechanism));
  j["n"] = r.n;
  j["d"] = r.d;
  j["h"] = r.h;
  if (r.mechanism == Mechanism::geminifusion) j["phi_hidden"] = r.phi_hidden;
  auto terms = nlohmann::ordered_json::array();
  for (const auto& t : r.terms) {
    terms.push_back({{"name", t.name}, {"macs", t.macs}, {"projection", t.projection}});
  }
  j["terms"] = std::move(terms);
  j["total_macs"] = r.total_macs;
  j["single_direction_macs"] = r.single_direction_macs;
  j["core_macs"] = r.core_macs;
  j["relative_cost_vs_cross"] = r.relative_cost_vs_cross;
  j["reduction_vs_cross"] = r.reduction_vs_cross;
  j["total_reduction_vs_cross"] = r.total_reduction_vs_cross;
  j["convention"] =
      "1 MAC = 1 FLOP; both directions; softmax exp/div, logit scaling, bias and residual "
      "adds excluded; reduction_vs_cross compares non-projection terms";
  return j;
}

nlohmann::ordered_json flops_table(std::size_t n, std::size_t d, std::size_t h) {
  nlohmann::ordered_json j;
  j["n"] = n;
  j["d"] = d;
  j["h"] = h;
  auto reports = nlohmann::ordered_json::array();
  for (Mechanism m : {Mechanism::token_exchange, Mechanism::cross_attention, Mechanism::pixelwise,
                      Mechanism::geminifusion}) {
    reports.push_back(to_json(flops_for(m, n, d, h)));
  }
  j["reports"] = std::move(reports);
  j["reduction_vs_cross"] = flops_for(Mechanism::geminifusion, n, d, h).reduction_vs_cross;
  return j;
}

}  // namespace gmnf
