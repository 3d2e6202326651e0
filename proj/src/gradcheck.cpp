// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "gmnf/errors.hpp"
#include "gmnf/exchange.hpp"
#include "gmnf/fusion.hpp"
#include "gmnf/relation.hpp"
#include "gmnf/rng.hpp"

namespace gmnf {

const GradCheckEntry& GradCheckReport::worst() const {
  if (entries.empty()) throw StateError("gradcheck report is empty");
  return *std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.max_rel_error < b.max_rel_error;
  });
}

bool GradCheckReport::passed() const {
  return !entries.empty() && worst().max_rel_error < tolerance;
}

namespace {

constexpr double kKinkMargin = 1e-4;
constexpr double kL1Weight = 0.5;

double inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

bool near_kink(const Tensor& pre) {
  return std::any_of(pre.values().begin(), pre.values().end(),
                     [](double v) { return std::abs(v) < kKinkMargin; });
}

class Recorder {
 public:
  Recorder(const GradCheckOptions& o) : opts_(o) {}

  void compare(const std::string& op, const std::string& param, const Tensor& analytic,
               const Tensor& numeric) {
    auto& e = table_[{op, param}];
    e.op = op;
    e.parameter = param;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double a = analytic[i], n = numeric[i];
      const double abs_err = std::abs(a - n);
      const double rel = abs_err / std::max({std::abs(a), std::abs(n), opts_.floor});
      e.max_rel_error = std::max(e.max_rel_error, rel);
      e.max_abs_error = std::max(e.max_abs_error, abs_err);
      ++e.checked;
    }
  }

  std::vector<GradCheckEntry> entries() const {
    std::vector<GradCheckEntry> out;
    for (const auto& [key, e] : table_) out.push_back(e);
    return out;
  }

 private:
  const GradCheckOptions& opts_;
  std::map<std::pair<std::string, std::string>, GradCheckEntry> table_;
};

// Central differences of `loss` with respect to every element of `t`.
Tensor numeric_grad(Tensor& t, double step, const std::function<double()>& loss) {
  Tensor g(t.shape());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double saved = t[i];
    t[i] = saved + step;
    const double up = loss();
    t[i] = saved - step;
    const double down = loss();
    t[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

void maybe_inject(const GradCheckOptions& opts, const std::string& op, Tensor& g) {
  if (opts.inject_fault == op && g.size() > 0) g[0] += 1e-2;
}

struct Instance {
  std::size_t n, d, h;
  RelationVariant variant;
  GeminiOptions opts;
  Tensor x1, x2, g1, g2;
  FusionParams params;
  ExchangeConfig exchange;
};

bool instance_is_smooth(const Instance& in) {
  if (in.opts.relation) {
    RelationCache c1, c2;
    relation_score(in.x1, in.x2, in.params.phi, &c1);
    relation_score(in.x2, in.x1, in.params.phi, &c2);
    if (in.params.phi.has_hidden_layer() && (near_kink(c1.pre) || near_kink(c2.pre))) {
      return false;
    }
  }
  ScoreCache s1, s2;
  score_predict(in.x1, in.exchange, &s1);
  score_predict(in.x2, in.exchange, &s2);
  if (near_kink(s1.pre) || near_kink(s2.pre)) return false;
  for (const Tensor* s : {&s1.score, &s2.score}) {
    for (double v : s->values()) {
      if (std::abs(v - in.exchange.theta) < kKinkMargin) return false;
    }
  }
  return true;
}

Instance draw_instance(Rng& rng, std::size_t index) {
  static constexpr std::size_t kDims[] = {2, 4, 6, 8};
  static constexpr RelationVariant kVariants[] = {RelationVariant::mlp2_softmax,
                                                  RelationVariant::mlp2_sigmoid,
                                                  RelationVariant::conv1x1_softmax};
  for (;;) {
    Instance in;
    in.n = 1 + rng.index(4);
    in.d = kDims[rng.index(4)];
    in.h = 1 + rng.index(2);
    in.variant = kVariants[index % 3];
    // Cycle through every combination of the ablation switches.
    const std::size_t mask = (index / 3) % 8;
    in.opts = GeminiOptions{(mask & 1) == 0, (mask & 2) == 0, (mask & 4) == 0};
    in.x1 = rng_normal(rng, {in.n, in.d}, 0.0, 1.0);
    in.x2 = rng_normal(rng, {in.n, in.d}, 0.0, 1.0);
    in.g1 = rng_normal(rng, {in.n, in.d}, 0.0, 1.0);
    in.g2 = rng_normal(rng, {in.n, in.d}, 0.0, 1.0);
    in.params = FusionParams::init(in.d, in.h, rng, in.variant);
    // Larger noise than the training init so its gradient is well above the
    // finite-difference noise floor.
    in.params.noise_k = rng_normal(rng, {in.d}, 0.0, 0.5);
    in.params.noise_v = rng_normal(rng, {in.d}, 0.0, 0.5);
    for (auto* b : {&in.params.phi.b1, &in.params.phi.b2}) *b = rng_normal(rng, b->shape(), 0.0, 0.3);
    in.exchange = ExchangeConfig::init(in.d, 0.5, rng);
    in.exchange.b1 = rng_normal(rng, in.exchange.b1.shape(), 0.0, 0.3);
    if (instance_is_smooth(in)) return in;
  }
}

using AttentionForward = std::function<FusionOutput(const Tensor&, const Tensor&, const FusionParams&)>;

void check_attention_op(const std::string& op, const AttentionForward& forward, Instance in,
                        const GradCheckOptions& opts, Recorder& rec) {
  FusionOutput out = forward(in.x1, in.x2, in.params);
  FusionGrads g = fusion_backward(out.cache, in.g1, in.g2);
  maybe_inject(opts, op, g.dx1);

  auto loss = [&]() {
    FusionOutput o = forward(in.x1, in.x2, in.params);
    return inner(in.g1, o.y1) + inner(in.g2, o.y2);
  };
  rec.compare(op, "x1", g.dx1, numeric_grad(in.x1, opts.step, loss));
  rec.compare(op, "x2", g.dx2, numeric_grad(in.x2, opts.step, loss));

  std::vector<std::pair<std::string, Tensor*>> analytic;
  for_each_tensor(g.params, [&](std::string_view name, Tensor& t) {
    analytic.emplace_back(std::string(name), &t);
  });
  std::size_t k = 0;
  for_each_tensor(in.params, [&](std::string_view name, Tensor& t) {
    rec.compare(op, std::string(name), *analytic[k++].second, numeric_grad(t, opts.step, loss));
  });
}

void check_exchange(Instance in, const GradCheckOptions& opts, Recorder& rec) {
  const std::string op = "exchange";
  const double lambda = kL1Weight / static_cast<double>(2 * in.n);

  auto forward_loss = [&]() {
    const Tensor s1 = score_predict(in.x1, in.exchange);
    const Tensor s2 = score_predict(in.x2, in.exchange);
    FusionOutput o = token_exchange(in.x1, in.x2, s1, s2, in.exchange.theta);
    return inner(in.g1, o.y1) + inner(in.g2, o.y2) + lambda * (sum(s1) + sum(s2));
  };

  ScoreCache c1, c2;
  const Tensor s1 = score_predict(in.x1, in.exchange, &c1);
  const Tensor s2 = score_predict(in.x2, in.exchange, &c2);
  FusionOutput out = token_exchange(in.x1, in.x2, s1, s2, in.exchange.theta);
  FusionGrads g = fusion_backward(out.cache, in.g1, in.g2);
  ExchangeConfig dpred = ExchangeConfig::zeros(in.d, in.exchange.theta);
  const Tensor ds({in.n}, lambda);
  score_predict_backward(in.exchange, c1, ds, g.dx1, dpred);
  score_predict_backward(in.exchange, c2, ds, g.dx2, dpred);
  maybe_inject(opts, op, g.dx1);

  rec.compare(op, "x1", g.dx1, numeric_grad(in.x1, opts.step, forward_loss));
  rec.compare(op, "x2", g.dx2, numeric_grad(in.x2, opts.step, forward_loss));
  rec.compare(op, "predictor.w1", dpred.w1, numeric_grad(in.exchange.w1, opts.step, forward_loss));
  rec.compare(op, "predictor.b1", dpred.b1, numeric_grad(in.exchange.b1, opts.step, forward_loss));
  rec.compare(op, "predictor.w2", dpred.w2, numeric_grad(in.exchange.w2, opts.step, forward_loss));
  rec.compare(op, "predictor.b2", dpred.b2, numeric_grad(in.exchange.b2, opts.step, forward_loss));
}

}  // namespace

GradCheckReport run_gradcheck(const GradCheckOptions& opts) {
  if (opts.instances == 0) throw ConfigError("gradcheck: instances must be at least 1");
  if (!(opts.step > 0.0)) throw ConfigError("gradcheck: step must be positive");
  Rng rng(opts.seed);
  Recorder rec(opts);
  for (std::size_t i = 0; i < opts.instances; ++i) {
    const Instance in = draw_instance(rng, i);
    check_attention_op(
        "cross_attention",
        [](const Tensor& a, const Tensor& b, const FusionParams& p) { return cross_attention(a, b, p); },
        in, opts, rec);
    check_attention_op(
        "pixelwise",
        [](const Tensor& a, const Tensor& b, const FusionParams& p) {
          return pixelwise_cross_attention(a, b, p);
        },
        in, opts, rec);
    const GeminiOptions gopts = in.opts;
    check_attention_op(
        "geminifusion",
        [gopts](const Tensor& a, const Tensor& b, const FusionParams& p) {
          return geminifusion_forward(a, b, p, gopts);
        },
        in, opts, rec);
    check_exchange(in, opts, rec);
  }
  GradCheckReport report;
  report.entries = rec.entries();
  report.instances = opts.instances;
  report.tolerance = opts.tolerance;
  return report;
}

}  // namespace gmnf
