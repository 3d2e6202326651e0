// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/toy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <string>
#include <thread>
#include <type_traits>

#include "gmnf/errors.hpp"
#include "gmnf/rng.hpp"

namespace gmnf {

// -- Names ----------------------------------------------------------------------

std::string_view to_string(LabelRule r) {
  switch (r) {
    case LabelRule::xor_sign:
      return "xor";
    case LabelRule::sign:
      return "sign";
    case LabelRule::quadrant:
      return "quadrant";
  }
  throw ConfigError("unknown label rule");
}

LabelRule parse_label_rule(std::string_view name) {
  if (name == "xor") return LabelRule::xor_sign;
  if (name == "sign") return LabelRule::sign;
  if (name == "quadrant") return LabelRule::quadrant;
  throw ConfigError("unknown label rule '" + std::string(name) + "'");
}

std::size_t label_classes(LabelRule r) { return r == LabelRule::quadrant ? 4 : 2; }

std::string_view to_string(ToyFusion f) {
  switch (f) {
    case ToyFusion::none:
      return "none";
    case ToyFusion::exchange:
      return "exchange";
    case ToyFusion::cross_attention:
      return "cross_attention";
    case ToyFusion::geminifusion:
      return "geminifusion";
  }
  throw ConfigError("unknown fusion variant");
}

ToyFusion parse_toy_fusion(std::string_view name) {
  if (name == "none") return ToyFusion::none;
  if (name == "exchange" || name == "token_exchange") return ToyFusion::exchange;
  if (name == "cross_attention") return ToyFusion::cross_attention;
  if (name == "geminifusion") return ToyFusion::geminifusion;
  throw ConfigError("unknown fusion variant '" + std::string(name) + "'");
}

// -- Dataset --------------------------------------------------------------------

void ToyDatasetConfig::validate() const {
  if (channels < 2) throw ConfigError("dataset: channels must be at least 2");
  if (classes < 2) throw ConfigError("dataset: classes must be at least 2");
  if (tokens < 1 || samples < 1) throw ConfigError("dataset: tokens and samples must be positive");
  if (modalities < 2 || modalities > channels) {
    throw ConfigError("dataset: modalities must lie in [2, channels]");
  }
  if (classes != label_classes(rule)) {
    throw ConfigError("dataset: label rule '" + std::string(to_string(rule)) + "' has " +
                      std::to_string(label_classes(rule)) + " classes, config says " +
                      std::to_string(classes));
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("dataset: noise must be >= 0");
}

std::pair<std::size_t, std::size_t> observed_channels(const ToyDatasetConfig& cfg, std::size_t m) {
  return {m * cfg.channels / cfg.modalities, (m + 1) * cfg.channels / cfg.modalities};
}

Dataset generate_dataset(const ToyDatasetConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.tokens, d = cfg.channels, mods = cfg.modalities;
  Rng rng = Rng(cfg.seed).derive("dataset");
  Dataset data;
  data.config = cfg;
  data.inputs.reserve(cfg.samples);
  data.labels.reserve(cfg.samples);
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    const Tensor z = rng_normal(rng, {n, d}, 0.0, 1.0);
    std::vector<Tensor> xs;
    for (std::size_t m = 0; m < mods; ++m) {
      Tensor x = rng_normal(rng, {n, d}, 0.0, cfg.noise);
      const auto [lo, hi] = observed_channels(cfg, m);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = lo; c < hi; ++c) x(i, c) += z(i, c);
      xs.push_back(std::move(x));
    }
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      const int a = z(i, 0) > 0.0, b = z(i, d - 1) > 0.0;
      switch (cfg.rule) {
        case LabelRule::xor_sign:
          labels[i] = a ^ b;
          break;
        case LabelRule::sign:
          labels[i] = a;
          break;
        case LabelRule::quadrant:
          labels[i] = 2 * a + b;
          break;
      }
    }
    data.inputs.push_back(std::move(xs));
    data.labels.push_back(std::move(labels));
  }
  return data;
}

// -- Model ------------------------------------------------------------------------

bool ToyModelConfig::uses(ToyFusion f) const {
  return std::find(fusion.begin(), fusion.end(), f) != fusion.end();
}

void ToyModelConfig::validate() const {
  if (layers < 1) throw ConfigError("model: layers must be at least 1");
  if (fusion.size() != layers) {
    throw ConfigError("model: " + std::to_string(fusion.size()) + " fusion entries for " +
                      std::to_string(layers) + " layers");
  }
  if (dim < 1 || heads < 1 || dim % heads != 0) throw ConfigError("model: heads must divide dim");
  if (classes < 2) throw ConfigError("model: classes must be at least 2");
  if (modalities < 2) throw ConfigError("model: need at least two modalities");
  if (tokens < 1) throw ConfigError("model: tokens must be positive");
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw DomainError("model: theta must lie in [0, 1], got " + std::to_string(theta));
  }
  if (!(l1_weight >= 0.0)) throw ConfigError("model: l1_weight must be >= 0");
}

ToyModel ToyModel::init(const ToyModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t d = cfg.dim, mods = cfg.modalities;
  Rng rng = Rng(seed).derive("model");
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  ToyModel m;
  m.config = cfg;
  if (cfg.positional) m.positional = rng_normal(rng, {cfg.tokens, d}, 0.0, cfg.positional_init);
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    ToyLayer layer;
    layer.block.w1 = rng_normal(rng, {d, d}, 0.0, sd);
    layer.block.b1 = Tensor({d});
    layer.block.w2 = rng_normal(rng, {d, d}, 0.0, sd);
    layer.block.b2 = Tensor({d});
    layer.gamma.assign(mods, Tensor({d}, 1.0));
    layer.beta.assign(mods, Tensor({d}));
    switch (cfg.fusion[l]) {
      case ToyFusion::cross_attention:
      case ToyFusion::geminifusion:
        layer.fusion = FusionParams::init(d, cfg.heads, rng, cfg.relation);
        break;
      case ToyFusion::exchange:
        layer.exchange = ExchangeConfig::init(d, cfg.theta, rng);
        break;
      case ToyFusion::none:
        break;
    }
    m.layers.push_back(std::move(layer));
  }
  m.merge_logits = Tensor({mods});
  m.head_w = rng_normal(rng, {d, cfg.classes}, 0.0, sd);
  m.head_b = Tensor({cfg.classes});
  return m;
}

ToyModel ToyModel::zeros_like() const {
  ToyModel z = *this;
  for_each_param(z, [](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

const ToyBlock& ToyModel::block(std::size_t layer, std::size_t modality) const {
  if (layer >= layers.size() || modality >= config.modalities) {
    throw DimensionError("block: index out of range");
  }
  return layers[layer].block;
}

namespace {

template <typename Model, typename Fn>
void visit_params(Model& m, Fn&& fn) {
  using T = std::conditional_t<std::is_const_v<Model>, const Tensor, Tensor>;
  if (m.config.positional) fn(std::string("positional"), m.positional);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    auto& layer = m.layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    fn(p + "block.w1", layer.block.w1);
    fn(p + "block.b1", layer.block.b1);
    fn(p + "block.w2", layer.block.w2);
    fn(p + "block.b2", layer.block.b2);
    for (std::size_t k = 0; k < layer.gamma.size(); ++k) {
      fn(p + "norm" + std::to_string(k) + ".gamma", layer.gamma[k]);
      fn(p + "norm" + std::to_string(k) + ".beta", layer.beta[k]);
    }
    switch (m.config.fusion[l]) {
      case ToyFusion::cross_attention:
      case ToyFusion::geminifusion:
        for_each_tensor(layer.fusion, [&](std::string_view name, T& t) {
          fn(p + "fusion." + std::string(name), t);
        });
        break;
      case ToyFusion::exchange:
        fn(p + "exchange.w1", layer.exchange.w1);
        fn(p + "exchange.b1", layer.exchange.b1);
        fn(p + "exchange.w2", layer.exchange.w2);
        fn(p + "exchange.b2", layer.exchange.b2);
        break;
      case ToyFusion::none:
        break;
    }
  }
  fn(std::string("merge_logits"), m.merge_logits);
  fn(std::string("head.w"), m.head_w);
  fn(std::string("head.b"), m.head_b);
}

}  // namespace

void for_each_param(ToyModel& m, const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_params(m, fn);
}

void for_each_param(const ToyModel& m,
                    const std::function<void(const std::string&, const Tensor&)>& fn) {
  visit_params(m, fn);
}

// -- Forward / backward -----------------------------------------------------------

namespace {

struct BlockCache {
  Tensor x, a, pre, hidden;
};

struct LayerCache {
  std::vector<BlockCache> blocks;
  std::vector<FusionCache> pairs;  // one per partner modality
  std::vector<ScoreCache> scores;  // exchange layers, per modality
};

struct SampleCache {
  std::vector<LayerCache> layers;
  std::vector<Tensor> final_x;
  Tensor merge_w;
  Tensor merged;
  Tensor probs;
};

Tensor scale_cols(const Tensor& x, const Tensor& v) {
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] *= v[c];
  }
  return out;
}

Tensor block_forward(const ToyBlock& b, const Tensor& gamma, const Tensor& beta, const Tensor& x,
                     BlockCache* cache) {
  Tensor a = add_row_vector(scale_cols(x, gamma), beta);
  Tensor pre = add_row_vector(matmul(a, b.w1), b.b1);
  Tensor hidden = pre;
  for (double& v : hidden.values()) v = relu(v);
  Tensor y = add(x, add_row_vector(matmul(hidden, b.w2), b.b2));
  if (cache) *cache = {x, std::move(a), std::move(pre), std::move(hidden)};
  return y;
}

void block_backward(const ToyBlock& b, const Tensor& gamma, const BlockCache& c, Tensor& dx,
                    ToyBlock& gb, Tensor& dgamma, Tensor& dbeta) {
  const Tensor dy = dx;  // residual path keeps dx as is
  add_inplace(gb.w2, matmul_tn(c.hidden, dy));
  add_inplace(gb.b2, column_sum(dy));
  Tensor dpre = matmul_nt(dy, b.w2);
  for (std::size_t k = 0; k < dpre.size(); ++k)
    if (!(c.pre[k] > 0.0)) dpre[k] = 0.0;
  add_inplace(gb.w1, matmul_tn(c.a, dpre));
  add_inplace(gb.b1, column_sum(dpre));
  const Tensor da = matmul_nt(dpre, b.w1);
  add_inplace(dgamma, column_sum(hadamard(da, c.x)));
  add_inplace(dbeta, column_sum(da));
  add_inplace(dx, scale_cols(da, gamma));
}

void add_fusion_grads(FusionParams& acc, FusionParams& g) {
  std::vector<Tensor*> src;
  for_each_tensor(g, [&](std::string_view, Tensor& t) { src.push_back(&t); });
  std::size_t k = 0;
  for_each_tensor(acc, [&](std::string_view, Tensor& t) { add_inplace(t, *src[k++]); });
}

double row_mean(const Tensor& s) { return s.size() ? sum(s) / static_cast<double>(s.size()) : 0.0; }

void check_sample(const ToyModel& model, const std::vector<Tensor>& inputs,
                  const std::vector<int>& labels) {
  const auto& cfg = model.config;
  if (inputs.size() != cfg.modalities) {
    throw DimensionError("toy model: expected " + std::to_string(cfg.modalities) +
                         " modalities, got " + std::to_string(inputs.size()));
  }
  for (const auto& x : inputs) {
    if (x.rank() != 2 || x.cols() != cfg.dim || x.rows() != cfg.tokens) {
      throw DimensionError("toy model: input " + shape_string(x.shape()) + ", expected [" +
                           std::to_string(cfg.tokens) + "x" + std::to_string(cfg.dim) + "]");
    }
  }
  if (labels.size() != cfg.tokens) throw DimensionError("toy model: label count mismatch");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= cfg.classes) {
      throw DomainError("toy model: label " + std::to_string(y) + " out of range");
    }
  }
}

ToyForward run_sample(const ToyModel& model, const std::vector<Tensor>& inputs,
                      const std::vector<int>& labels, SampleCache* cache) {
  check_sample(model, inputs, labels);
  const auto& cfg = model.config;
  const std::size_t mods = cfg.modalities, partners = mods - 1, n = cfg.tokens;
  ToyForward out;
  out.exchanged.resize(cfg.layers);
  if (cache) cache->layers.resize(cfg.layers);

  std::vector<Tensor> xs;
  for (const auto& x : inputs) xs.push_back(cfg.positional ? add(x, model.positional) : x);

  double reg = 0.0;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    const ToyLayer& layer = model.layers[l];
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->blocks.resize(mods);
    for (std::size_t m = 0; m < mods; ++m) {
      xs[m] = block_forward(layer.block, layer.gamma[m], layer.beta[m], xs[m],
                            lc ? &lc->blocks[m] : nullptr);
    }

    const ToyFusion kind = cfg.fusion[l];
    if (kind == ToyFusion::none) continue;

    std::vector<Tensor> scores;
    if (kind == ToyFusion::exchange) {
      if (lc) lc->scores.resize(mods);
      for (std::size_t m = 0; m < mods; ++m) {
        scores.push_back(score_predict(xs[m], layer.exchange, lc ? &lc->scores[m] : nullptr));
        reg += row_mean(scores.back());
      }
      out.exchanged[l].resize(mods);
    }

    // Hub topology: modality 0 is fused with every other modality, and its
    // new state is the mean of the per-partner outputs.
    Tensor hub;
    LayerAttention att{l, 0.0, 0.0};
    for (std::size_t p = 1; p < mods; ++p) {
      FusionOutput f;
      switch (kind) {
        case ToyFusion::exchange:
          f = token_exchange(xs[0], xs[p], scores[0], scores[p], layer.exchange.theta);
          out.exchanged[l][0].insert(out.exchanged[l][0].end(), f.cache.exchanged1.begin(),
                                     f.cache.exchanged1.end());
          out.exchanged[l][p] = f.cache.exchanged2;
          break;
        case ToyFusion::cross_attention:
          f = cross_attention(xs[0], xs[p], layer.fusion, cache != nullptr);
          break;
        case ToyFusion::geminifusion: {
          f = geminifusion_forward(xs[0], xs[p], layer.fusion, cfg.gemini, cache != nullptr);
          const LayerAttention a = summarize_attention(f.cache, l);
          att.self_weight += a.self_weight / static_cast<double>(partners);
          att.cross_weight += a.cross_weight / static_cast<double>(partners);
          break;
        }
        case ToyFusion::none:
          break;
      }
      if (p == 1) {
        hub = std::move(f.y1);
      } else {
        add_inplace(hub, f.y1);
      }
      xs[p] = std::move(f.y2);
      if (lc) lc->pairs.push_back(std::move(f.cache));
    }
    xs[0] = partners > 1 ? scale(hub, 1.0 / static_cast<double>(partners)) : std::move(hub);
    if (kind == ToyFusion::geminifusion) out.attention.push_back(att);
  }

  const Tensor w = softmax_lastdim(model.merge_logits);
  Tensor merged = scale(xs[0], w[0]);
  for (std::size_t m = 1; m < mods; ++m) axpy_inplace(merged, w[m], xs[m]);
  out.logits = add_row_vector(matmul(merged, model.head_w), model.head_b);
  require_finite(out.logits, "toy logits");

  const Tensor probs = softmax_lastdim(out.logits);
  double ce = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = out.logits.row(i);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    ce += (mx + std::log(z)) - row[static_cast<std::size_t>(labels[i])];
  }
  out.cross_entropy = ce / static_cast<double>(n);
  out.loss = out.cross_entropy + cfg.l1_weight * reg;

  if (cache) {
    cache->final_x = std::move(xs);
    cache->merge_w = w;
    cache->merged = std::move(merged);
    cache->probs = probs;
  }
  return out;
}

}  // namespace

ToyForward toy_forward(const ToyModel& model, const std::vector<Tensor>& inputs,
                       const std::vector<int>& labels) {
  return run_sample(model, inputs, labels, nullptr);
}

ToyForward toy_forward_backward(const ToyModel& model, const std::vector<Tensor>& inputs,
                                const std::vector<int>& labels, double weight, ToyModel& grads) {
  SampleCache c;
  ToyForward out = run_sample(model, inputs, labels, &c);
  const auto& cfg = model.config;
  const std::size_t mods = cfg.modalities, partners = mods - 1, n = cfg.tokens;

  // Head and merge.
  Tensor dlogits = c.probs;
  for (std::size_t i = 0; i < n; ++i) dlogits(i, static_cast<std::size_t>(labels[i])) -= 1.0;
  for (double& v : dlogits.values()) v *= weight / static_cast<double>(n);
  add_inplace(grads.head_w, matmul_tn(c.merged, dlogits));
  add_inplace(grads.head_b, column_sum(dlogits));
  const Tensor dmerged = matmul_nt(dlogits, model.head_w);

  std::vector<Tensor> dx(mods);
  std::vector<double> dw(mods);
  double wdw = 0.0;
  for (std::size_t m = 0; m < mods; ++m) {
    dx[m] = scale(dmerged, c.merge_w[m]);
    dw[m] = 0.0;
    for (std::size_t k = 0; k < dmerged.size(); ++k) dw[m] += dmerged[k] * c.final_x[m][k];
    wdw += c.merge_w[m] * dw[m];
  }
  for (std::size_t m = 0; m < mods; ++m) grads.merge_logits[m] += c.merge_w[m] * (dw[m] - wdw);

  const double ds_scale = weight * cfg.l1_weight / static_cast<double>(n);
  for (std::size_t l = cfg.layers; l-- > 0;) {
    const ToyLayer& layer = model.layers[l];
    ToyLayer& gl = grads.layers[l];
    const LayerCache& lc = c.layers[l];
    const ToyFusion kind = cfg.fusion[l];

    if (kind != ToyFusion::none) {
      const Tensor dhub = partners > 1 ? scale(dx[0], 1.0 / static_cast<double>(partners)) : dx[0];
      Tensor dprev0(dx[0].shape());
      for (std::size_t p = 1; p < mods; ++p) {
        FusionGrads g = fusion_backward(lc.pairs[p - 1], dhub, dx[p]);
        add_inplace(dprev0, g.dx1);
        dx[p] = std::move(g.dx2);
        if (kind != ToyFusion::exchange) add_fusion_grads(gl.fusion, g.params);
      }
      dx[0] = std::move(dprev0);
      if (kind == ToyFusion::exchange) {
        const Tensor ds({n}, ds_scale);
        for (std::size_t m = 0; m < mods; ++m) {
          score_predict_backward(layer.exchange, lc.scores[m], ds, dx[m], gl.exchange);
        }
      }
    }
    for (std::size_t m = 0; m < mods; ++m) {
      block_backward(layer.block, layer.gamma[m], lc.blocks[m], dx[m], gl.block, gl.gamma[m],
                     gl.beta[m]);
    }
  }
  if (cfg.positional) {
    for (std::size_t m = 0; m < mods; ++m) add_inplace(grads.positional, dx[m]);
  }
  return out;
}

// -- Training and evaluation --------------------------------------------------------

std::pair<double, double> token_accuracy(const std::vector<int>& predictions,
                                         const std::vector<int>& labels, std::size_t classes) {
  if (predictions.size() != labels.size()) {
    throw DimensionError("token_accuracy: prediction and label counts differ");
  }
  if (labels.empty()) return {0.0, 0.0};
  std::vector<std::size_t> hit(classes, 0), total(classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    if (y >= classes) throw DomainError("token_accuracy: label out of range");
    ++total[y];
    if (predictions[i] == labels[i]) {
      ++correct;
      ++hit[y];
    }
  }
  double per_class = 0.0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    if (total[k] == 0) continue;
    per_class += static_cast<double>(hit[k]) / static_cast<double>(total[k]);
    ++present;
  }
  return {static_cast<double>(correct) / static_cast<double>(labels.size()),
          per_class / static_cast<double>(present)};
}

EvalMetrics evaluate(const ToyModel& model, const Dataset& data) {
  const auto& cfg = model.config;
  EvalMetrics m;
  m.exchange_masks.assign(cfg.layers, {});
  std::vector<int> predictions, labels;
  std::vector<LayerAttention> att;
  for (std::size_t s = 0; s < data.size(); ++s) {
    const ToyForward f = toy_forward(model, data.inputs[s], data.labels[s]);
    m.loss += f.loss;
    for (std::size_t i = 0; i < f.logits.rows(); ++i) {
      const auto row = f.logits.row(i);
      predictions.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
      labels.push_back(data.labels[s][i]);
    }
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      auto& dst = m.exchange_masks[l];
      const auto& src = f.exchanged[l];
      if (src.empty()) continue;
      dst.resize(src.size());
      for (std::size_t k = 0; k < src.size(); ++k) dst[k].insert(dst[k].end(), src[k].begin(), src[k].end());
    }
    if (att.empty()) {
      att = f.attention;
    } else {
      for (std::size_t k = 0; k < att.size(); ++k) {
        att[k].self_weight += f.attention[k].self_weight;
        att[k].cross_weight += f.attention[k].cross_weight;
      }
    }
  }
  if (data.size()) {
    const double inv = 1.0 / static_cast<double>(data.size());
    m.loss *= inv;
    for (auto& a : att) {
      a.self_weight *= inv;
      a.cross_weight *= inv;
    }
  }
  m.attention = std::move(att);
  std::tie(m.accuracy, m.mean_class_accuracy) = token_accuracy(predictions, labels, cfg.classes);
  return m;
}

namespace {

std::vector<Tensor*> param_list(ToyModel& m) {
  std::vector<Tensor*> out;
  for_each_param(m, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

}  // namespace

TrainHistory train(ToyModel& model, const Dataset& data, const TrainConfig& opt, std::uint64_t seed) {
  if (opt.batch < 1) throw ConfigError("train: batch must be positive");
  if (!(opt.lr >= 0.0) || !std::isfinite(opt.lr)) throw ConfigError("train: lr must be >= 0");
  if (!(opt.momentum >= 0.0 && opt.momentum < 1.0)) {
    throw ConfigError("train: momentum must lie in [0, 1)");
  }
  if (data.size() == 0) throw ConfigError("train: empty dataset");

  TrainHistory h;
  for (std::size_t s = 0; s < data.size(); ++s) {
    h.initial_loss += toy_forward(model, data.inputs[s], data.labels[s]).loss;
  }
  h.initial_loss /= static_cast<double>(data.size());

  Rng shuffle = Rng(seed).derive("shuffle");
  ToyModel grads = model.zeros_like();
  ToyModel velocity = model.zeros_like();
  const auto params = param_list(model);
  const auto gparams = param_list(grads);
  const auto vparams = param_list(velocity);

  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto order = shuffle.permutation(data.size());
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch, ++batch_index) {
      const std::size_t count = std::min(opt.batch, order.size() - start);
      const double weight = 1.0 / static_cast<double>(count);
      for (Tensor* g : gparams) g->fill(0.0);
      double batch_loss = 0.0;
      try {
        for (std::size_t k = 0; k < count; ++k) {
          const std::size_t s = order[start + k];
          batch_loss += weight * toy_forward_backward(model, data.inputs[s], data.labels[s], weight, grads).loss;
        }
      } catch (const NumericError& e) {
        throw NumericError("train: epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + e.what());
      } catch (const DomainError& e) {
        // Diverged parameters surface as non-finite kernel inputs.
        throw NumericError("train: epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + e.what());
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index));
      }
      for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& p = *params[k];
        Tensor& v = *vparams[k];
        const Tensor& g = *gparams[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
          v[i] = opt.momentum * v[i] + g[i];
          p[i] -= opt.lr * v[i];
        }
      }
      epoch_loss += batch_loss * static_cast<double>(count);
    }
    h.epoch_loss.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return h;
}

ToyRun run_experiment(const ToyDatasetConfig& data_cfg, const ToyModelConfig& model_cfg,
                      const TrainConfig& opt, std::uint64_t seed, std::size_t eval_samples) {
  if (model_cfg.dim != data_cfg.channels || model_cfg.tokens != data_cfg.tokens ||
      model_cfg.classes != data_cfg.classes || model_cfg.modalities != data_cfg.modalities) {
    throw ConfigError("experiment: model and dataset disagree on dim/tokens/classes/modalities");
  }
  if (eval_samples < 1) throw ConfigError("experiment: eval_samples must be positive");
  ToyRun run;
  run.dataset = data_cfg;
  run.dataset.seed = seed;
  run.model_config = model_cfg;
  run.train_config = opt;
  run.seed = seed;

  const Dataset train_set = generate_dataset(run.dataset);
  ToyDatasetConfig eval_cfg = run.dataset;
  eval_cfg.seed = splitmix64(seed);
  eval_cfg.samples = eval_samples;
  const Dataset eval_set = generate_dataset(eval_cfg);

  run.model = ToyModel::init(model_cfg, seed);
  run.history = train(run.model, train_set, opt, seed);
  run.eval = evaluate(run.model, eval_set);
  return run;
}

std::vector<std::vector<double>> layer_exchange_rate(const ToyRun& run) {
  const auto& cfg = run.model_config;
  std::vector<std::vector<double>> rates(cfg.layers, std::vector<double>(cfg.modalities, 0.0));
  for (std::size_t l = 0; l < cfg.layers && l < run.eval.exchange_masks.size(); ++l) {
    const auto& masks = run.eval.exchange_masks[l];
    for (std::size_t m = 0; m < masks.size(); ++m) {
      if (masks[m].empty()) continue;
      std::size_t hits = 0;
      for (auto b : masks[m]) hits += b;
      rates[l][m] = static_cast<double>(hits) / static_cast<double>(masks[m].size());
    }
  }
  return rates;
}

// -- Sweep and trace ------------------------------------------------------------------

SweepResult threshold_sweep(const ToyDatasetConfig& data_cfg, const ToyModelConfig& model_cfg,
                            const TrainConfig& opt, const std::vector<double>& thetas,
                            const std::vector<std::uint64_t>& seeds, std::size_t workers,
                            std::size_t eval_samples) {
  if (!model_cfg.uses(ToyFusion::exchange)) {
    throw ConfigError("threshold_sweep: model has no exchange layer");
  }
  if (thetas.empty() || seeds.empty()) throw ConfigError("threshold_sweep: empty theta or seed list");
  for (double t : thetas) {
    if (!(t >= 0.0 && t <= 1.0)) {
      throw DomainError("threshold_sweep: theta " + std::to_string(t) + " outside [0, 1]");
    }
  }

  const std::size_t jobs = thetas.size() * seeds.size();
  std::vector<ToyRun> runs(jobs);
  std::vector<std::exception_ptr> errors(jobs);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t j = next++; j < jobs; j = next++) {
      try {
        ToyModelConfig cfg = model_cfg;
        cfg.theta = thetas[j / seeds.size()];
        runs[j] = run_experiment(data_cfg, cfg, opt, seeds[j % seeds.size()], eval_samples);
        runs[j].model = ToyModel{};  // the sweep keeps metrics only
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(workers, jobs));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  SweepResult result;
  for (std::size_t ti = 0; ti < thetas.size(); ++ti) {
    double acc = 0.0;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const ToyRun& run = runs[ti * seeds.size() + si];
      acc += run.eval.accuracy;
      const auto rates = layer_exchange_rate(run);
      for (std::size_t l = 0; l < rates.size(); ++l) {
        result.rows.push_back({thetas[ti], seeds[si], run.eval.accuracy, l, rates[l]});
      }
    }
    result.summary.push_back({thetas[ti], acc / static_cast<double>(seeds.size())});
  }
  return result;
}

std::vector<LayerAttention> toy_attention_trace(const ToyModel& model, const Dataset& data) {
  if (!model.config.uses(ToyFusion::geminifusion)) {
    throw ConfigError("attention trace: model has no geminifusion layer");
  }
  if (data.size() == 0) throw ConfigError("attention trace: empty dataset");
  return evaluate(model, data).attention;
}

}  // namespace gmnf
