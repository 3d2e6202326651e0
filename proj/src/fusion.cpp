// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gmnf/errors.hpp"

namespace gmnf {

std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::token_exchange:
      return "exchange";
    case Mechanism::cross_attention:
      return "cross_attention";
    case Mechanism::pixelwise:
      return "pixelwise";
    case Mechanism::geminifusion:
      return "geminifusion";
  }
  throw ConfigError("unknown mechanism");
}

Mechanism parse_mechanism(std::string_view name) {
  if (name == "exchange" || name == "token_exchange") return Mechanism::token_exchange;
  if (name == "cross_attention") return Mechanism::cross_attention;
  if (name == "pixelwise") return Mechanism::pixelwise;
  if (name == "geminifusion") return Mechanism::geminifusion;
  throw ConfigError("unknown mechanism '" + std::string(name) + "'");
}

// -- Parameters ---------------------------------------------------------------

FusionParams FusionParams::zeros(std::size_t dim, std::size_t heads, RelationVariant variant,
                                 std::size_t phi_hidden) {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError("fusion params: heads (" + std::to_string(heads) +
                      ") must be positive and divide dim (" + std::to_string(dim) + ")");
  }
  FusionParams p;
  p.dim = dim;
  p.heads = heads;
  p.w_q = Tensor({dim, dim});
  p.w_k = Tensor({dim, dim});
  p.w_v = Tensor({dim, dim});
  p.phi = RelationDiscriminator::zeros(variant, dim, phi_hidden ? phi_hidden : dim);
  p.noise_k = Tensor({dim});
  p.noise_v = Tensor({dim});
  return p;
}

FusionParams FusionParams::init(std::size_t dim, std::size_t heads, Rng& rng,
                                RelationVariant variant, std::size_t phi_hidden) {
  FusionParams p = zeros(dim, heads, variant, phi_hidden);
  const double sd = 1.0 / std::sqrt(static_cast<double>(dim));
  p.w_q = rng_normal(rng, p.w_q.shape(), 0.0, sd);
  p.w_k = rng_normal(rng, p.w_k.shape(), 0.0, sd);
  p.w_v = rng_normal(rng, p.w_v.shape(), 0.0, sd);
  p.phi = RelationDiscriminator::init(variant, dim, phi_hidden ? phi_hidden : dim, rng);
  p.noise_k = rng_normal(rng, p.noise_k.shape(), 0.0, 0.02);
  p.noise_v = rng_normal(rng, p.noise_v.shape(), 0.0, 0.02);
  return p;
}

FusionParams FusionParams::zeros_like() const {
  FusionParams z = *this;
  for_each_tensor(z, [](std::string_view, Tensor& t) { t.fill(0.0); });
  return z;
}

void FusionParams::validate() const {
  if (dim == 0 || heads == 0 || dim % heads != 0) {
    throw ConfigError("fusion params: heads (" + std::to_string(heads) +
                      ") must be positive and divide dim (" + std::to_string(dim) + ")");
  }
  const Shape square{dim, dim};
  const Shape vec{dim};
  auto expect = [](const Tensor& t, const Shape& s, const char* name) {
    if (t.shape() != s) {
      throw DimensionError(std::string("fusion params: ") + name + " has shape " +
                           shape_string(t.shape()) + ", expected " + shape_string(s));
    }
  };
  expect(w_q, square, "w_q");
  expect(w_k, square, "w_k");
  expect(w_v, square, "w_v");
  expect(noise_k, vec, "noise_k");
  expect(noise_v, vec, "noise_v");
  if (phi.w1.rank() != 2 || phi.w1.rows() != 2 * dim) {
    throw DimensionError("fusion params: relation discriminator input width must be 2*dim");
  }
  for_each_tensor(*this, [](std::string_view name, const Tensor& t) {
    if (!t.all_finite()) {
      throw DomainError("fusion params: non-finite value in " + std::string(name));
    }
  });
}

void for_each_tensor(FusionParams& p, const std::function<void(std::string_view, Tensor&)>& fn) {
  fn("w_q", p.w_q);
  fn("w_k", p.w_k);
  fn("w_v", p.w_v);
  fn("phi.w1", p.phi.w1);
  fn("phi.b1", p.phi.b1);
  fn("phi.w2", p.phi.w2);
  fn("phi.b2", p.phi.b2);
  fn("noise_k", p.noise_k);
  fn("noise_v", p.noise_v);
}

void for_each_tensor(const FusionParams& p,
                     const std::function<void(std::string_view, const Tensor&)>& fn) {
  for_each_tensor(const_cast<FusionParams&>(p),
                  [&](std::string_view name, Tensor& t) { fn(name, t); });
}

namespace {

void check_inputs(const Tensor& x1, const Tensor& x2, const FusionParams& p, const char* op) {
  require_rank(x1, 2, op);
  require_same_shape(x1, x2, op);
  if (x1.cols() != p.dim) {
    throw DimensionError(std::string(op) + ": input width " + std::to_string(x1.cols()) +
                         " does not match model dim " + std::to_string(p.dim));
  }
  if (x1.rows() == 0) throw DimensionError(std::string(op) + ": need at least one token");
  if (p.heads == 0 || p.dim % p.heads != 0) {
    throw ConfigError(std::string(op) + ": heads must divide dim");
  }
  require_finite(x1, "input x1");
  require_finite(x2, "input x2");
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  Tensor s({count, a.cols()});
  std::copy_n(a.data() + begin * a.cols(), count * a.cols(), s.data());
  return s;
}

Tensor scale_rows(const Tensor& a, const Tensor& r) {
  Tensor s = a;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (double& v : s.row(i)) v *= r[i];
  return s;
}

// -- Per-token attention over a handful of key/value entries ----------------
//
// For token i and head h with entries e = 0..E-1:
//   w[i,h,:] = softmax_e(q[i,h] . keys[e][i,h] / sqrt(d_h))
//   out[i,h] = sum_e w[i,h,e] values[e][i,h]

Tensor token_attention(const Tensor& q, const std::vector<Tensor>& keys,
                       const std::vector<Tensor>& values, std::size_t heads, Tensor& weights) {
  const std::size_t n = q.rows(), d = q.cols(), dh = d / heads, entries = keys.size();
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  weights = Tensor({n, heads, entries});
  Tensor logits({n, heads, entries});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < heads; ++h) {
      auto qh = q.row(i).subspan(h * dh, dh);
      for (std::size_t e = 0; e < entries; ++e) {
        logits[(i * heads + h) * entries + e] = dot(qh, keys[e].row(i).subspan(h * dh, dh)) * inv;
      }
    }
  }
  require_finite(logits, "attention_logits");
  weights = softmax_lastdim(logits);
  Tensor out({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < heads; ++h) {
      auto oh = out.row(i).subspan(h * dh, dh);
      for (std::size_t e = 0; e < entries; ++e) {
        axpy(weights[(i * heads + h) * entries + e], values[e].row(i).subspan(h * dh, dh), oh);
      }
    }
  }
  require_finite(out, "attention_output");
  return out;
}

void token_attention_backward(const Tensor& q, const std::vector<Tensor>& keys,
                              const std::vector<Tensor>& values, std::size_t heads,
                              const Tensor& weights, const Tensor& dout, Tensor& dq,
                              std::vector<Tensor>& dkeys, std::vector<Tensor>& dvalues) {
  const std::size_t n = q.rows(), d = q.cols(), dh = d / heads, entries = keys.size();
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  dq = Tensor({n, d});
  dkeys.assign(entries, Tensor({n, d}));
  dvalues.assign(entries, Tensor({n, d}));
  std::vector<double> dp(entries), dl(entries);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t base = (i * heads + h) * entries;
      auto doh = dout.row(i).subspan(h * dh, dh);
      double mean = 0.0;
      for (std::size_t e = 0; e < entries; ++e) {
        dp[e] = dot(doh, values[e].row(i).subspan(h * dh, dh));
        axpy(weights[base + e], doh, dvalues[e].row(i).subspan(h * dh, dh));
        mean += weights[base + e] * dp[e];
      }
      for (std::size_t e = 0; e < entries; ++e) {
        dl[e] = weights[base + e] * (dp[e] - mean) * inv;
        axpy(dl[e], keys[e].row(i).subspan(h * dh, dh), dq.row(i).subspan(h * dh, dh));
        axpy(dl[e], q.row(i).subspan(h * dh, dh), dkeys[e].row(i).subspan(h * dh, dh));
      }
    }
  }
}

// -- GeminiFusion / pixel-wise -------------------------------------------------

void gemini_direction(const Tensor& self_in, const Tensor& other_in, const FusionParams& p,
                      const GeminiOptions& opts, DirectionCache& c, Tensor& y) {
  c.self_in = self_in;
  c.other_in = other_in;
  c.q = matmul(self_in, p.w_q);
  require_finite(c.q, "q_projection");
  c.keys.clear();
  c.values.clear();

  Tensor key_self, value_self;
  if (opts.self_entry) {
    key_self = matmul(opts.noise ? add_row_vector(self_in, p.noise_k) : self_in, p.w_k);
    require_finite(key_self, "self_key");
  }
  c.cross_key_base = matmul(self_in, p.w_k);
  require_finite(c.cross_key_base, "cross_key");
  if (opts.relation) {
    c.relation = relation_score(self_in, other_in, p.phi, &c.relation_cache);
    require_finite(c.relation, "relation_score");
  } else {
    c.relation = Tensor({self_in.rows()}, 1.0);
  }
  Tensor key_cross = opts.relation ? scale_rows(c.cross_key_base, c.relation) : c.cross_key_base;
  if (opts.self_entry) {
    value_self = matmul(opts.noise ? add_row_vector(self_in, p.noise_v) : self_in, p.w_v);
    require_finite(value_self, "self_value");
  }
  Tensor value_cross = matmul(other_in, p.w_v);
  require_finite(value_cross, "cross_value");

  if (opts.self_entry) {
    c.keys.push_back(std::move(key_self));
    c.values.push_back(std::move(value_self));
  }
  c.keys.push_back(std::move(key_cross));
  c.values.push_back(std::move(value_cross));

  y = token_attention(c.q, c.keys, c.values, p.heads, c.weights);
  add_inplace(y, self_in);
  require_finite(y, "output");
}

void gemini_direction_backward(const FusionParams& p, const GeminiOptions& opts,
                               const DirectionCache& c, const Tensor& dy, Tensor& dself,
                               Tensor& dother, FusionParams& g) {
  add_inplace(dself, dy);
  Tensor dq;
  std::vector<Tensor> dkeys, dvalues;
  token_attention_backward(c.q, c.keys, c.values, p.heads, c.weights, dy, dq, dkeys, dvalues);

  add_inplace(g.w_q, matmul_tn(c.self_in, dq));
  add_inplace(dself, matmul_nt(dq, p.w_q));

  std::size_t e = 0;
  if (opts.self_entry) {
    const Tensor key_in = opts.noise ? add_row_vector(c.self_in, p.noise_k) : c.self_in;
    add_inplace(g.w_k, matmul_tn(key_in, dkeys[e]));
    Tensor dkey_in = matmul_nt(dkeys[e], p.w_k);
    add_inplace(dself, dkey_in);
    if (opts.noise) add_inplace(g.noise_k, column_sum(dkey_in));

    const Tensor value_in = opts.noise ? add_row_vector(c.self_in, p.noise_v) : c.self_in;
    add_inplace(g.w_v, matmul_tn(value_in, dvalues[e]));
    Tensor dvalue_in = matmul_nt(dvalues[e], p.w_v);
    add_inplace(dself, dvalue_in);
    if (opts.noise) add_inplace(g.noise_v, column_sum(dvalue_in));
    ++e;
  }

  const Tensor& dkey_cross = dkeys[e];
  Tensor dbase = dkey_cross;
  if (opts.relation) {
    Tensor drel({c.self_in.rows()});
    for (std::size_t i = 0; i < c.self_in.rows(); ++i) {
      drel[i] = dot(dkey_cross.row(i), c.cross_key_base.row(i));
    }
    dbase = scale_rows(dkey_cross, c.relation);
    relation_backward(p.phi, c.relation_cache, drel, dself, dother, g.phi);
  }
  add_inplace(g.w_k, matmul_tn(c.self_in, dbase));
  add_inplace(dself, matmul_nt(dbase, p.w_k));

  add_inplace(g.w_v, matmul_tn(c.other_in, dvalues[e]));
  add_inplace(dother, matmul_nt(dvalues[e], p.w_v));
}

void pixel_direction(const Tensor& self_in, const Tensor& other_in, const FusionParams& p,
                     DirectionCache& c, Tensor& y) {
  c.self_in = self_in;
  c.other_in = other_in;
  c.q = matmul(self_in, p.w_q);
  require_finite(c.q, "q_projection");
  c.keys = {matmul(other_in, p.w_k)};
  require_finite(c.keys[0], "cross_key");
  c.values = {matmul(other_in, p.w_v)};
  require_finite(c.values[0], "cross_value");
  y = token_attention(c.q, c.keys, c.values, p.heads, c.weights);
  add_inplace(y, self_in);
  require_finite(y, "output");
}

void pixel_direction_backward(const FusionParams& p, const DirectionCache& c, const Tensor& dy,
                              Tensor& dself, Tensor& dother, FusionParams& g) {
  add_inplace(dself, dy);
  Tensor dq;
  std::vector<Tensor> dkeys, dvalues;
  token_attention_backward(c.q, c.keys, c.values, p.heads, c.weights, dy, dq, dkeys, dvalues);
  add_inplace(g.w_q, matmul_tn(c.self_in, dq));
  add_inplace(dself, matmul_nt(dq, p.w_q));
  add_inplace(g.w_k, matmul_tn(c.other_in, dkeys[0]));
  add_inplace(dother, matmul_nt(dkeys[0], p.w_k));
  add_inplace(g.w_v, matmul_tn(c.other_in, dvalues[0]));
  add_inplace(dother, matmul_nt(dvalues[0], p.w_v));
}

// -- Full cross-attention -------------------------------------------------------

constexpr std::size_t kRowBlock = 256;

void cross_direction(const Tensor& self_in, const Tensor& other_in, const FusionParams& p,
                     bool retain, DirectionCache& c, Tensor& y) {
  const std::size_t n = self_in.rows(), d = p.dim, heads = p.heads, dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = matmul(self_in, p.w_q);
  require_finite(q, "q_projection");
  Tensor k = matmul(other_in, p.w_k);
  require_finite(k, "k_projection");
  Tensor v = matmul(other_in, p.w_v);
  require_finite(v, "v_projection");

  y = Tensor({n, d});
  if (retain) c.probs.assign(heads, Tensor());
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, dh);
    const Tensor kh_t = transpose(slice_cols(k, h * dh, dh));
    const Tensor vh = slice_cols(v, h * dh, dh);
    if (retain) c.probs[h] = Tensor({n, n});
    for (std::size_t r0 = 0; r0 < n; r0 += kRowBlock) {
      const std::size_t rows = std::min(kRowBlock, n - r0);
      Tensor logits = matmul(slice_rows(qh, r0, rows), kh_t);
      for (auto& val : logits.values()) val *= inv;
      require_finite(logits, "attention_logits");
      Tensor probs = softmax_lastdim(logits);
      Tensor out = matmul(probs, vh);
      for (std::size_t i = 0; i < rows; ++i)
        std::copy_n(out.data() + i * dh, dh, y.data() + (r0 + i) * d + h * dh);
      if (retain) std::copy_n(probs.data(), rows * n, c.probs[h].data() + r0 * n);
    }
  }
  require_finite(y, "attention_output");
  add_inplace(y, self_in);
  require_finite(y, "output");
  if (retain) {
    c.self_in = self_in;
    c.other_in = other_in;
    c.q = std::move(q);
    c.k = std::move(k);
    c.v = std::move(v);
  }
}

void cross_direction_backward(const FusionParams& p, const DirectionCache& c, const Tensor& dy,
                              Tensor& dself, Tensor& dother, FusionParams& g) {
  const std::size_t n = c.self_in.rows(), d = p.dim, heads = p.heads, dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  add_inplace(dself, dy);
  Tensor dq({n, d}), dk({n, d}), dv({n, d});
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor& probs = c.probs[h];
    const Tensor doh = slice_cols(dy, h * dh, dh);
    const Tensor qh = slice_cols(c.q, h * dh, dh);
    const Tensor kh = slice_cols(c.k, h * dh, dh);
    const Tensor vh = slice_cols(c.v, h * dh, dh);
    Tensor dprobs = matmul_nt(doh, vh);
    set_cols(dv, h * dh, matmul_tn(probs, doh));
    Tensor dlogits({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      double mean = 0.0;
      for (std::size_t j = 0; j < n; ++j) mean += probs(i, j) * dprobs(i, j);
      for (std::size_t j = 0; j < n; ++j) dlogits(i, j) = probs(i, j) * (dprobs(i, j) - mean) * inv;
    }
    set_cols(dq, h * dh, matmul(dlogits, kh));
    set_cols(dk, h * dh, matmul_tn(dlogits, qh));
  }
  add_inplace(g.w_q, matmul_tn(c.self_in, dq));
  add_inplace(dself, matmul_nt(dq, p.w_q));
  add_inplace(g.w_k, matmul_tn(c.other_in, dk));
  add_inplace(dother, matmul_nt(dk, p.w_k));
  add_inplace(g.w_v, matmul_tn(c.other_in, dv));
  add_inplace(dother, matmul_nt(dv, p.w_v));
}

FusionCache make_cache(Mechanism m, const Tensor& x1, const FusionParams& p, bool retain) {
  FusionCache cache;
  cache.mechanism = m;
  cache.retained = retain;
  cache.input_shape = x1.shape();
  if (retain) cache.params = p;
  return cache;
}

}  // namespace

// -- Public forward ops ---------------------------------------------------------

FusionOutput token_exchange(const Tensor& x1, const Tensor& x2, const Tensor& s1,
                            const Tensor& s2, double theta) {
  require_rank(x1, 2, "token_exchange");
  require_same_shape(x1, x2, "token_exchange");
  const std::size_t n = x1.rows();
  if (s1.rank() != 1 || s2.rank() != 1 || s1.size() != n || s2.size() != n) {
    throw DimensionError("token_exchange: scores must be [" + std::to_string(n) + "] vectors");
  }
  if (!(theta >= 0.0 && theta <= 1.0)) {
    throw DomainError("token_exchange: theta must lie in [0, 1], got " + std::to_string(theta));
  }
  if (!s1.all_finite() || !s2.all_finite()) {
    throw DomainError("token_exchange: non-finite score");
  }
  FusionOutput out;
  out.cache.mechanism = Mechanism::token_exchange;
  out.cache.retained = true;
  out.cache.input_shape = x1.shape();
  out.cache.exchanged1.assign(n, 0);
  out.cache.exchanged2.assign(n, 0);
  out.y1 = x1;
  out.y2 = x2;
  for (std::size_t i = 0; i < n; ++i) {
    if (s1[i] < theta) {
      out.cache.exchanged1[i] = 1;
      std::copy(x2.row(i).begin(), x2.row(i).end(), out.y1.row(i).begin());
    }
    if (s2[i] < theta) {
      out.cache.exchanged2[i] = 1;
      std::copy(x1.row(i).begin(), x1.row(i).end(), out.y2.row(i).begin());
    }
  }
  return out;
}

FusionOutput cross_attention(const Tensor& x1, const Tensor& x2, const FusionParams& p,
                             bool retain_cache) {
  check_inputs(x1, x2, p, "cross_attention");
  FusionOutput out;
  out.cache = make_cache(Mechanism::cross_attention, x1, p, retain_cache);
  cross_direction(x1, x2, p, retain_cache, out.cache.dirs[0], out.y1);
  cross_direction(x2, x1, p, retain_cache, out.cache.dirs[1], out.y2);
  return out;
}

FusionOutput pixelwise_cross_attention(const Tensor& x1, const Tensor& x2, const FusionParams& p,
                                       bool retain_cache) {
  check_inputs(x1, x2, p, "pixelwise_cross_attention");
  FusionOutput out;
  out.cache = make_cache(Mechanism::pixelwise, x1, p, retain_cache);
  pixel_direction(x1, x2, p, out.cache.dirs[0], out.y1);
  pixel_direction(x2, x1, p, out.cache.dirs[1], out.y2);
  if (!retain_cache) out.cache.dirs = {};
  return out;
}

FusionOutput geminifusion_forward(const Tensor& x1, const Tensor& x2, const FusionParams& p,
                                  const GeminiOptions& opts, bool retain_cache) {
  check_inputs(x1, x2, p, "geminifusion_forward");
  FusionOutput out;
  out.cache = make_cache(Mechanism::geminifusion, x1, p, retain_cache);
  out.cache.options = opts;
  gemini_direction(x1, x2, p, opts, out.cache.dirs[0], out.y1);
  gemini_direction(x2, x1, p, opts, out.cache.dirs[1], out.y2);
  if (!retain_cache) {
    // Keep the attention weights for tracing; drop the rest.
    for (auto& dir : out.cache.dirs) {
      Tensor w = std::move(dir.weights);
      dir = DirectionCache{};
      dir.weights = std::move(w);
    }
  }
  return out;
}

// -- Backward ---------------------------------------------------------------------

FusionGrads fusion_backward(const FusionCache& cache, const Tensor& dy1, const Tensor& dy2) {
  if (!cache.retained) {
    throw StateError("fusion_backward: cache was not retained by the forward pass");
  }
  if (dy1.shape() != cache.input_shape || dy2.shape() != cache.input_shape) {
    throw StateError("fusion_backward: gradient shapes " + shape_string(dy1.shape()) + ", " +
                     shape_string(dy2.shape()) + " do not match cached forward " +
                     shape_string(cache.input_shape));
  }
  FusionGrads g;
  g.dx1 = Tensor(cache.input_shape);
  g.dx2 = Tensor(cache.input_shape);

  switch (cache.mechanism) {
    case Mechanism::token_exchange: {
      const std::size_t n = cache.input_shape[0];
      if (cache.exchanged1.size() != n || cache.exchanged2.size() != n) {
        throw StateError("fusion_backward: exchange masks do not match cached forward");
      }
      for (std::size_t i = 0; i < n; ++i) {
        auto d1 = g.dx1.row(i);
        auto d2 = g.dx2.row(i);
        auto u1 = dy1.row(i);
        auto u2 = dy2.row(i);
        for (std::size_t j = 0; j < d1.size(); ++j) {
          // Y1[i] reads X2[i] when exchanged1; Y2[i] reads X1[i] when exchanged2.
          (cache.exchanged1[i] ? d2[j] : d1[j]) += u1[j];
          (cache.exchanged2[i] ? d1[j] : d2[j]) += u2[j];
        }
      }
      return g;
    }
    case Mechanism::cross_attention:
      g.params = cache.params.zeros_like();
      cross_direction_backward(cache.params, cache.dirs[0], dy1, g.dx1, g.dx2, g.params);
      cross_direction_backward(cache.params, cache.dirs[1], dy2, g.dx2, g.dx1, g.params);
      return g;
    case Mechanism::pixelwise:
      g.params = cache.params.zeros_like();
      pixel_direction_backward(cache.params, cache.dirs[0], dy1, g.dx1, g.dx2, g.params);
      pixel_direction_backward(cache.params, cache.dirs[1], dy2, g.dx2, g.dx1, g.params);
      return g;
    case Mechanism::geminifusion:
      g.params = cache.params.zeros_like();
      gemini_direction_backward(cache.params, cache.options, cache.dirs[0], dy1, g.dx1, g.dx2,
                                g.params);
      gemini_direction_backward(cache.params, cache.options, cache.dirs[1], dy2, g.dx2, g.dx1,
                                g.params);
      return g;
  }
  throw StateError("fusion_backward: unknown mechanism");
}

// -- Attention weights and tracing ---------------------------------------------

Tensor attention_weights(const FusionCache& cache, int direction) {
  if (cache.mechanism != Mechanism::geminifusion && cache.mechanism != Mechanism::pixelwise) {
    throw StateError("attention_weights: only per-token mechanisms expose weights");
  }
  if (direction != 0 && direction != 1) {
    throw DomainError("attention_weights: direction must be 0 or 1");
  }
  const Tensor& w = cache.dirs[direction].weights;
  if (w.rank() != 3) throw StateError("attention_weights: no weights recorded");
  const std::size_t n = w.dim(0), heads = w.dim(1), entries = w.dim(2);
  Tensor out({n, heads, 2});
  for (std::size_t i = 0; i < n * heads; ++i) {
    if (entries == 2) {
      out[2 * i] = w[2 * i];
      out[2 * i + 1] = w[2 * i + 1];
    } else {
      out[2 * i] = 0.0;
      out[2 * i + 1] = w[i];
    }
  }
  return out;
}

LayerAttention summarize_attention(const FusionCache& cache, std::size_t layer) {
  LayerAttention stats;
  stats.layer = layer;
  std::size_t count = 0;
  for (int dir = 0; dir < 2; ++dir) {
    const Tensor w = attention_weights(cache, dir);
    for (std::size_t i = 0; i < w.size(); i += 2) {
      stats.self_weight += w[i];
      stats.cross_weight += w[i + 1];
      ++count;
    }
  }
  if (count) {
    stats.self_weight /= static_cast<double>(count);
    stats.cross_weight /= static_cast<double>(count);
  }
  return stats;
}

std::vector<LayerAttention> attention_trace(const Tensor& x1, const Tensor& x2,
                                            std::span<const FusionParams> layers,
                                            const GeminiOptions& opts) {
  if (layers.empty()) throw ConfigError("attention_trace: need at least one layer");
  std::vector<LayerAttention> rows;
  rows.reserve(layers.size());
  Tensor a = x1, b = x2;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    FusionOutput out = geminifusion_forward(a, b, layers[l], opts, false);
    rows.push_back(summarize_attention(out.cache, l));
    a = std::move(out.y1);
    b = std::move(out.y2);
  }
  return rows;
}

}  // namespace gmnf
