// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

// Scalar-loop reference implementations used as independent test oracles.
// They share nothing with the library kernels beyond the Tensor container.

#pragma once

#include <cmath>
#include <vector>

#include "gmnf/fusion.hpp"

namespace oracle {

using gmnf::Tensor;

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline std::vector<double> row_times(const std::vector<double>& x, const Tensor& w) {
  std::vector<double> out(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j)
    for (std::size_t t = 0; t < x.size(); ++t) out[j] += x[t] * w(t, j);
  return out;
}

inline std::vector<double> row_of(const Tensor& x, std::size_t i) {
  return std::vector<double>(x.row(i).begin(), x.row(i).end());
}

inline double score(const std::vector<double>& x, const gmnf::ExchangeConfig& c) {
  std::vector<double> h = row_times(x, c.w1);
  for (std::size_t j = 0; j < h.size(); ++j) h[j] = std::max(0.0, h[j] + c.b1[j]);
  double l = c.b2[0];
  for (std::size_t j = 0; j < h.size(); ++j) l += h[j] * c.w2(j, 0);
  return sig(l);
}

inline double relation(const std::vector<double>& a, const std::vector<double>& b,
                       const gmnf::RelationDiscriminator& phi) {
  std::vector<double> in = a;
  in.insert(in.end(), b.begin(), b.end());
  double l0, l1;
  if (phi.variant == gmnf::RelationVariant::conv1x1_softmax) {
    auto l = row_times(in, phi.w1);
    l0 = l[0] + phi.b1[0];
    l1 = l[1] + phi.b1[1];
  } else {
    auto h = row_times(in, phi.w1);
    for (std::size_t j = 0; j < h.size(); ++j) h[j] = std::max(0.0, h[j] + phi.b1[j]);
    auto l = row_times(h, phi.w2);
    l0 = l[0] + phi.b2[0];
    l1 = l[1] + phi.b2[1];
  }
  if (phi.variant == gmnf::RelationVariant::mlp2_sigmoid) return sig(l0);
  return std::exp(l0) / (std::exp(l0) + std::exp(l1));
}

// softmax(q k^T / sqrt(dh)) v per head over an explicit list of key/value rows.
inline std::vector<double> attend(const std::vector<double>& q,
                                  const std::vector<std::vector<double>>& keys,
                                  const std::vector<std::vector<double>>& values,
                                  std::size_t heads, std::vector<double>* weights = nullptr) {
  const std::size_t d = q.size(), dh = d / heads;
  std::vector<double> out(d, 0.0);
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<double> e(keys.size());
    double z = 0.0;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      double s = 0.0;
      for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) s += q[c] * keys[k][c];
      e[k] = std::exp(s / std::sqrt(static_cast<double>(dh)));
      z += e[k];
    }
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const double w = e[k] / z;
      if (weights) weights->push_back(w);
      for (std::size_t c = h * dh; c < (h + 1) * dh; ++c) out[c] += w * values[k][c];
    }
  }
  return out;
}

inline Tensor cross_direction(const Tensor& xs, const Tensor& xo, const gmnf::FusionParams& p) {
  const std::size_t n = xs.rows();
  std::vector<std::vector<double>> keys, values;
  for (std::size_t j = 0; j < n; ++j) {
    keys.push_back(row_times(row_of(xo, j), p.w_k));
    values.push_back(row_times(row_of(xo, j), p.w_v));
  }
  Tensor y = xs;
  for (std::size_t i = 0; i < n; ++i) {
    auto o = attend(row_times(row_of(xs, i), p.w_q), keys, values, p.heads);
    for (std::size_t c = 0; c < o.size(); ++c) y(i, c) += o[c];
  }
  return y;
}

inline Tensor gemini_direction(const Tensor& xs, const Tensor& xo, const gmnf::FusionParams& p,
                               const gmnf::GeminiOptions& opts, std::vector<double>* weights = nullptr) {
  Tensor y = xs;
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    auto a = row_of(xs, i), b = row_of(xo, i);
    auto ak = a, av = a;
    if (opts.noise)
      for (std::size_t c = 0; c < a.size(); ++c) {
        ak[c] += p.noise_k[c];
        av[c] += p.noise_v[c];
      }
    const double r = opts.relation ? relation(a, b, p.phi) : 1.0;
    auto kc = row_times(a, p.w_k);
    for (auto& v : kc) v *= r;
    std::vector<std::vector<double>> keys, values;
    if (opts.self_entry) {
      keys.push_back(row_times(ak, p.w_k));
      values.push_back(row_times(av, p.w_v));
    }
    keys.push_back(kc);
    values.push_back(row_times(b, p.w_v));
    auto o = attend(row_times(a, p.w_q), keys, values, p.heads, weights);
    for (std::size_t c = 0; c < o.size(); ++c) y(i, c) += o[c];
  }
  return y;
}

}  // namespace oracle
