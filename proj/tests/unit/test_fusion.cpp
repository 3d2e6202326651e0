// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>
#include <set>

#include "gmnf/errors.hpp"
#include "gmnf/exchange.hpp"
#include "gmnf/fusion.hpp"
#include "gmnf/gradcheck.hpp"
#include "gmnf/relation.hpp"
#include "oracles.hpp"

using namespace gmnf;

namespace {

Tensor permute_rows(const Tensor& x, const std::vector<std::size_t>& perm) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < perm.size(); ++i)
    std::copy(x.row(perm[i]).begin(), x.row(perm[i]).end(), out.row(i).begin());
  return out;
}

Tensor permute_vec(const Tensor& v, const std::vector<std::size_t>& perm) {
  Tensor out({perm.size()});
  for (std::size_t i = 0; i < perm.size(); ++i) out[i] = v[perm[i]];
  return out;
}

void zero_value_path(FusionParams& p) {
  p.w_v.fill(0.0);
  p.noise_v.fill(0.0);
}

const GeminiOptions kAllOff{false, false, false};

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("score_predict examples") {
  Rng rng(1);
  const Tensor x = rng_normal(rng, {5, 3}, 0, 1);
  ExchangeConfig zero = ExchangeConfig::zeros(3, 0.02);
  const Tensor half = score_predict(x, zero);
  for (double s : half.values()) CHECK(s == 0.5);

  zero.b2[0] = 20.0;
  const Tensor saturated = score_predict(x, zero);
  for (double s : saturated.values()) CHECK(s > 0.999);

  ExchangeConfig cfg = ExchangeConfig::init(3, 0.02, rng);
  cfg.b1 = rng_normal(rng, {3}, 0, 0.1);
  const Tensor x2 = rng_normal(rng, {2, 3}, 0, 1);
  const Tensor s = score_predict(x2, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(s[i] == doctest::Approx(oracle::score(oracle::row_of(x2, i), cfg)).epsilon(1e-13));
    CHECK((s[i] > 0.0 && s[i] < 1.0));
  }
  CHECK_THROWS_AS(score_predict(Tensor({2, 4}), cfg), DimensionError);
}

TEST_CASE("token_exchange examples") {
  const Tensor x1 = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor x2 = Tensor::matrix({{5, 6}, {7, 8}});
  auto out = token_exchange(x1, x2, Tensor::vector({0.5, 0.01}), Tensor::vector({0.9, 0.9}), 0.02);
  CHECK(out.y1.bit_equal(Tensor::matrix({{1, 2}, {7, 8}})));
  CHECK(out.y2.bit_equal(Tensor::matrix({{5, 6}, {7, 8}})));
  CHECK(out.cache.exchanged1 == std::vector<std::uint8_t>{0, 1});
  CHECK(out.cache.exchanged2 == std::vector<std::uint8_t>{0, 0});

  const Tensor s = Tensor::vector({0.3, 0.999});
  auto id = token_exchange(x1, x2, s, s, 0.0);
  CHECK(id.y1.bit_equal(x1));
  CHECK(id.y2.bit_equal(x2));
  auto swap = token_exchange(x1, x2, s, s, 1.0);
  CHECK(swap.y1.bit_equal(x2));
  CHECK(swap.y2.bit_equal(x1));

  CHECK_THROWS_AS(token_exchange(x1, x2, s, s, -0.1), DomainError);
  CHECK_THROWS_AS(token_exchange(x1, x2, s, s, 1.5), DomainError);
  CHECK_THROWS_AS(token_exchange(x1, x2, s, s, std::nan("")), DomainError);
  CHECK_THROWS_AS(token_exchange(x1, Tensor({3, 2}), s, s, 0.5), DimensionError);
}

TEST_CASE("token_exchange backward routes to the selected source") {
  const Tensor x1 = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor x2 = Tensor::matrix({{5, 6}, {7, 8}});
  auto out = token_exchange(x1, x2, Tensor::vector({0.5, 0.01}), Tensor::vector({0.9, 0.01}), 0.02);
  const Tensor dy1 = Tensor::matrix({{1, 1}, {2, 2}});
  const Tensor dy2 = Tensor::matrix({{10, 10}, {20, 20}});
  auto g = fusion_backward(out.cache, dy1, dy2);
  // Token 1 is swapped in both directions.
  CHECK(g.dx1.bit_equal(Tensor::matrix({{1, 1}, {20, 20}})));
  CHECK(g.dx2.bit_equal(Tensor::matrix({{10, 10}, {2, 2}})));
}

TEST_CASE("cross_attention examples") {
  Rng rng(2);
  FusionParams p = FusionParams::init(4, 2, rng);
  const Tensor x1 = rng_normal(rng, {5, 4}, 0, 1), x2 = rng_normal(rng, {5, 4}, 0, 1);

  FusionParams pz = p;
  zero_value_path(pz);
  auto z = cross_attention(x1, x2, pz);
  CHECK(z.y1.bit_equal(x1));
  CHECK(z.y2.bit_equal(x2));

  const Tensor a1 = rng_normal(rng, {1, 4}, 0, 1), a2 = rng_normal(rng, {1, 4}, 0, 1);
  auto full = cross_attention(a1, a2, p);
  auto pix = pixelwise_cross_attention(a1, a2, p);
  CHECK(max_abs_diff(full.y1, pix.y1) <= 1e-12);
  CHECK(max_abs_diff(full.y2, pix.y2) <= 1e-12);

  FusionParams small = FusionParams::zeros(2, 1);
  small.w_q = Tensor::matrix({{0.3, -0.2}, {0.1, 0.4}});
  small.w_k = Tensor::matrix({{-0.5, 0.2}, {0.25, 0.1}});
  small.w_v = Tensor::matrix({{0.6, 0.3}, {-0.1, 0.2}});
  const Tensor b1 = Tensor::matrix({{1.0, -0.5}, {0.2, 0.7}});
  const Tensor b2 = Tensor::matrix({{-0.3, 0.8}, {0.9, 0.1}});
  auto out = cross_attention(b1, b2, small);
  CHECK(max_abs_diff(out.y1, oracle::cross_direction(b1, b2, small)) < 1e-14);
  CHECK(max_abs_diff(out.y2, oracle::cross_direction(b2, b1, small)) < 1e-14);
}

TEST_CASE("cross_attention against the loop oracle across row blocks") {
  Rng rng(21);
  FusionParams p = FusionParams::init(8, 2, rng);
  const Tensor x1 = rng_normal(rng, {300, 8}, 0, 1), x2 = rng_normal(rng, {300, 8}, 0, 1);
  auto out = cross_attention(x1, x2, p, false);
  CHECK(max_abs_diff(out.y1, oracle::cross_direction(x1, x2, p)) < 1e-12);
  CHECK(max_abs_diff(out.y2, oracle::cross_direction(x2, x1, p)) < 1e-12);
  CHECK_THROWS_AS(fusion_backward(out.cache, x1, x2), StateError);
}

TEST_CASE("cross_attention errors") {
  Rng rng(3);
  FusionParams p = FusionParams::init(4, 2, rng);
  CHECK_THROWS_AS(cross_attention(Tensor({2, 3}), Tensor({2, 3}), p), DimensionError);
  CHECK_THROWS_AS(cross_attention(Tensor({2, 4}), Tensor({3, 4}), p), DimensionError);
  CHECK_THROWS_AS(cross_attention(Tensor({0, 4}), Tensor({0, 4}), p), DimensionError);
  Tensor big({2, 4}, 1.0);
  p.w_q.fill(1e200);
  p.w_k.fill(1e200);
  CHECK_THROWS_AS(cross_attention(big, big, p), NumericError);
  CHECK_THROWS_AS(FusionParams::zeros(6, 4), ConfigError);
}

TEST_CASE("pixelwise examples") {
  FusionParams p = FusionParams::zeros(1, 1);
  p.w_q = Tensor::matrix({{1}});
  p.w_k = Tensor::matrix({{1}});
  p.w_v = Tensor::matrix({{1}});
  auto out = pixelwise_cross_attention(Tensor::matrix({{0.3}}), Tensor::matrix({{0.5}}), p);
  CHECK(out.y1(0, 0) == doctest::Approx(0.8).epsilon(1e-15));

  Rng rng(4);
  FusionParams q = FusionParams::init(4, 2, rng);
  const Tensor x1 = rng_normal(rng, {5, 4}, 0, 1), x2 = rng_normal(rng, {5, 4}, 0, 1);
  auto r = pixelwise_cross_attention(x1, x2, q);
  CHECK(max_abs_diff(r.y1, add(matmul(x2, q.w_v), x1)) <= 1e-12);
  CHECK(max_abs_diff(r.y2, add(matmul(x1, q.w_v), x2)) <= 1e-12);
  zero_value_path(q);
  auto z = pixelwise_cross_attention(x1, x2, q);
  CHECK(z.y1.bit_equal(x1));
  CHECK(z.y2.bit_equal(x2));
}

TEST_CASE("relation_score examples") {
  for (auto variant : {RelationVariant::mlp2_softmax, RelationVariant::mlp2_sigmoid,
                       RelationVariant::conv1x1_softmax}) {
    CAPTURE(to_string(variant));
    const auto phi = RelationDiscriminator::zeros(variant, 3, 3);
    Rng rng(5);
    const Tensor a = rng_normal(rng, {4, 3}, 0, 1), b = rng_normal(rng, {4, 3}, 0, 1);
    const Tensor scores = relation_score(a, b, phi);
    for (double s : scores.values()) CHECK(s == 0.5);
  }

  // Tied output columns give equal logits (L, L).
  Rng rng(6);
  auto tied = RelationDiscriminator::init(RelationVariant::mlp2_softmax, 2, 2, rng);
  for (std::size_t r = 0; r < 2; ++r) tied.w2(r, 1) = tied.w2(r, 0);
  tied.b2 = Tensor::vector({0.7, 0.7});
  const Tensor tied_scores =
      relation_score(rng_normal(rng, {3, 2}, 0, 1), rng_normal(rng, {3, 2}, 0, 1), tied);
  for (double s : tied_scores.values())
    CHECK(s == doctest::Approx(0.5).epsilon(1e-15));

  for (auto variant : {RelationVariant::mlp2_softmax, RelationVariant::mlp2_sigmoid,
                       RelationVariant::conv1x1_softmax}) {
    auto phi = RelationDiscriminator::init(variant, 2, 2, rng);
    for (auto* b : {&phi.b1, &phi.b2}) *b = rng_normal(rng, b->shape(), 0, 0.1);
    const Tensor a = Tensor::matrix({{0.4, -1.1}}), b = Tensor::matrix({{0.9, 0.2}});
    const double s = relation_score(a, b, phi)[0];
    CHECK(s == doctest::Approx(oracle::relation(oracle::row_of(a, 0), oracle::row_of(b, 0), phi)).epsilon(1e-14));
    CHECK((s > 0.0 && s < 1.0));
  }
  CHECK_THROWS_AS(parse_relation_variant("mlp3"), ConfigError);
  CHECK_THROWS_AS(relation_score(Tensor({1, 3}), Tensor({1, 3}), tied), DimensionError);
}

TEST_CASE("geminifusion matches the loop oracle for every option combination") {
  Rng rng(7);
  for (auto variant : {RelationVariant::mlp2_softmax, RelationVariant::mlp2_sigmoid,
                       RelationVariant::conv1x1_softmax}) {
    FusionParams p = FusionParams::init(6, 2, rng, variant);
    p.noise_k = rng_normal(rng, {6}, 0, 0.5);
    p.noise_v = rng_normal(rng, {6}, 0, 0.5);
    const Tensor x1 = rng_normal(rng, {4, 6}, 0, 1), x2 = rng_normal(rng, {4, 6}, 0, 1);
    for (int mask = 0; mask < 8; ++mask) {
      const GeminiOptions o{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0};
      auto out = geminifusion_forward(x1, x2, p, o);
      CHECK(max_abs_diff(out.y1, oracle::gemini_direction(x1, x2, p, o)) < 1e-13);
      CHECK(max_abs_diff(out.y2, oracle::gemini_direction(x2, x1, p, o)) < 1e-13);
    }
  }
}

TEST_CASE("geminifusion examples") {
  Rng rng(8);
  FusionParams p = FusionParams::init(4, 2, rng);
  const Tensor x1 = rng_normal(rng, {5, 4}, 0, 1), x2 = rng_normal(rng, {5, 4}, 0, 1);

  auto degenerate = geminifusion_forward(x1, x2, p, kAllOff);
  auto pix = pixelwise_cross_attention(x1, x2, p);
  CHECK(max_abs_diff(degenerate.y1, pix.y1) <= 1e-12);
  CHECK(max_abs_diff(degenerate.y2, pix.y2) <= 1e-12);

  FusionParams pz = p;
  zero_value_path(pz);
  auto z = geminifusion_forward(x1, x2, pz);
  CHECK(z.y1.bit_equal(x1));
  CHECK(z.y2.bit_equal(x2));

  auto ab = geminifusion_forward(x1, x2, p);
  auto ba = geminifusion_forward(x2, x1, p);
  CHECK(ab.y1.bit_equal(ba.y2));
  CHECK(ab.y2.bit_equal(ba.y1));

  Tensor bad = x1;
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  try {
    geminifusion_forward(bad, x2, p);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("input x1") != std::string::npos);
  }
  FusionParams huge = p;
  huge.w_q.fill(1e200);
  huge.w_k.fill(1e200);
  try {
    geminifusion_forward(x1, x2, huge);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("attention_logits") != std::string::npos);
  }
}

TEST_CASE("property: degeneracy chain on random inputs") {
  Rng rng(9);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t h = 1 + rng.index(2), d = h * (1 + rng.index(4)), n = 1 + rng.index(6);
    FusionParams p = FusionParams::init(d, h, rng);
    const Tensor x1 = rng_normal(rng, {n, d}, 0, 1), x2 = rng_normal(rng, {n, d}, 0, 1);
    auto g = geminifusion_forward(x1, x2, p, kAllOff);
    auto px = pixelwise_cross_attention(x1, x2, p);
    const Tensor closed1 = add(matmul(x2, p.w_v), x1);
    const Tensor closed2 = add(matmul(x1, p.w_v), x2);
    CHECK(max_abs_diff(g.y1, px.y1) <= 1e-12);
    CHECK(max_abs_diff(px.y1, closed1) <= 1e-12);
    CHECK(max_abs_diff(g.y2, closed2) <= 1e-12);
  }
}

TEST_CASE("property: residual identity for every mechanism") {
  Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.index(5);
    FusionParams p = FusionParams::init(4, 2, rng);
    zero_value_path(p);
    const Tensor x1 = rng_normal(rng, {n, 4}, 0, 1), x2 = rng_normal(rng, {n, 4}, 0, 1);
    for (const FusionOutput& out :
         {cross_attention(x1, x2, p), pixelwise_cross_attention(x1, x2, p), geminifusion_forward(x1, x2, p)}) {
      CHECK(out.y1.bit_equal(x1));
      CHECK(out.y2.bit_equal(x2));
    }
  }
}

TEST_CASE("property: permutation equivariance") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 2 + rng.index(6);
    FusionParams p = FusionParams::init(4, 2, rng);
    const Tensor x1 = rng_normal(rng, {n, 4}, 0, 1), x2 = rng_normal(rng, {n, 4}, 0, 1);
    const auto perm = rng.permutation(n);
    const Tensor px1 = permute_rows(x1, perm), px2 = permute_rows(x2, perm);

    auto g = geminifusion_forward(x1, x2, p), gp = geminifusion_forward(px1, px2, p);
    CHECK(gp.y1.bit_equal(permute_rows(g.y1, perm)));
    CHECK(gp.y2.bit_equal(permute_rows(g.y2, perm)));
    auto q = pixelwise_cross_attention(x1, x2, p), qp = pixelwise_cross_attention(px1, px2, p);
    CHECK(qp.y1.bit_equal(permute_rows(q.y1, perm)));
    auto c = cross_attention(x1, x2, p), cp = cross_attention(px1, px2, p);
    CHECK(max_abs_diff(cp.y1, permute_rows(c.y1, perm)) <= 1e-12);
    CHECK(max_abs_diff(cp.y2, permute_rows(c.y2, perm)) <= 1e-12);

    const Tensor s1 = rng_uniform(rng, {n}, 0, 1), s2 = rng_uniform(rng, {n}, 0, 1);
    auto e = token_exchange(x1, x2, s1, s2, 0.5);
    auto ep = token_exchange(px1, px2, permute_vec(s1, perm), permute_vec(s2, perm), 0.5);
    CHECK(ep.y1.bit_equal(permute_rows(e.y1, perm)));
    CHECK(ep.y2.bit_equal(permute_rows(e.y2, perm)));
  }
}

TEST_CASE("property: modality swap symmetry is bit exact") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t h = 1 + rng.index(2), d = 2 * h, n = 1 + rng.index(5);
    FusionParams p = FusionParams::init(d, h, rng, static_cast<RelationVariant>(trial % 3));
    const GeminiOptions o{trial % 2 == 0, trial % 4 < 2, trial % 5 != 0};
    const Tensor x1 = rng_normal(rng, {n, d}, 0, 1), x2 = rng_normal(rng, {n, d}, 0, 1);
    auto ab = geminifusion_forward(x1, x2, p, o), ba = geminifusion_forward(x2, x1, p, o);
    CHECK(ab.y1.bit_equal(ba.y2));
    CHECK(ab.y2.bit_equal(ba.y1));
  }
}

TEST_CASE("property: attention weights form a two point distribution") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    FusionParams p = FusionParams::init(8, 2, rng);
    const Tensor x1 = rng_normal(rng, {6, 8}, 0, 2), x2 = rng_normal(rng, {6, 8}, 0, 2);
    auto out = geminifusion_forward(x1, x2, p);
    for (int dir = 0; dir < 2; ++dir) {
      const Tensor w = attention_weights(out.cache, dir);
      CHECK(w.shape() == Shape{6, 2, 2});
      for (std::size_t i = 0; i < w.size(); i += 2) {
        CHECK(w[i] >= 0.0);
        CHECK(w[i + 1] >= 0.0);
        CHECK(std::abs(w[i] + w[i + 1] - 1.0) <= 1e-12);
      }
    }
  }
}

TEST_CASE("fusion_backward examples") {
  Rng rng(14);
  FusionParams p = FusionParams::init(4, 2, rng);
  const Tensor x1 = rng_normal(rng, {3, 4}, 0, 1), x2 = rng_normal(rng, {3, 4}, 0, 1);
  const Tensor zero({3, 4});
  for (const FusionOutput& out :
       {cross_attention(x1, x2, p), pixelwise_cross_attention(x1, x2, p), geminifusion_forward(x1, x2, p)}) {
    auto g = fusion_backward(out.cache, zero, zero);
    CHECK(g.dx1.bit_equal(zero));
    CHECK(g.dx2.bit_equal(zero));
    for_each_tensor(g.params, [](std::string_view, const Tensor& t) {
      for (double v : t.values()) CHECK(v == 0.0);
    });
  }

  FusionParams z = FusionParams::zeros(4, 2);
  const Tensor dy1 = rng_normal(rng, {3, 4}, 0, 1), dy2 = rng_normal(rng, {3, 4}, 0, 1);
  for (const FusionOutput& out :
       {cross_attention(x1, x2, z), pixelwise_cross_attention(x1, x2, z), geminifusion_forward(x1, x2, z)}) {
    auto g = fusion_backward(out.cache, dy1, dy2);
    CHECK(max_abs_diff(g.dx1, dy1) == 0.0);
    CHECK(max_abs_diff(g.dx2, dy2) == 0.0);
  }

  auto out = geminifusion_forward(x1, x2, p);
  CHECK_THROWS_AS(fusion_backward(out.cache, Tensor({2, 4}), Tensor({2, 4})), StateError);
  auto dropped = geminifusion_forward(x1, x2, p, {}, false);
  CHECK_THROWS_AS(fusion_backward(dropped.cache, dy1, dy2), StateError);
}

TEST_CASE("fusion_backward matches central differences at N=3, d=4, h=2") {
  Rng rng(15);
  FusionParams p = FusionParams::init(4, 2, rng);
  p.noise_k = rng_normal(rng, {4}, 0, 0.5);
  p.noise_v = rng_normal(rng, {4}, 0, 0.5);
  Tensor x1 = rng_normal(rng, {3, 4}, 0, 1), x2 = rng_normal(rng, {3, 4}, 0, 1);
  const Tensor g1 = rng_normal(rng, {3, 4}, 0, 1), g2 = rng_normal(rng, {3, 4}, 0, 1);
  auto loss = [&]() {
    auto o = geminifusion_forward(x1, x2, p);
    double s = 0;
    for (std::size_t i = 0; i < o.y1.size(); ++i) s += g1[i] * o.y1[i] + g2[i] * o.y2[i];
    return s;
  };
  auto fd = [&](Tensor& t, std::size_t i) {
    const double keep = t[i];
    t[i] = keep + 1e-5;
    const double up = loss();
    t[i] = keep - 1e-5;
    const double down = loss();
    t[i] = keep;
    return (up - down) / 2e-5;
  };
  auto out = geminifusion_forward(x1, x2, p);
  auto g = fusion_backward(out.cache, g1, g2);
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-2}); };
  for (std::size_t i = 0; i < x1.size(); ++i) {
    CHECK(rel(g.dx1[i], fd(x1, i)) < 1e-6);
    CHECK(rel(g.dx2[i], fd(x2, i)) < 1e-6);
  }
  std::vector<Tensor*> analytic;
  for_each_tensor(g.params, [&](std::string_view, Tensor& t) { analytic.push_back(&t); });
  std::size_t k = 0;
  for_each_tensor(p, [&](std::string_view name, Tensor& t) {
    CAPTURE(name);
    const Tensor& a = *analytic[k++];
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(rel(a[i], fd(t, i)) < 1e-6);
  });
}

TEST_CASE("gradient suite passes over 24 random instances") {
  GradCheckOptions opts;
  opts.seed = 99;
  const auto report = run_gradcheck(opts);
  CHECK(report.instances == 24);
  CHECK(report.passed());
  CHECK(report.worst().max_rel_error < 1e-6);
  std::set<std::string> ops;
  for (const auto& e : report.entries) ops.insert(e.op);
  CHECK(ops == std::set<std::string>{"cross_attention", "exchange", "geminifusion", "pixelwise"});

  opts.inject_fault = "pixelwise";
  const auto bad = run_gradcheck(opts);
  CHECK_FALSE(bad.passed());
  CHECK(bad.worst().op == "pixelwise");

  opts.instances = 0;
  CHECK_THROWS_AS(run_gradcheck(opts), ConfigError);
}

TEST_CASE("attention_trace examples") {
  Rng rng(16);
  const Tensor x = rng_normal(rng, {5, 4}, 0, 1);
  std::vector<FusionParams> layers;
  for (int l = 0; l < 3; ++l) {
    FusionParams p = FusionParams::init(4, 2, rng, RelationVariant::conv1x1_softmax);
    p.phi.w1.fill(0.0);
    p.phi.b1 = Tensor::vector({40.0, -40.0});  // phi == 1 in double precision
    zero_value_path(p);  // keeps X1 == X2 at every layer
    layers.push_back(p);
  }
  for (const auto& row : attention_trace(x, x, layers, GeminiOptions{false, true, true})) {
    CHECK(row.self_weight == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(row.cross_weight == doctest::Approx(0.5).epsilon(1e-15));
  }
  for (const auto& row : attention_trace(x, rng_normal(rng, {5, 4}, 0, 1), layers, GeminiOptions{true, true, false})) {
    CHECK(row.self_weight == 0.0);
    CHECK(row.cross_weight == 1.0);
  }
  CHECK_THROWS_AS(attention_trace(x, x, std::span<const FusionParams>{}), ConfigError);
}

TEST_CASE("attention_trace reproduces recomputation from exposed weights") {
  Rng rng(17);
  std::vector<FusionParams> layers;
  for (int l = 0; l < 4; ++l) layers.push_back(FusionParams::init(8, 2, rng));
  Tensor a = rng_normal(rng, {6, 8}, 0, 1), b = rng_normal(rng, {6, 8}, 0, 1);
  const auto rows = attention_trace(a, b, layers);
  REQUIRE(rows.size() == 4);
  for (std::size_t l = 0; l < 4; ++l) {
    auto out = geminifusion_forward(a, b, layers[l]);
    double self = 0, cross = 0;
    std::size_t count = 0;
    for (int dir = 0; dir < 2; ++dir) {
      std::vector<double> w;
      oracle::gemini_direction(dir == 0 ? a : b, dir == 0 ? b : a, layers[l], {}, &w);
      for (std::size_t i = 0; i < w.size(); i += 2, ++count) {
        self += w[i];
        cross += w[i + 1];
      }
    }
    CHECK(rows[l].layer == l);
    CHECK(rows[l].self_weight == doctest::Approx(self / count).epsilon(1e-13));
    CHECK(rows[l].cross_weight == doctest::Approx(cross / count).epsilon(1e-13));
    CHECK(std::abs(rows[l].self_weight + rows[l].cross_weight - 1.0) <= 1e-12);
    a = out.y1;
    b = out.y2;
  }
}

}  // TEST_SUITE
