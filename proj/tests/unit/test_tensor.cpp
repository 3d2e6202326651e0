// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "gmnf/errors.hpp"
#include "gmnf/rng.hpp"
#include "gmnf/tensor.hpp"

using namespace gmnf;

TEST_SUITE("tensor") {

TEST_CASE("construction checks element count") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t(1, 2) == 1.5);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK(Tensor({0, 4}).empty());
  CHECK(shape_string({2, 3}) == "[2x3]");
  CHECK_THROWS_AS(Tensor::vector({1, 2}).rows(), DimensionError);
}

TEST_CASE("matmul examples") {
  const Tensor i2 = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor b = Tensor::matrix({{3, 4}, {5, 6}});
  CHECK(matmul(i2, b).bit_equal(b));

  CHECK(matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{0}, {0}})).bit_equal(Tensor::matrix({{0}})));

  // 1*5 + 2*7 = 19, 1*6 + 2*8 = 22, 3*5 + 4*7 = 43, 3*6 + 4*8 = 50
  const Tensor c = matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5, 6}, {7, 8}}));
  CHECK(c.bit_equal(Tensor::matrix({{19, 22}, {43, 50}})));
}

TEST_CASE("matmul errors") {
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
  CHECK_THROWS_AS(matmul(Tensor({2}), Tensor({2, 3})), DimensionError);
  Tensor a({1, 2}, 1.0);
  a[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(matmul(a, Tensor({2, 1}, 1.0)), DomainError);
  a[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(matmul(a, Tensor({2, 1}, 1.0)), DomainError);
}

TEST_CASE("matmul against scalar loops, including transposed forms") {
  Rng rng(3);
  const Tensor a = rng_normal(rng, {4, 5}, 0, 1);
  const Tensor b = rng_normal(rng, {5, 3}, 0, 1);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < 5; ++t) s += a(i, t) * b(t, j);
      CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-14));
    }
  }
  CHECK(max_abs_diff(matmul_tn(transpose(a), b), c) < 1e-13);
  CHECK(max_abs_diff(matmul_nt(a, transpose(b)), c) < 1e-13);
}

TEST_CASE("property: matmul with identity is exact") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.index(6), n = 1 + rng.index(6);
    const Tensor a = rng_normal(rng, {m, n}, 0, 3);
    Tensor eye({n, n});
    for (std::size_t i = 0; i < n; ++i) eye(i, i) = 1.0;
    CHECK(matmul(a, eye).bit_equal(a));
  }
}

TEST_CASE("mac counter") {
  MacScope scope;
  matmul(Tensor({2, 3}), Tensor({3, 4}));
  CHECK(scope.count() == 24);
  matmul_tn(Tensor({3, 2}), Tensor({3, 4}));
  matmul_nt(Tensor({2, 3}), Tensor({4, 3}));
  CHECK(scope.count() == 72);
  const Tensor v = Tensor::vector({1, 2, 3});
  CHECK(dot(v.values(), v.values()) == 14.0);
  CHECK(scope.count() == 75);
  add(v, v);
  softmax_lastdim(v);
  CHECK(scope.count() == 75);
}

TEST_CASE("softmax examples") {
  const Tensor a = softmax_lastdim(Tensor::vector({0, 0}));
  CHECK(a[0] == 0.5);
  CHECK(a[1] == 0.5);
  for (double x : {-700.0, -3.0, 0.0, 2.5, 800.0}) {
    CHECK(softmax_lastdim(Tensor::vector({x}))[0] == 1.0);
  }
  const Tensor b = softmax_lastdim(Tensor::vector({std::log(1.0), std::log(3.0)}));
  CHECK(b[0] == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(b[1] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK_THROWS_AS(softmax_lastdim(Tensor({3, 0})), DimensionError);
}

TEST_CASE("property: softmax rows sum to one and are shift invariant") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 1 + rng.index(5), c = 1 + rng.index(9);
    const Tensor x = rng_uniform(rng, {r, c}, -50, 50);
    const Tensor p = softmax_lastdim(x);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < c; ++j) {
        CHECK(p(i, j) >= 0.0);
        s += p(i, j);
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
    const double shift = rng.uniform(-100, 100);
    Tensor xs = x;
    for (auto& v : xs.values()) v += shift;
    CHECK(max_abs_diff(softmax_lastdim(xs), p) < 1e-12);
  }
}

TEST_CASE("sigmoid is stable at the extremes") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(std::isfinite(sigmoid(-800.0)));
  CHECK(sigmoid(20.0) > 0.999);
}

TEST_CASE("structural helpers") {
  const Tensor a = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(transpose(a).bit_equal(Tensor::matrix({{1, 4}, {2, 5}, {3, 6}})));
  CHECK(column_sum(a).bit_equal(Tensor::vector({5, 7, 9})));
  CHECK(sum(a) == 21.0);
  CHECK(slice_cols(a, 1, 2).bit_equal(Tensor::matrix({{2, 3}, {5, 6}})));
  CHECK(concat_cols(slice_cols(a, 0, 1), slice_cols(a, 1, 2)).bit_equal(a));
  CHECK(add_row_vector(a, Tensor::vector({1, 1, 1})).bit_equal(add(a, Tensor({2, 3}, 1.0))));
  CHECK_THROWS_AS(add(a, Tensor({3, 2})), DimensionError);
  CHECK_THROWS_AS(add_row_vector(a, Tensor::vector({1, 1})), DimensionError);
}

TEST_CASE("require_finite names the stage") {
  Tensor t({2}, 0.0);
  t[1] = std::numeric_limits<double>::quiet_NaN();
  try {
    require_finite(t, "attention_logits");
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("attention_logits") != std::string::npos);
  }
}

}  // TEST_SUITE

TEST_SUITE("rng") {

TEST_CASE("rng_normal examples") {
  Rng rng(7);
  CHECK(rng_normal(rng, {4}, 0.0, 0.0).bit_equal(Tensor({4}, 0.0)));
  CHECK(rng_normal(rng, {3}, 2.5, 0.0).bit_equal(Tensor({3}, 2.5)));

  Rng a(7), b(7), c(8);
  const Tensor ta = rng_normal(a, {16}, 0, 1);
  CHECK(ta.bit_equal(rng_normal(b, {16}, 0, 1)));
  CHECK_FALSE(ta.bit_equal(rng_normal(c, {16}, 0, 1)));

  CHECK_THROWS_AS(rng_normal(rng, {2}, 0.0, -1.0), DomainError);
}

TEST_CASE("property: equal seeds give identical streams over a million draws") {
  Rng a(123456789), b(123456789);
  bool same = true;
  for (int i = 0; i < 1000000; ++i) same = same && (a.next_u64() == b.next_u64());
  CHECK(same);
  CHECK(a.draws() == 1000000);
}

TEST_CASE("derived streams are reproducible and distinct") {
  Rng base(42);
  Rng x = base.derive("data"), y = base.derive("data"), z = base.derive("init");
  const auto vx = x.next_u64();
  CHECK(vx == y.next_u64());
  CHECK(vx != z.next_u64());
}

TEST_CASE("uniform and index ranges") {
  Rng rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = rng.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(rng.index(7) < 7);
  }
  auto perm = rng.permutation(10);
  std::sort(perm.begin(), perm.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(perm[i] == i);
}

}  // TEST_SUITE
