// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/rng.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "gmnf/errors.hpp"

namespace gmnf {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

std::uint64_t Rng::next_u64() {
  ++draws_;
  return engine_();
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal(double mean, double stddev) {
  if (!(stddev >= 0.0)) {
    throw DomainError("normal: stddev must be >= 0, got " + std::to_string(stddev));
  }
  // Route draws through next_u64 so the counter tracks engine usage.
  struct Counting {
    using result_type = std::uint64_t;
    Rng* self;
    static constexpr result_type min() { return std::mt19937_64::min(); }
    static constexpr result_type max() { return std::mt19937_64::max(); }
    result_type operator()() { return self->next_u64(); }
  } gen{this};
  const double z = normal_(gen);
  return mean + stddev * z;
}

std::size_t Rng::index(std::size_t n) {
  if (n == 0) throw DomainError("index: empty range");
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return static_cast<std::size_t>(x % n);
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[index(i)]);
  return p;
}

Rng Rng::derive(std::string_view label) const {
  return Rng(splitmix64(seed_ ^ fnv1a64(label)));
}

Tensor rng_normal(Rng& rng, const Shape& shape, double mean, double stddev) {
  if (!(stddev >= 0.0)) {
    throw DomainError("rng_normal: stddev must be >= 0, got " + std::to_string(stddev));
  }
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.normal(mean, stddev);
  return t;
}

Tensor rng_uniform(Rng& rng, const Shape& shape, double lo, double hi) {
  Tensor t(shape);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace gmnf
