// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

#include "gmnf/tensor.hpp"

namespace gmnf {

/// Seeded pseudo-random source. Equal seeds and equal call sequences give
/// bit-identical streams. Single owner; not thread-safe.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  /// Number of 64-bit words drawn so far.
  std::uint64_t draws() const { return draws_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  double normal(double mean, double stddev);
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);
  /// Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);

  /// Independent stream keyed by `label`; does not advance this generator.
  Rng derive(std::string_view label) const;

 private:
  std::uint64_t seed_;
  std::uint64_t draws_ = 0;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t fnv1a64(std::string_view bytes);

/// Tensor of i.i.d. normal samples. stddev == 0 gives a constant tensor.
Tensor rng_normal(Rng& rng, const Shape& shape, double mean, double stddev);
Tensor rng_uniform(Rng& rng, const Shape& shape, double lo, double hi);

}  // namespace gmnf
