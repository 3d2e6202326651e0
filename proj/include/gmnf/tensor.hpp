// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gmnf {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// The tensor owns its storage. Element count always equals the product of
/// the shape extents; a rank-0 tensor holds a single scalar.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor vector(std::initializer_list<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const { return data_.empty(); }

  /// Extents of a rank-2 tensor. Throws DimensionError for other ranks.
  std::size_t rows() const;
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool all_finite() const;
  void fill(double value);

  /// Bitwise equality of shape and every element (distinguishes -0.0 from
  /// 0.0 and compares NaN payloads).
  bool bit_equal(const Tensor& other) const;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor zeros_like(const Tensor& t);

// -- Multiply-accumulate accounting -----------------------------------------
//
// Every contraction in this library (matmul variants and dot) adds its
// multiply-accumulate count to a thread-local running total. Elementwise
// scaling, softmax exponentials and divisions are not counted.

std::uint64_t mac_total();

/// Counts the MACs performed on the current thread during its lifetime.
class MacScope {
 public:
  MacScope() : start_(mac_total()) {}
  std::uint64_t count() const { return mac_total() - start_; }

 private:
  std::uint64_t start_;
};

// -- Contractions ------------------------------------------------------------

/// C = A·B for A [m×k], B [k×n]. Summation runs left to right over k.
Tensor matmul(const Tensor& a, const Tensor& b);
/// C = Aᵀ·B for A [k×m], B [k×n].
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// C = A·Bᵀ for A [m×k], B [n×k].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
double dot(std::span<const double> a, std::span<const double> b);
/// y += alpha * x, counted as len(x) MACs.
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// -- Elementwise and structural ----------------------------------------------

Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& a, double alpha, const Tensor& b);
/// Adds a [cols] vector to every row of a rank-2 tensor.
Tensor add_row_vector(const Tensor& a, const Tensor& v);
/// Sums a rank-2 tensor over its rows, giving a [cols] vector.
Tensor column_sum(const Tensor& a);
double sum(const Tensor& a);

/// Columns [begin, begin + count) of a rank-2 tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
void set_cols(Tensor& dst, std::size_t begin, const Tensor& src);
/// Horizontal concatenation of two rank-2 tensors with equal row counts.
Tensor concat_cols(const Tensor& a, const Tensor& b);

/// Softmax over the last axis with max subtraction.
Tensor softmax_lastdim(const Tensor& t);

double relu(double x);
double sigmoid(double x);

double max_abs_diff(const Tensor& a, const Tensor& b);

/// Throws NumericError naming `stage` if any element is not finite.
void require_finite(const Tensor& t, std::string_view stage);
void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what);
void require_rank(const Tensor& t, std::size_t rank, std::string_view what);

}  // namespace gmnf
