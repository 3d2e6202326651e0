// Copyright 2026 The gmnf Authors
// SPDX-License-Identifier: Apache-2.0

#include "gmnf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "gmnf/errors.hpp"

namespace gmnf {

namespace {

thread_local std::uint64_t g_macs = 0;

void require_finite_input(const Tensor& t, const char* op) {
  if (!t.all_finite()) {
    throw DomainError(std::string(op) + ": non-finite input");
  }
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got shape " +
                         shape_string(t.shape()));
  }
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("rows() on non-matrix " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("cols() on non-matrix " + shape_string(shape_));
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return {data_.data() + r * c, c};
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return {data_.data() + r * c, c};
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::bit_equal(const Tensor& other) const {
  return shape_ == other.shape_ && data_.size() == other.data_.size() &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape(), 0.0); }

std::uint64_t mac_total() { return g_macs; }

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_string(a.shape()) +
                         " · " + shape_string(b.shape()));
  }
  require_finite_input(a, "matmul");
  require_finite_input(b, "matmul");
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t t = 0; t < k; ++t) {
      const double av = pa[i * k + t];
      const double* brow = pb + t * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  g_macs += static_cast<std::uint64_t>(m) * k * n;
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul_tn: inner dimensions disagree " + shape_string(a.shape()) +
                         "ᵀ · " + shape_string(b.shape()));
  }
  require_finite_input(a, "matmul_tn");
  require_finite_input(b, "matmul_tn");
  Tensor c({m, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t t = 0; t < k; ++t) {
    const double* brow = pb + t * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = pa[t * m + i];
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  g_macs += static_cast<std::uint64_t>(m) * k * n;
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree " + shape_string(a.shape()) +
                         " · " + shape_string(b.shape()) + "ᵀ");
  }
  require_finite_input(a, "matmul_nt");
  require_finite_input(b, "matmul_nt");
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += arow[t] * brow[t];
      c(i, j) = acc;
    }
  }
  g_macs += static_cast<std::uint64_t>(m) * k * n;
  return c;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  g_macs += a.size();
  return acc;
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) {
    throw DimensionError("axpy: lengths " + std::to_string(x.size()) + " and " +
                         std::to_string(y.size()) + " differ");
  }
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
  g_macs += x.size();
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t(j, i) = a(i, j);
  return t;
}

void require_same_shape(const Tensor& a, const Tensor& b, std::string_view what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ");
  }
}

void require_rank(const Tensor& t, std::size_t rank, std::string_view what) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         ", got shape " + shape_string(t.shape()));
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] += b[i];
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] -= b[i];
  return c;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (auto& v : c.values()) v *= s;
  return c;
}

void add_inplace(Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

void axpy_inplace(Tensor& a, double alpha, const Tensor& b) {
  require_same_shape(a, b, "axpy_inplace");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += alpha * b[i];
}

Tensor add_row_vector(const Tensor& a, const Tensor& v) {
  require_matrix(a, "add_row_vector");
  if (v.rank() != 1 || v.size() != a.cols()) {
    throw DimensionError("add_row_vector: vector " + shape_string(v.shape()) +
                         " does not match columns of " + shape_string(a.shape()));
  }
  Tensor c = a;
  const std::size_t n = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) c(i, j) += v[j];
  return c;
}

Tensor column_sum(const Tensor& a) {
  require_matrix(a, "column_sum");
  Tensor s({a.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) s[j] += a(i, j);
  return s;
}

double sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return s;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_matrix(a, "slice_cols");
  if (begin + count > a.cols()) {
    throw DimensionError("slice_cols: range exceeds " + shape_string(a.shape()));
  }
  Tensor s({a.rows(), count});
  for (std::size_t i = 0; i < a.rows(); ++i)
    std::copy_n(a.data() + i * a.cols() + begin, count, s.data() + i * count);
  return s;
}

void set_cols(Tensor& dst, std::size_t begin, const Tensor& src) {
  require_matrix(dst, "set_cols");
  require_matrix(src, "set_cols");
  if (src.rows() != dst.rows() || begin + src.cols() > dst.cols()) {
    throw DimensionError("set_cols: " + shape_string(src.shape()) + " does not fit " +
                         shape_string(dst.shape()));
  }
  for (std::size_t i = 0; i < src.rows(); ++i)
    std::copy_n(src.data() + i * src.cols(), src.cols(), dst.data() + i * dst.cols() + begin);
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  require_matrix(a, "concat_cols");
  require_matrix(b, "concat_cols");
  if (a.rows() != b.rows()) {
    throw DimensionError("concat_cols: row counts differ " + shape_string(a.shape()) + ", " +
                         shape_string(b.shape()));
  }
  Tensor c({a.rows(), a.cols() + b.cols()});
  set_cols(c, 0, a);
  set_cols(c, a.cols(), b);
  return c;
}

Tensor softmax_lastdim(const Tensor& t) {
  if (t.rank() == 0 || t.shape().back() == 0) {
    throw DimensionError("softmax_lastdim: empty last dimension in " + shape_string(t.shape()));
  }
  require_finite_input(t, "softmax_lastdim");
  const std::size_t n = t.shape().back();
  Tensor out = t;
  for (std::size_t base = 0; base < out.size(); base += n) {
    double* x = out.data() + base;
    const double mx = *std::max_element(x, x + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      x[j] = std::exp(x[j] - mx);
      z += x[j];
    }
    for (std::size_t j = 0; j < n; ++j) x[j] /= z;
  }
  return out;
}

double relu(double x) { return x > 0.0 ? x : 0.0; }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void require_finite(const Tensor& t, std::string_view stage) {
  if (!t.all_finite()) {
    throw NumericError("non-finite value at stage '" + std::string(stage) + "'");
  }
}

}  // namespace gmnf
