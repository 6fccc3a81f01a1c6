// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#include "qrep/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "qrep/error.hpp"

namespace qrep {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected rank-2 tensor, got " + shape_to_string(t.shape()));
  }
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_to_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

template <typename T>
std::size_t BasicTensor<T>::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_to_string(shape_));
  }
  return shape_[axis];
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
  return BasicTensor<T>(std::move(shape), data_);
}

template class BasicTensor<double>;
template class BasicTensor<std::int32_t>;

void require_finite(const Tensor& t, const std::string& what) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      throw DomainError(what + ": non-finite value at element " + std::to_string(i));
    }
  }
}

Tensor identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

Tensor vector_tensor(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Tensor out({m, n});
  // i-k-j order keeps the per-output reduction sequential in k.
  for (std::size_t i = 0; i < m; ++i) {
    double* row = &out.at(i, 0);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a.at(i, p);
      const double* brow = &b.at(p, 0);
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  Tensor out({a.dim(1), a.dim(0)});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

Tensor add_row_vector(const Tensor& a, const Tensor& row) {
  require_rank2(a, "add_row_vector");
  if (row.size() != a.dim(1)) {
    throw DimensionError("add_row_vector: row of " + std::to_string(row.size()) + " vs " +
                         shape_to_string(a.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < a.dim(0); ++i)
    for (std::size_t j = 0; j < a.dim(1); ++j) out.at(i, j) += row[j];
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor scale(const Tensor& a, double factor) {
  Tensor out = a;
  for (double& v : out.data()) v *= factor;
  return out;
}

Tensor slice_columns(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2(a, "slice_columns");
  if (count == 0 || begin + count > a.dim(1)) {
    throw DimensionError("slice_columns: range out of bounds for " + shape_to_string(a.shape()));
  }
  Tensor out({a.dim(0), count});
  for (std::size_t i = 0; i < a.dim(0); ++i)
    std::copy_n(&a.at(i, begin), count, &out.at(i, 0));
  return out;
}

Tensor concat_columns(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_columns: no inputs");
  const std::size_t rows = parts[0].dim(0);
  std::size_t cols = 0;
  for (const Tensor& p : parts) {
    require_rank2(p, "concat_columns");
    if (p.dim(0) != rows) throw DimensionError("concat_columns: row counts differ");
    cols += p.dim(1);
  }
  Tensor out({rows, cols});
  std::size_t offset = 0;
  for (const Tensor& p : parts) {
    for (std::size_t i = 0; i < rows; ++i) std::copy_n(&p.at(i, 0), p.dim(1), &out.at(i, offset));
    offset += p.dim(1);
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t rows = 0;
  std::vector<double> data;
  for (const Tensor& p : parts) {
    if (!std::equal(tail.begin(), tail.end(), p.shape().begin() + 1, p.shape().end())) {
      throw DimensionError("concat_rows: trailing shapes differ: " + shape_to_string(parts[0].shape()) +
                           " vs " + shape_to_string(p.shape()));
    }
    rows += p.dim(0);
    data.insert(data.end(), p.values().begin(), p.values().end());
  }
  Shape shape{rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return Tensor(std::move(shape), std::move(data));
}

Tensor batch_item(const Tensor& batch, std::size_t i) {
  if (batch.rank() < 2) throw DimensionError("batch_item: batch must have rank >= 2");
  if (i >= batch.dim(0)) throw DimensionError("batch_item: index out of range");
  Shape tail(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t n = shape_numel(tail);
  auto first = batch.values().begin() + static_cast<std::ptrdiff_t>(i * n);
  return Tensor(std::move(tail), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
}

Tensor rowwise_softmax(const Tensor& x) {
  require_rank2(x, "rowwise_softmax");
  Tensor out = x;
  const std::size_t cols = x.dim(1);
  for (std::size_t i = 0; i < x.dim(0); ++i) {
    double* row = &out.at(i, 0);
    const double peak = *std::max_element(row, row + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      row[j] = std::exp(row[j] - peak);
      total += row[j];
    }
    for (std::size_t j = 0; j < cols; ++j) row[j] /= total;
  }
  return out;
}

double gelu(double x) { return 0.5 * x * std::erfc(-x / std::numbers::sqrt2); }

Tensor gelu(const Tensor& x) {
  Tensor out = x;
  for (double& v : out.data()) v = gelu(v);
  return out;
}

double mean_squared_error(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mse: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    total += d * d;
  }
  return total / static_cast<double>(a.size());
}

double cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return (na == nb) ? 1.0 : 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace qrep
