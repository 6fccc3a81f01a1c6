// Copyright 2026 The qrep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qrep {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major N-d array. Element type is fixed per instantiation; the
/// library computes in double and stores integer codes in int32.
template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T{});
  BasicTensor(Shape shape, std::vector<T> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// 2-d access; the tensor must be rank 2.
  T& at(std::size_t row, std::size_t col) noexcept { return data_[row * shape_[1] + col]; }
  const T& at(std::size_t row, std::size_t col) const noexcept {
    return data_[row * shape_[1] + col];
  }

  /// Same data, new shape with equal element count.
  BasicTensor reshaped(Shape shape) const;

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using IntTensor = BasicTensor<std::int32_t>;

extern template class BasicTensor<double>;
extern template class BasicTensor<std::int32_t>;

/// Throws DomainError on the first NaN/Inf element. Used at the boundaries
/// where tensors enter the library (files, generators).
void require_finite(const Tensor& t, const std::string& what);

Tensor identity(std::size_t n);
Tensor vector_tensor(std::vector<double> values);

/// [M×K]·[K×N]. Reduction over K is sequential in index order.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Adds a length-N row vector to every row of an [M×N] tensor.
Tensor add_row_vector(const Tensor& a, const Tensor& row);
Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

/// Columns [begin, begin+count) of a rank-2 tensor.
Tensor slice_columns(const Tensor& a, std::size_t begin, std::size_t count);
/// Horizontal concatenation of rank-2 tensors with equal row counts.
Tensor concat_columns(std::span<const Tensor> parts);
/// Concatenation along axis 0; trailing dimensions must agree.
Tensor concat_rows(std::span<const Tensor> parts);
/// Sample i of a batch tensor [n×...] as a tensor of the trailing shape.
Tensor batch_item(const Tensor& batch, std::size_t i);

Tensor rowwise_softmax(const Tensor& x);

/// Exact GELU: x·Φ(x) with Φ the standard normal CDF.
double gelu(double x);
Tensor gelu(const Tensor& x);

double mean_squared_error(const Tensor& a, const Tensor& b);
double cosine_similarity(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace qrep
