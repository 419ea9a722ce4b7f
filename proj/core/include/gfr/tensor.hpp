// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gfr {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);

/// Dense row-major tensor of doubles. Rank 0 (scalar), 1 (vector) and
/// 2 (matrix) are the only ranks the library produces.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor({rows, cols}); }
  static Tensor full(std::size_t rows, std::size_t cols, double value) {
    return Tensor({rows, cols}, value);
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  // Matrix accessors; throw DimensionError unless rank() == 2.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * shape_[1] + c];
  }

  /// Value of a single-element tensor.
  double item() const;

  /// Row r of a matrix as a rank-1 tensor.
  Tensor row(std::size_t r) const;
  std::span<const double> row_span(std::size_t r) const;
  std::span<double> row_span(std::size_t r);

  /// Same data, new shape (element count must match).
  Tensor reshaped(Shape shape) const;

  /// Rank-1 tensors become 1 x n matrices; matrices pass through.
  Tensor as_matrix() const;

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{0};
  std::vector<double> data_;
};

/// Row-stack matrices with equal column counts.
Tensor vstack(std::span<const Tensor> parts);

/// Rows of `source` at `indices`, in order.
Tensor take_rows(const Tensor& source, std::span<const std::size_t> indices);

}  // namespace gfr
