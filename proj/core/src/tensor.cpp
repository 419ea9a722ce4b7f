// SPDX-License-Identifier: Apache-2.0
#include "gfr/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "gfr/error.hpp"

namespace gfr {
namespace {

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(product(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (product(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + to_string(shape_) + " does not hold " +
                         std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
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

std::size_t Tensor::rows() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw DimensionError("expected a matrix, got shape " + to_string(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + to_string(shape_));
  }
  return data_[0];
}

Tensor Tensor::row(std::size_t r) const {
  auto span = row_span(r);
  return Tensor::vector({span.begin(), span.end()});
}

std::span<const double> Tensor::row_span(std::size_t r) const {
  const std::size_t c = cols();
  if (r >= rows()) throw DimensionError("row index out of range");
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row_span(std::size_t r) {
  const std::size_t c = cols();
  if (r >= rows()) throw DimensionError("row index out of range");
  return std::span<double>(data_).subspan(r * c, c);
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

Tensor Tensor::as_matrix() const {
  if (rank() == 2) return *this;
  if (rank() == 1) return reshaped({1, size()});
  if (rank() == 0) return reshaped({1, 1});
  throw DimensionError("cannot view shape " + to_string(shape_) + " as a matrix");
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) return Tensor::zeros(0, 0);
  const std::size_t c = parts.front().cols();
  std::vector<double> data;
  std::size_t r = 0;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("vstack column mismatch: " + to_string(parts.front().shape()) +
                           " vs " + to_string(p.shape()));
    }
    data.insert(data.end(), p.data().begin(), p.data().end());
    r += p.rows();
  }
  return Tensor({r, c}, std::move(data));
}

Tensor take_rows(const Tensor& source, std::span<const std::size_t> indices) {
  const std::size_t c = source.cols();
  Tensor out({indices.size(), c});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = source.row_span(indices[i]);
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  return out;
}

}  // namespace gfr
