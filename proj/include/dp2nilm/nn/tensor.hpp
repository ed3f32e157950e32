#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dp2nilm/core/error.hpp"

namespace dp2nilm::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major tensor of doubles. Rank 2 tensors are (batch, time); rank 3
/// tensors are (batch, channel, time).
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape(std::move(s)), data(shape_product(shape), fill) {}
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_product(shape) != data.size()) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_string(shape));
    }
  }

  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t size() const { return data.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  const double& operator()(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * shape[1] + j) * shape[2] + k];
  }
  const double& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * shape[1] + j) * shape[2] + k];
  }

  std::span<double> row(std::size_t i) {
    const std::size_t stride = data.size() / shape[0];
    return {data.data() + i * stride, stride};
  }
  std::span<const double> row(std::size_t i) const {
    const std::size_t stride = data.size() / shape[0];
    return {data.data() + i * stride, stride};
  }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// Stacks the selected rows (first-axis slices) of `src` into a new tensor.
inline Tensor gather_rows(const Tensor& src, std::span<const std::size_t> rows) {
  Shape shape = src.shape;
  shape[0] = rows.size();
  Tensor out(shape);
  const std::size_t stride = src.data.empty() ? 0 : src.data.size() / src.shape[0];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto in = src.row(rows[i]);
    std::copy(in.begin(), in.end(), out.data.begin() + i * stride);
  }
  return out;
}

}  // namespace dp2nilm::nn
