#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace gped {

std::size_t shape_size(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

// Dense row-major tensor of doubles. Rank is dynamic; the batch axis, when
// present, is axis 0.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), data(shape_size(shape), fill) {}

  static Tensor from_values(std::vector<std::size_t> s, std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t axis) const { return shape[axis]; }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  // 2-D accessors (checked only by assert in debug builds; hot path)
  double& at2(std::size_t i, std::size_t j) { return data[i * shape[1] + j]; }
  double at2(std::size_t i, std::size_t j) const { return data[i * shape[1] + j]; }

  bool all_finite() const;
  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  // rows of a 2-D tensor, or the whole buffer for rank 1
  std::size_t row_width() const;
};

// Gathers rows `idx` of a tensor whose axis 0 is the instance axis.
Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& idx);

}  // namespace gped
