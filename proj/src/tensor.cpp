#include "gped/tensor.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "gped/errors.hpp"

namespace gped {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor Tensor::from_values(std::vector<std::size_t> s, std::vector<double> values) {
  require(shape_size(s) == values.size(), ErrorKind::Dimension,
          "tensor literal has " + std::to_string(values.size()) + " values for shape " +
              shape_string(s));
  Tensor t;
  t.shape = std::move(s);
  t.data = std::move(values);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::size_t Tensor::row_width() const {
  if (shape.empty()) return 0;
  std::size_t w = 1;
  for (std::size_t a = 1; a < shape.size(); ++a) w *= shape[a];
  return w;
}

Tensor gather_rows(const Tensor& t, const std::vector<std::size_t>& idx) {
  require(t.rank() >= 1, ErrorKind::Dimension, "gather_rows needs an instance axis");
  const std::size_t width = t.row_width();
  std::vector<std::size_t> out_shape = t.shape;
  out_shape[0] = idx.size();
  Tensor out(out_shape);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    require(idx[r] < t.shape[0], ErrorKind::Range,
            "gather_rows index " + std::to_string(idx[r]) + " out of " + std::to_string(t.shape[0]));
    const double* src = t.ptr() + idx[r] * width;
    double* dst = out.ptr() + r * width;
    for (std::size_t c = 0; c < width; ++c) dst[c] = src[c];
  }
  return out;
}

}  // namespace gped
