#include "ntil/tensor.hpp"

#include <functional>
#include <numeric>
#include <sstream>
#include <utility>

#include "ntil/errors.hpp"

namespace ntil {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    out << (i ? "x" : "") << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  require(shape_size(shape) == values.size(), [&] {
    return "tensor shape " + shape_string(shape) + " does not match " +
           std::to_string(values.size()) + " values";
  });
}

Tensor Tensor::zeros(Shape s) { return filled(std::move(s), 0.0); }

Tensor Tensor::filled(Shape s, double value) {
  const std::size_t n = shape_size(s);
  return Tensor(std::move(s), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Tensor({rows, cols}, std::move(v));
}

std::size_t Tensor::rows() const {
  require(rank() == 2, [&] { return "rows() needs a rank-2 tensor, got " + shape_string(shape); });
  return shape[0];
}

std::size_t Tensor::cols() const {
  require(rank() == 2, [&] { return "cols() needs a rank-2 tensor, got " + shape_string(shape); });
  return shape[1];
}

double Tensor::item() const {
  require(is_scalar(),
          [&] { return "item() needs a single-element tensor, got " + shape_string(shape); });
  return values[0];
}

}  // namespace ntil
