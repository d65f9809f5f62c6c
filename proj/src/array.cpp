#include "fcncd/array.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "fcncd/error.hpp"

namespace fcncd {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << ", ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

Array::Array(Shape shape) : shape_(std::move(shape)), values_(shape_size(shape_), 0.0) {}

Array::Array(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(values.begin(), values.end()) {
  if (values_.size() != shape_size(shape_)) {
    throw ShapeError("array of shape " + shape_string(shape_) + " given " +
                     std::to_string(values_.size()) + " values");
  }
  require_finite(values_, "array construction");
}

Array Array::scalar(double value) { return Array(Shape{}, {value}); }

Array Array::column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array(Shape{n, 1}, std::move(values));
}

Array Array::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Array(std::move(shape), std::vector<double>(n, value));
}

std::size_t Array::rows() const {
  if (shape_.size() <= 1) return 1;
  std::size_t r = 1;
  for (std::size_t i = 0; i + 1 < shape_.size(); ++i) r *= shape_[i];
  return r;
}

std::size_t Array::cols() const {
  if (shape_.empty()) return 1;
  return shape_.back();
}

double Array::item() const {
  if (values_.size() != 1) {
    throw ShapeError("item() on array of shape " + shape_string(shape_));
  }
  return values_[0];
}

Array Array::reshaped(Shape shape) const {
  if (shape_size(shape) != values_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Array out;
  out.shape_ = std::move(shape);
  out.values_ = values_;
  return out;
}

void require_finite(std::span<const double> values, std::string_view where) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw ValidationError("non-finite value at index " + std::to_string(i) + " in " +
                            std::string(where));
    }
  }
}

}  // namespace fcncd
