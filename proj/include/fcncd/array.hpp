#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace fcncd {

using Shape = std::vector<std::size_t>;

/// Seeded generator used everywhere randomness is needed.
using Rng = std::mt19937_64;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of 64-bit reals.
///
/// Every array is viewed as a matrix for the purposes of the differentiable
/// primitives: a scalar is 1x1, a vector of n entries is 1xn, and higher ranks
/// fold every leading extent into rows with the last extent as columns. All
/// entries are finite; construction rejects NaN and infinities.
class Array {
 public:
  Array() : shape_{0} {}
  explicit Array(Shape shape);
  Array(Shape shape, std::vector<double> values);

  static Array scalar(double value);
  static Array column(std::vector<double> values);
  static Array filled(Shape shape, double value);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return values_.size(); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  const double* data() const { return values_.data(); }
  double* data() { return values_.data(); }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t row, std::size_t col) const { return values_[row * cols() + col]; }
  double& at(std::size_t row, std::size_t col) { return values_[row * cols() + col]; }

  /// Value of a 1x1 array.
  double item() const;

  /// Same data under a new shape with equal total size.
  Array reshaped(Shape shape) const;

  bool operator==(const Array& other) const = default;

 private:
  Shape shape_;
  // Fixed alignment keeps Eigen's vectorized reductions in the same order
  // whatever address the allocator hands out, so results are reproducible.
  std::vector<double, Eigen::aligned_allocator<double>> values_;
};

/// Throws ValidationError naming `where` if any entry is NaN or infinite.
void require_finite(std::span<const double> values, std::string_view where);

}  // namespace fcncd
