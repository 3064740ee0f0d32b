#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fusenet/error.hpp"

namespace fusenet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

/// Dense row-major tensor of doubles.
///
/// Values and the optional gradient buffer always have shape_size(shape)
/// entries. A scalar has shape {1}.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0, bool requires_grad = false)
      : shape_(std::move(shape)), values_(checked_size(shape_), fill), requires_grad_(requires_grad) {}

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : shape_(std::move(shape)), values_(std::move(values)), requires_grad_(requires_grad) {
    if (values_.size() != checked_size(shape_)) {
      throw DimensionError("tensor of shape " + shape_str(shape_) + " given " +
                           std::to_string(values_.size()) + " values");
    }
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
    return Tensor({rows, cols}, std::move(values));
  }

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }

  /// Rows/cols of a rank-2 view; rank-1 tensors read as a column.
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : shape_[0]; }
  std::size_t cols() const noexcept { return shape_.size() < 2 ? 1 : shape_[1]; }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool on) noexcept { requires_grad_ = on; }

  bool has_grad() const noexcept { return grad_.has_value(); }
  const std::vector<double>& grad() const { return grad_.value(); }
  std::vector<double>& grad() { return grad_.value(); }

  void zero_grad() { grad_.emplace(values_.size(), 0.0); }
  void set_grad(std::vector<double> g) {
    if (g.size() != values_.size()) {
      throw DimensionError("gradient length " + std::to_string(g.size()) +
                           " does not match tensor " + shape_str(shape_));
    }
    grad_ = std::move(g);
  }
  void clear_grad() noexcept { grad_.reset(); }

 private:
  static std::size_t checked_size(const Shape& shape) {
    for (auto d : shape) {
      if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    return shape_size(shape);
  }

  Shape shape_;
  std::vector<double> values_;
  bool requires_grad_ = false;
  std::optional<std::vector<double>> grad_;
};

}  // namespace fusenet
