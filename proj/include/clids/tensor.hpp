#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "clids/error.hpp"

namespace clids {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major n-dimensional array. Element (i, j) of an [m x n] tensor
/// lives at data[i * n + j]. The shape is fixed at construction; reshape()
/// returns a new value. A default-constructed tensor is empty (rank 0, no
/// data) and is only used as a placeholder.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (shape_size(shape_) != data_.size()) {
      fail(ErrorKind::ShapeMismatch, "shape " + shape_string(shape_) + " holds " +
                                         std::to_string(shape_size(shape_)) + " elements, got " +
                                         std::to_string(data_.size()));
    }
  }

  static Tensor zeros(Shape shape) { return filled(std::move(shape), T{0}); }

  static Tensor filled(Shape shape, T value) {
    validate_shape(shape);
    const std::size_t n = shape_size(shape);
    return Tensor(std::move(shape), std::vector<T>(n, value));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const {
    if (axis >= shape_.size()) {
      fail(ErrorKind::AxisOutOfRange, "axis " + std::to_string(axis) + " of rank-" +
                                          std::to_string(shape_.size()) + " tensor");
    }
    return shape_[axis];
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  const T& at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  Tensor reshape(Shape shape) const& { return Tensor(std::move(shape), data_); }
  Tensor reshape(Shape shape) && { return Tensor(std::move(shape), std::move(data_)); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  static void validate_shape(const Shape& shape) {
    for (std::size_t d : shape) {
      if (d == 0) fail(ErrorKind::ShapeMismatch, "zero-sized dimension in " + shape_string(shape));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

enum class Reduction { Sum, Mean, Max };

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
/// a^T * b for a [k x m], b [k x n].
template <typename T>
Tensor<T> matmul_at(const Tensor<T>& a, const Tensor<T>& b);
/// a * b^T for a [m x k], b [n x k].
template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> reduce(const Tensor<T>& t, std::size_t axis, Reduction op);

/// The only broadcast supported: add a length-n vector to every row of [m x n].
template <typename T>
Tensor<T> add_row_vector(const Tensor<T>& a, const Tensor<T>& row);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

/// Raw row-major GEMM kernel: C[m x n] (+)= op(A) * op(B).
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          std::span<const T> a, std::span<const T> b, std::span<T> c, bool accumulate);

}  // namespace clids
