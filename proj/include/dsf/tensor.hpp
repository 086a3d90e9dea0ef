#pragma once

#include <array>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "dsf/errors.hpp"

namespace dsf {

// Dense row-major tensor of rank 1 or 2. A default-constructed tensor is the
// empty sentinel (rank 0, no data) used for absent optional components.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(std::size_t n, T fill = T{}) : rank_(1), dims_{n, 1}, data_(n, fill) {
    if (n == 0) throw ShapeError("tensor extent must be positive");
  }

  BasicTensor(std::size_t rows, std::size_t cols, T fill = T{})
      : rank_(2), dims_{rows, cols}, data_(rows * cols, fill) {
    if (rows == 0 || cols == 0) throw ShapeError("tensor extents must be positive");
  }

  static BasicTensor vector(std::initializer_list<T> values) {
    BasicTensor t(values.size());
    std::copy(values.begin(), values.end(), t.data_.begin());
    return t;
  }

  static BasicTensor vector(std::vector<T> values) {
    BasicTensor t(values.size());
    t.data_ = std::move(values);
    return t;
  }

  static BasicTensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
    BasicTensor t(rows, cols);
    if (values.size() != rows * cols) {
      throw ShapeError("matrix payload has " + std::to_string(values.size()) + " values, expected " +
                       std::to_string(rows * cols));
    }
    t.data_ = std::move(values);
    return t;
  }

  // Same shape, new fill.
  static BasicTensor like(const BasicTensor& other, T fill = T{}) {
    BasicTensor t = other;
    std::fill(t.data_.begin(), t.data_.end(), fill);
    return t;
  }

  std::size_t rank() const { return rank_; }
  bool empty() const { return rank_ == 0; }
  std::size_t rows() const { return dims_[0]; }
  std::size_t cols() const { return dims_[1]; }
  std::size_t size() const { return data_.size(); }
  std::vector<std::size_t> dims() const {
    if (rank_ == 0) return {};
    if (rank_ == 1) return {dims_[0]};
    return {dims_[0], dims_[1]};
  }
  bool same_shape(const BasicTensor& o) const { return rank_ == o.rank_ && dims_ == o.dims_; }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool operator==(const BasicTensor&) const = default;

  // Bit-pattern equality (distinguishes -0.0 from 0.0, equates identical NaNs).
  bool bitwise_equal(const BasicTensor& o) const {
    return same_shape(o) && std::memcmp(data_.data(), o.data_.data(), data_.size() * sizeof(T)) == 0;
  }

  std::string shape_string() const {
    if (rank_ == 0) return "[]";
    if (rank_ == 1) return "[" + std::to_string(dims_[0]) + "]";
    return "[" + std::to_string(dims_[0]) + "x" + std::to_string(dims_[1]) + "]";
  }

 private:
  std::size_t rank_ = 0;
  std::array<std::size_t, 2> dims_{0, 0};
  std::vector<T> data_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

}  // namespace dsf
