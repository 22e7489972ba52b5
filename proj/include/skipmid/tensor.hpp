#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "skipmid/errors.hpp"

namespace skipmid {

// Dense n-dimensional array in row-major order. The shape is fixed at
// construction. The element type is a template parameter: float for training
// runs, double for gradient-check mode.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape)
      : shape_(std::move(shape)), data_(checked_numel(shape_), T(0)) {}

  Tensor(std::vector<std::int64_t> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<std::int64_t>(data_.size()) != checked_numel(shape_)) {
      throw ContractError("tensor: data length " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor full(std::vector<std::int64_t> shape, T value) {
    Tensor t(std::move(shape));
    for (T& x : t.data_) x = value;
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  static Tensor identity(std::int64_t n) {
    Tensor t({n, n});
    for (std::int64_t i = 0; i < n; ++i) t.data_[i * n + i] = T(1);
    return t;
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& at(std::int64_t flat) { return data_[static_cast<std::size_t>(flat)]; }
  const T& at(std::int64_t flat) const { return data_[static_cast<std::size_t>(flat)]; }

  // Row-major 2-D access.
  T& at2(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * dim(1) + c)]; }
  const T& at2(std::int64_t r, std::int64_t c) const {
    return data_[static_cast<std::size_t>(r * dim(1) + c)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const { return shape_string(shape_); }

  static std::string shape_string(const std::vector<std::int64_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (i) os << 'x';
      os << shape[i];
    }
    os << ']';
    return os.str();
  }

 private:
  static std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
      if (d < 0) throw ContractError("tensor: negative dimension in " + shape_string(shape));
      n *= d;
    }
    return n;
  }

  std::vector<std::int64_t> shape_;
  std::vector<T> data_;
};

}  // namespace skipmid
