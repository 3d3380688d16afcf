#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "modify/errors.hpp"

namespace modify {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

// Dense row-major tensor. Copies share storage; use clone() for a deep copy.
// The autodiff layer treats tensor contents as immutable once wrapped in a
// Var; in-place mutation is reserved for parameter initialization and
// optimizer updates.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {
    for (int d : shape_)
      if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(shape_));
  }
  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape_))
      throw ShapeError("value count does not match shape " + shape_str(shape_));
    data_ = std::make_shared<std::vector<T>>(std::move(values));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    std::fill(t.data(), t.data() + t.numel(), v);
    return t;
  }
  static Tensor scalar(T v) { return full({1}, v); }

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t numel() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }

  T* data() { return data_->data(); }
  const T* data() const { return data_->data(); }
  T& operator[](std::int64_t i) { return (*data_)[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return (*data_)[static_cast<std::size_t>(i)]; }

  // [N,C,H,W] addressing
  T& at4(int n, int c, int h, int w) {
    return (*data_)[((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at4(int n, int c, int h, int w) const {
    return (*data_)[((static_cast<std::int64_t>(n) * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  T& at2(int i, int j) { return (*data_)[static_cast<std::int64_t>(i) * shape_[1] + j]; }
  const T& at2(int i, int j) const { return (*data_)[static_cast<std::int64_t>(i) * shape_[1] + j]; }
  T& at3(int i, int j, int k) {
    return (*data_)[(static_cast<std::int64_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  const T& at3(int i, int j, int k) const {
    return (*data_)[(static_cast<std::int64_t>(i) * shape_[1] + j) * shape_[2] + k];
  }

  Tensor clone() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<T>>(*data_);
    return t;
  }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != numel())
      throw ShapeError("reshape " + shape_str(shape_) + " -> " + shape_str(s) + " changes element count");
    Tensor t;
    t.shape_ = std::move(s);
    t.data_ = data_;
    return t;
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    const T* p = data();
    for (std::int64_t i = 0; i < numel(); ++i)
      if (!std::isfinite(p[i])) return false;
    return true;
  }

  bool bitwise_equal(const Tensor& o) const {
    if (shape_ != o.shape_) return false;
    return std::memcmp(data(), o.data(), sizeof(T) * static_cast<std::size_t>(numel())) == 0;
  }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
};

template <class T>
void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace modify
