#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "amkt/error.hpp"
#include "amkt/rng.hpp"

namespace amkt {

using Shape = std::vector<int64_t>;

std::string shape_string(const Shape& s);

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

// Dense row-major tensor. Gradients are tracked by the tape, not here; a
// tensor is just shaped storage with value semantics.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape shape) : shape_(std::move(shape)) {
    for (int64_t d : shape_) check(d > 0, "tensor dimension must be positive, got shape ", shape_string(shape_));
    v_.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
  }

  TensorT(Shape shape, T fill) : TensorT(std::move(shape)) {
    for (auto& x : v_) x = fill;
  }

  TensorT(Shape shape, std::vector<T> values) : shape_(std::move(shape)), v_(std::move(values)) {
    check(static_cast<int64_t>(v_.size()) == shape_numel(shape_), "tensor value count ", v_.size(),
          " does not match shape ", shape_string(shape_));
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }

  T* data() { return v_.data(); }
  const T* data() const { return v_.data(); }
  std::vector<T>& values() { return v_; }
  const std::vector<T>& values() const { return v_; }

  T& operator[](int64_t i) { return v_[static_cast<size_t>(i)]; }
  T operator[](int64_t i) const { return v_[static_cast<size_t>(i)]; }

  T& at(int64_t i, int64_t j) { return v_[static_cast<size_t>(i * shape_[1] + j)]; }
  T at(int64_t i, int64_t j) const { return v_[static_cast<size_t>(i * shape_[1] + j)]; }
  T& at(int64_t i, int64_t j, int64_t k) {
    return v_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
    return v_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  // Same storage under a new shape; element count must be preserved.
  TensorT reshaped(Shape s) const {
    check(shape_numel(s) == numel(), "reshape from ", shape_string(shape_), " to ", shape_string(s),
          " changes element count");
    TensorT r;
    r.shape_ = std::move(s);
    r.v_ = v_;
    return r;
  }

  bool all_finite() const {
    for (T x : v_)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  static TensorT zeros(Shape s) { return TensorT(std::move(s)); }

  static TensorT uniform(Shape s, Rng& rng, double lo, double hi) {
    TensorT t(std::move(s));
    for (auto& x : t.v_) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  static TensorT normal(Shape s, Rng& rng) {
    TensorT t(std::move(s));
    for (auto& x : t.v_) x = static_cast<T>(rng.normal());
    return t;
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> r;
    r.set_raw(shape_, std::vector<U>(v_.begin(), v_.end()));
    return r;
  }

  void set_raw(Shape s, std::vector<T> v) {
    shape_ = std::move(s);
    v_ = std::move(v);
  }

 private:
  Shape shape_;
  std::vector<T> v_;
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

}  // namespace amkt
