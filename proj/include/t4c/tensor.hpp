#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "t4c/error.hpp"

namespace t4c {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Row-major N-dimensional array. The shape is fixed at construction;
/// reshape() returns a new header over the same storage.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : storage_(std::make_shared<std::vector<T>>()) {}

  explicit Tensor(Shape shape)
      : shape_(validated(std::move(shape))),
        storage_(std::make_shared<std::vector<T>>(shape_numel(shape_), T(0))) {}

  Tensor(Shape shape, std::vector<T> values)
      : shape_(validated(std::move(shape))),
        storage_(std::make_shared<std::vector<T>>(std::move(values))) {
    if (static_cast<std::int64_t>(storage_->size()) != shape_numel(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(storage_->size()) +
                       " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.storage_->begin(), t.storage_->end(), value);
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::int64_t rank() const noexcept { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(storage_->size()); }

  std::span<const T> data() const noexcept { return {storage_->data(), storage_->size()}; }
  /// Writable view; only used while an op fills a freshly created tensor.
  std::span<T> mutable_data() noexcept { return {storage_->data(), storage_->size()}; }

  const T& operator[](std::int64_t i) const { return (*storage_)[static_cast<std::size_t>(i)]; }
  T& operator[](std::int64_t i) { return (*storage_)[static_cast<std::size_t>(i)]; }

  Tensor reshape(Shape shape) const {
    Tensor out;
    out.shape_ = validated(std::move(shape));
    if (shape_numel(out.shape_) != numel()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(out.shape_));
    }
    out.storage_ = storage_;
    return out;
  }

  Tensor clone() const { return Tensor(shape_, *storage_); }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> values(storage_->begin(), storage_->end());
    return Tensor<U>(shape_, std::move(values));
  }

  bool shares_storage_with(const Tensor& other) const noexcept {
    return storage_ == other.storage_;
  }

 private:
  static Shape validated(Shape shape) {
    for (auto d : shape) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    }
    return shape;
  }

  Shape shape_;
  std::shared_ptr<std::vector<T>> storage_;
};

template <class T>
bool bit_equal(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return false;
  auto x = a.data();
  auto y = b.data();
  return std::equal(x.begin(), x.end(), y.begin(), y.end());
}

void require_same_shape(const Shape& a, const Shape& b, const char* what);
void require_rank(const Shape& s, std::int64_t rank, const char* what);

}  // namespace t4c
