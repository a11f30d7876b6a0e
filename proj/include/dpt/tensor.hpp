#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpt/errors.hpp"

namespace dpt {

using Shape = std::vector<int64_t>;

std::string shape_to_string(const Shape& s);
int64_t shape_numel(const Shape& s);  // throws ShapeError on empty/non-positive

// Dense row-major tensor owning its buffer.  The scalar type is double for
// gradient-check paths and float for cheap training runs; both instantiations
// are compiled into the library.  Indexed access is bounds-checked; kernels
// that have already validated shapes go through data().
template <class T>
class TensorT {
 public:
  TensorT() = default;
  explicit TensorT(Shape shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
  }
  TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
      throw ShapeError("tensor data size " + std::to_string(data_.size()) +
                       " does not fill shape " + shape_to_string(shape_));
  }

  static TensorT full(Shape shape, T v) {
    TensorT t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }

  bool defined() const { return !shape_.empty(); }
  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t extent(int64_t axis) const {
    if (axis < 0 || axis >= rank())
      throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                       std::to_string(rank()));
    return shape_[static_cast<size_t>(axis)];
  }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  // Bounds-checked flat access.
  T& flat(int64_t i) {
    check_flat(i);
    return data_[static_cast<size_t>(i)];
  }
  T flat(int64_t i) const {
    check_flat(i);
    return data_[static_cast<size_t>(i)];
  }

  // Bounds-checked multi-index access; the index count must equal the rank.
  template <class... I>
  T& at(I... idx) {
    return data_[static_cast<size_t>(offset_of({static_cast<int64_t>(idx)...}))];
  }
  template <class... I>
  T at(I... idx) const {
    return data_[static_cast<size_t>(offset_of({static_cast<int64_t>(idx)...}))];
  }

  // Returns a copy viewed under a new shape with the same element count.
  TensorT reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw ShapeError("cannot reshape " + shape_to_string(shape_) + " (" +
                       std::to_string(numel()) + " elements) to " + shape_to_string(shape));
    TensorT out;
    out.shape_ = std::move(shape);
    out.data_ = data_;
    return out;
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  void fill(T v) {
    for (auto& x : data_) x = v;
  }

 private:
  void check_flat(int64_t i) const {
    if (i < 0 || i >= numel())
      throw ShapeError("flat index " + std::to_string(i) + " out of range for " +
                       std::to_string(numel()) + " elements");
  }
  int64_t offset_of(std::initializer_list<int64_t> idx) const {
    if (static_cast<int64_t>(idx.size()) != rank())
      throw ShapeError("got " + std::to_string(idx.size()) + " indices for rank " +
                       std::to_string(rank()) + " tensor");
    int64_t off = 0;
    int64_t axis = 0;
    for (int64_t i : idx) {
      int64_t e = shape_[static_cast<size_t>(axis)];
      if (i < 0 || i >= e)
        throw ShapeError("index " + std::to_string(i) + " out of range for extent " +
                         std::to_string(e) + " on axis " + std::to_string(axis));
      off = off * e + i;
      ++axis;
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<double>;
using TensorF = TensorT<float>;

}  // namespace dpt
