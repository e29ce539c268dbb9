#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace cyclesense::nn {

using Shape = std::vector<std::size_t>;

class ShapeMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Allocator returning 64-byte aligned blocks.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major n-dimensional array. The last axis is contiguous.
template <typename S>
class Tensor {
 public:
  using value_type = S;

  Tensor() = default;
  explicit Tensor(Shape shape, S fill = S{0}) : shape_(std::move(shape)), data_(numel(shape_), fill) { check_extents(); }
  Tensor(Shape shape, const std::vector<S>& values)
      : Tensor(std::move(shape), AlignedVector<S>(values.begin(), values.end())) {}
  Tensor(Shape shape, std::initializer_list<S> values)
      : Tensor(std::move(shape), AlignedVector<S>(values.begin(), values.end())) {}
  Tensor(Shape shape, AlignedVector<S> values) : shape_(std::move(shape)), data_(std::move(values)) {
    check_extents();
    if (data_.size() != numel(shape_)) {
      throw ShapeMismatch("tensor value count " + std::to_string(data_.size()) + " does not match shape " +
                          nn::to_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::span<S> values() { return data_; }
  std::span<const S> values() const { return data_; }
  AlignedVector<S>& storage() { return data_; }
  const AlignedVector<S>& storage() const { return data_; }

  S& operator[](std::size_t i) { return data_[i]; }
  const S& operator[](std::size_t i) const { return data_[i]; }

  /// Flat offset of a full multi-index.
  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) throw ShapeMismatch("index rank does not match tensor rank");
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) off = off * shape_[axis++] + i;
    return off;
  }
  S& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  const S& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  Tensor reshaped(Shape shape) const {
    if (numel(shape) != data_.size()) {
      throw ShapeMismatch("cannot reshape " + nn::to_string(shape_) + " to " + nn::to_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
  }

  void fill(S value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw ShapeMismatch("tensor extents must be positive: " + nn::to_string(shape_));
    }
  }

  Shape shape_;
  AlignedVector<S> data_;
};

}  // namespace cyclesense::nn
