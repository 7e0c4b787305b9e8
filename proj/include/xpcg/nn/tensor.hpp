#pragma once

#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "xpcg/error.hpp"

namespace xpcg::nn {

using Shape = std::vector<int>;

/// 64-byte aligned storage. Eigen's vectorized kernels peel differently with
/// the start address, so unaligned buffers make results allocation-dependent.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

template <typename T>
using Storage = std::vector<T, AlignedAllocator<T>>;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, int d) { return a * static_cast<std::size_t>(d); });
}

std::string shape_string(const Shape& shape);

/// [n] followed by the per-sample shape.
Shape batch_shape(int n, const Shape& sample);

inline Error shape_mismatch(const std::string& what) {
  return validation_error("ShapeMismatch", what);
}

/// Dense row-major tensor. Batched activations are [N, H, W, C] or [N, F].
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)), values_(element_count(shape_), fill) {}
  Tensor(Shape shape, const std::vector<T>& values)
      : shape_(std::move(shape)), values_(values.begin(), values.end()) {
    if (values_.size() != element_count(shape_)) throw shape_mismatch("value count does not match " + shape_string(shape_));
  }

  const Shape& shape() const { return shape_; }
  int dim(std::size_t i) const { return shape_.at(i); }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::size_t size() const { return values_.size(); }

  T* data() { return values_.data(); }
  const T* data() const { return values_.data(); }
  std::span<T> values() { return values_; }
  std::span<const T> values() const { return values_; }
  Storage<T>& storage() { return values_; }
  const Storage<T>& storage() const { return values_; }

  T& operator[](std::size_t i) { return values_[i]; }
  const T& operator[](std::size_t i) const { return values_[i]; }

  /// Reinterprets the same values under a new shape of equal element count.
  void reshape(Shape shape) {
    if (element_count(shape) != values_.size()) {
      throw shape_mismatch("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    shape_ = std::move(shape);
  }

  /// Resizes and zero-fills.
  void reset(Shape shape) {
    shape_ = std::move(shape);
    values_.assign(element_count(shape_), T(0));
  }

  void fill(T v) { std::fill(values_.begin(), values_.end(), v); }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  Storage<T> values_;
};

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> v(t.values().begin(), t.values().end());
  return Tensor<To>(t.shape(), std::move(v));
}

}  // namespace xpcg::nn
