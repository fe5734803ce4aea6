// SPDX-FileCopyrightText: 2026 The geneo-seg authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "geneo/error.hpp"

namespace geneo {

/// Extent of a dense 3D field. Axis 0 is vertical (z), then y, then x.
struct Shape3 {
  std::size_t z = 0;
  std::size_t y = 0;
  std::size_t x = 0;

  constexpr std::size_t volume() const { return z * y * x; }
  constexpr std::size_t operator[](std::size_t axis) const {
    return axis == 0 ? z : (axis == 1 ? y : x);
  }
  constexpr bool valid() const { return z >= 1 && y >= 1 && x >= 1; }
  friend constexpr bool operator==(const Shape3&, const Shape3&) = default;

  std::string str() const {
    return std::to_string(z) + "x" + std::to_string(y) + "x" + std::to_string(x);
  }
};

/// Integer voxel offset (z, y, x).
struct Offset3 {
  long z = 0;
  long y = 0;
  long x = 0;
  constexpr long operator[](std::size_t axis) const {
    return axis == 0 ? z : (axis == 1 ? y : x);
  }
};

/// Dense row-major (z-major) scalar field.
template <typename T>
class Grid3 {
 public:
  using value_type = T;

  Grid3() = default;
  explicit Grid3(Shape3 shape, T fill = T{})
      : shape_(shape), data_(shape.volume(), fill) {}

  const Shape3& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t z, std::size_t y, std::size_t x) const {
    return (z * shape_.y + y) * shape_.x + x;
  }

  T& operator()(std::size_t z, std::size_t y, std::size_t x) { return data_[index(z, y, x)]; }
  const T& operator()(std::size_t z, std::size_t y, std::size_t x) const {
    return data_[index(z, y, x)];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Views only make sense on grids that outlive them.
  std::span<T> values() & { return data_; }
  std::span<const T> values() const& { return data_; }
  std::span<const T> values() && = delete;
  std::vector<T>& storage() & { return data_; }
  const std::vector<T>& storage() const& { return data_; }
  std::vector<T> storage() && { return std::move(data_); }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  friend bool operator==(const Grid3&, const Grid3&) = default;

 private:
  Shape3 shape_{};
  std::vector<T> data_;
};

template <typename A, typename B>
void require_same_shape(const Grid3<A>& a, const Grid3<B>& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw ShapeError(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " +
                     b.shape().str());
  }
}

}  // namespace geneo
