#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "quickloc/error.hpp"

namespace quickloc {

// Model numerics are fp32 end to end; the templated kernels also instantiate
// with double so tests can run high-precision derivative checks.
using Real = float;

struct Shape3 {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::int64_t flat() const {
    return static_cast<std::int64_t>(height) * width * channels;
  }
  bool operator==(const Shape3&) const = default;
  std::string str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" +
           std::to_string(channels);
  }
};

// Dense row-major grid, channels innermost: index = (y*width + x)*channels + c.
template <typename T>
struct Tensor3T {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  Tensor3T() = default;
  Tensor3T(int h, int w, int c)
      : height(h), width(w), channels(c),
        data(static_cast<std::size_t>(h) * w * c, T(0)) {}
  explicit Tensor3T(Shape3 s) : Tensor3T(s.height, s.width, s.channels) {}

  Shape3 shape() const { return {height, width, channels}; }
  std::size_t size() const { return data.size(); }

  T& at(int y, int x, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  const T& at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

using Tensor3 = Tensor3T<Real>;

}  // namespace quickloc
