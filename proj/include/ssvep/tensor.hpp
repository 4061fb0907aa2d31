#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "ssvep/errors.hpp"

namespace ssvep {
namespace nn {

// Dense row-major n-dimensional array of doubles.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s)
      : shape(std::move(s)),
        data(std::accumulate(shape.begin(), shape.end(), std::size_t(1),
                             std::multiplies<>()),
             0.0) {}

  std::size_t size() const { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }

  // 2D and 3D accessors; layouts are (row, col) and (batch, channel, t).
  double& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
  double at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }
  double& at3(std::size_t b, std::size_t c, std::size_t t) {
    return data[(b * shape[1] + c) * shape[2] + t];
  }
  double at3(std::size_t b, std::size_t c, std::size_t t) const {
    return data[(b * shape[1] + c) * shape[2] + t];
  }

  double* row2(std::size_t r) { return data.data() + r * shape[1]; }
  const double* row2(std::size_t r) const { return data.data() + r * shape[1]; }
  double* row3(std::size_t b, std::size_t c) {
    return data.data() + (b * shape[1] + c) * shape[2];
  }
  const double* row3(std::size_t b, std::size_t c) const {
    return data.data() + (b * shape[1] + c) * shape[2];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline void check_finite(const Tensor& t, const char* what) {
  for (double v : t.data)
    if (!std::isfinite(v))
      throw NumericalError(std::string(what) + ": non-finite value encountered");
}

inline std::string shape_string(const Tensor& t) {
  std::string s = "[";
  for (std::size_t i = 0; i < t.shape.size(); ++i)
    s += (i ? "x" : "") + std::to_string(t.shape[i]);
  return s + "]";
}

}  // namespace nn
}  // namespace ssvep
