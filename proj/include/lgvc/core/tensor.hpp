#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

namespace lgvc::core {

/// Dense row-major tensor of doubles. Shapes are small (rank <= 4).
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}
  Tensor(std::vector<int> s, double fill)
      : shape(std::move(s)), data(numel_of(shape), fill) {}

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  double& operator[](std::int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](std::int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace lgvc::core
