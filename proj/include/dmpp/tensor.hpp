#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "dmpp/common.hpp"

namespace dmpp::nn {

/// Dense row-major tensor of 64-bit reals. The last shape entry varies
/// fastest; a (H, W, C) image stores pixel (y, x)'s channels contiguously.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::vector<std::size_t> s, double fill = 0.0)
      : shape(std::move(s)), v(count(shape), fill) {}

  static std::size_t count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
  }

  std::size_t size() const { return v.size(); }
  double& operator[](std::size_t i) { return v[i]; }
  double operator[](std::size_t i) const { return v[i]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(double x) {
    for (double& e : v) e = x;
  }

  bool all_finite() const {
    for (double e : v)
      if (!finite(e)) return false;
    return true;
  }
};

}  // namespace dmpp::nn
