#pragma once

#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "diskcd/error.hpp"

namespace diskcd {

// Dense row-major tensor of doubles. Everything in this project is 1-D or 2-D.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int64_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel() != static_cast<int64_t>(data.size()))
      fail(Err::ShapeMismatch, "tensor data length does not match shape");
  }

  static Tensor zeros(std::vector<int64_t> s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return Tensor{std::move(s), std::vector<double>(static_cast<size_t>(n), 0.0)};
  }
  static Tensor full(std::vector<int64_t> s, double v) {
    Tensor t = zeros(std::move(s));
    for (double& x : t.data) x = v;
    return t;
  }
  static Tensor scalar(double v) { return Tensor{{1}, {v}}; }
  static Tensor vec(std::vector<double> d) {
    int64_t n = static_cast<int64_t>(d.size());
    return Tensor{{n}, std::move(d)};
  }
  static Tensor matrix(int64_t r, int64_t c, std::vector<double> d) { return Tensor{{r, c}, std::move(d)}; }

  int ndim() const { return static_cast<int>(shape.size()); }
  int64_t numel() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
  }
  bool is_scalar() const { return numel() == 1; }
  int64_t rows() const { return shape.at(0); }
  int64_t cols() const { return shape.at(1); }

  double& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  double at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols() + j)]; }
  double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols() + j)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

}  // namespace diskcd
