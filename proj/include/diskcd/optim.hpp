#pragma once

#include <cmath>

#include "diskcd/rng.hpp"
#include "diskcd/tensor.hpp"

namespace diskcd {

// Xavier/Glorot uniform. 2-D tensors are (out, in); 1-D tensors use their
// length as both fan-in and fan-out.
inline Tensor xavier_uniform(std::vector<int64_t> shape, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  int64_t fan_in, fan_out;
  if (t.ndim() == 2) {
    fan_out = t.rows();
    fan_in = t.cols();
  } else {
    fan_in = fan_out = t.numel();
  }
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& x : t.data) x = rng.uniform(-bound, bound);
  return t;
}

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One Adam update with bias correction. m and v are the per-parameter moment
// buffers; t is the 1-based step count shared by all parameters.
inline void adam_step(Tensor& value, Tensor& m, Tensor& v, const Tensor& grad,
                      const AdamConfig& cfg, int64_t t) {
  if (!value.same_shape(grad)) fail(Err::ShapeMismatch, "adam_step: gradient shape differs from parameter");
  double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (int64_t i = 0; i < value.numel(); ++i) {
    double g = grad.at(i);
    m.at(i) = cfg.beta1 * m.at(i) + (1.0 - cfg.beta1) * g;
    v.at(i) = cfg.beta2 * v.at(i) + (1.0 - cfg.beta2) * g * g;
    double mhat = m.at(i) / c1;
    double vhat = v.at(i) / c2;
    value.at(i) -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

}  // namespace diskcd
