// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Non-GEMM layers. All of these run in 64-bit and are never quantized.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <vector>

#include "fp8forge/errors.hpp"
#include "fp8forge/tensor.hpp"

namespace fp8forge::train {

// tanh approximation of GELU.
inline double gelu(double x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  const double u = c * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad(double x) {
  constexpr double c = 0.7978845608028654;
  const double u = c * (x + 0.044715 * x * x * x);
  const double th = std::tanh(u);
  const double du = c * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
}

inline Tensor gelu(const Tensor& x) {
  Tensor y(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu(x[i]);
  return y;
}

inline Tensor gelu_backward(const Tensor& pre, const Tensor& dout) {
  require_same_shape(pre, dout, "gelu_backward");
  Tensor d(pre.rows(), pre.cols());
  for (std::size_t i = 0; i < pre.size(); ++i) d[i] = gelu_grad(pre[i]) * dout[i];
  return d;
}

// y(r, :) += b(0, :)
inline void add_row_bias(Tensor& y, const Tensor& b) {
  if (b.rows() != 1 || b.cols() != y.cols()) throw ShapeMismatchError("add_row_bias: bias must be (1, cols)");
  for (std::size_t r = 0; r < y.rows(); ++r) {
    for (std::size_t c = 0; c < y.cols(); ++c) y(r, c) += b(0, c);
  }
}

inline Tensor column_sums(const Tensor& t) {
  Tensor s(1, t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) s(0, c) += t(r, c);
  }
  return s;
}

inline void add_into(Tensor& acc, const Tensor& t) {
  require_same_shape(acc, t, "add_into");
  for (std::size_t i = 0; i < t.size(); ++i) acc[i] += t[i];
}

inline Tensor slice(const Tensor& t, std::size_t r0, std::size_t nr, std::size_t c0, std::size_t nc) {
  Tensor s(nr, nc);
  for (std::size_t r = 0; r < nr; ++r) {
    for (std::size_t c = 0; c < nc; ++c) s(r, c) = t(r0 + r, c0 + c);
  }
  return s;
}

inline void add_slice(Tensor& t, std::size_t r0, std::size_t c0, const Tensor& s) {
  for (std::size_t r = 0; r < s.rows(); ++r) {
    for (std::size_t c = 0; c < s.cols(); ++c) t(r0 + r, c0 + c) += s(r, c);
  }
}

struct LayerNormCache {
  Tensor xhat;
  std::vector<double> inv_std;
};

struct LayerNormGrads {
  Tensor dx;
  Tensor dgain;
  Tensor dbias;
};

inline constexpr double kLayerNormEps = 1e-5;

inline Tensor layernorm_forward(const Tensor& x, const Tensor& gain, const Tensor& bias, LayerNormCache& cache) {
  if (gain.rows() != 1 || gain.cols() != x.cols() || !gain.same_shape(bias)) {
    throw ShapeMismatchError("layernorm: gain and bias must be (1, cols)");
  }
  const std::size_t n = x.rows(), d = x.cols();
  cache.xhat = Tensor(n, d);
  cache.inv_std.assign(n, 0.0);
  Tensor y(n, d);
  for (std::size_t r = 0; r < n; ++r) {
    double mean = 0.0;
    for (std::size_t c = 0; c < d; ++c) mean += x(r, c);
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t c = 0; c < d; ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    cache.inv_std[r] = inv;
    for (std::size_t c = 0; c < d; ++c) {
      const double xh = (x(r, c) - mean) * inv;
      cache.xhat(r, c) = xh;
      y(r, c) = xh * gain(0, c) + bias(0, c);
    }
  }
  return y;
}

inline LayerNormGrads layernorm_backward(const Tensor& dy, const LayerNormCache& cache, const Tensor& gain) {
  require_same_shape(dy, cache.xhat, "layernorm_backward");
  const std::size_t n = dy.rows(), d = dy.cols();
  LayerNormGrads g{Tensor(n, d), Tensor(1, d), Tensor(1, d)};
  for (std::size_t r = 0; r < n; ++r) {
    double mean_dxh = 0.0, mean_dxh_xh = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double dxh = dy(r, c) * gain(0, c);
      mean_dxh += dxh;
      mean_dxh_xh += dxh * cache.xhat(r, c);
      g.dgain(0, c) += dy(r, c) * cache.xhat(r, c);
      g.dbias(0, c) += dy(r, c);
    }
    mean_dxh /= static_cast<double>(d);
    mean_dxh_xh /= static_cast<double>(d);
    for (std::size_t c = 0; c < d; ++c) {
      const double dxh = dy(r, c) * gain(0, c);
      g.dx(r, c) = cache.inv_std[r] * (dxh - mean_dxh - cache.xhat(r, c) * mean_dxh_xh);
    }
  }
  return g;
}

// Row softmax with entries above the diagonal masked out.
inline Tensor causal_softmax(const Tensor& s) {
  Tensor p(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    const std::size_t last = std::min(i, s.cols() - 1);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j <= last; ++j) mx = std::fmax(mx, s(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j <= last; ++j) {
      p(i, j) = std::exp(s(i, j) - mx);
      z += p(i, j);
    }
    for (std::size_t j = 0; j <= last; ++j) p(i, j) /= z;
  }
  return p;
}

// dS = P * (dP - rowsum(dP * P)); masked entries have P = 0 and get 0.
inline Tensor softmax_backward(const Tensor& p, const Tensor& dp) {
  require_same_shape(p, dp, "softmax_backward");
  Tensor ds(p.rows(), p.cols());
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double dot = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) dot += dp(i, j) * p(i, j);
    for (std::size_t j = 0; j < p.cols(); ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot);
  }
  return ds;
}

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

// Mean over every element of (y - t)^2.
inline LossAndGrad mse_loss(const Tensor& y, const Tensor& target) {
  require_same_shape(y, target, "mse_loss");
  const double n = static_cast<double>(y.size());
  LossAndGrad out{0.0, Tensor(y.rows(), y.cols())};
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - target[i];
    out.loss += d * d;
    out.grad[i] = 2.0 * d / n;
  }
  out.loss /= n;
  return out;
}

// Mean negative log-likelihood of `targets` under row-softmax(logits).
inline LossAndGrad cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets) {
  if (targets.size() != logits.rows()) throw ShapeMismatchError("cross_entropy: one target per row required");
  const double n = static_cast<double>(logits.rows());
  LossAndGrad out{0.0, Tensor(logits.rows(), logits.cols())};
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (targets[r] >= logits.cols()) throw InvalidArgumentError("cross_entropy: target out of range");
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < logits.cols(); ++c) mx = std::fmax(mx, logits(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) z += std::exp(logits(r, c) - mx);
    const double log_z = std::log(z) + mx;
    out.loss += log_z - logits(r, targets[r]);
    for (std::size_t c = 0; c < logits.cols(); ++c) out.grad(r, c) = std::exp(logits(r, c) - log_z) / n;
    out.grad(r, targets[r]) -= 1.0 / n;
  }
  out.loss /= n;
  return out;
}

}  // namespace fp8forge::train
