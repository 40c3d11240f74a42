// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// High-precision parameter state and the AdamW update applied to it.

#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "fp8forge/errors.hpp"
#include "fp8forge/tensor.hpp"

namespace fp8forge::train {

struct ParamInfo {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  bool decay = true;  // weight matrices decay, gains and biases do not
};

using Gradients = std::vector<Tensor>;

namespace detail {
inline std::uint64_t next_state_version() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}
}  // namespace detail

// Master weights plus first and second moments. `version` changes on every
// mutation so caches built from an older state can be detected.
struct MasterState {
  std::vector<ParamInfo> info;
  std::vector<Tensor> weights;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
  std::uint64_t version = 0;

  MasterState() = default;
  MasterState(std::vector<ParamInfo> params, std::vector<Tensor> initial)
      : info(std::move(params)), weights(std::move(initial)), version(detail::next_state_version()) {
    if (info.size() != weights.size()) throw ShapeMismatchError("MasterState: parameter count mismatch");
    for (std::size_t i = 0; i < info.size(); ++i) {
      if (weights[i].rows() != info[i].rows || weights[i].cols() != info[i].cols) {
        throw ShapeMismatchError("MasterState: parameter '" + info[i].name + "' has the wrong shape");
      }
      m.emplace_back(info[i].rows, info[i].cols);
      v.emplace_back(info[i].rows, info[i].cols);
    }
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.size();
    return n;
  }

  // Call after editing `weights` in place.
  void touch() { version = detail::next_state_version(); }
};

struct AdamWHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
};

inline double global_norm(const Gradients& grads) {
  double s = 0.0;
  for (const auto& g : grads) s += sum_squares(g);
  return std::sqrt(s);
}

// One AdamW step with bias correction and decoupled decay:
//   w <- w - lr*wd*w - lr * mhat / (sqrt(vhat) + eps)
// The state is left untouched if any gradient entry is non-finite.
inline void optimizer_step(MasterState& state, const Gradients& grads, const AdamWHyper& h) {
  if (grads.size() != state.weights.size()) {
    throw ShapeMismatchError("optimizer_step: expected " + std::to_string(state.weights.size()) +
                             " gradients, got " + std::to_string(grads.size()));
  }
  for (std::size_t p = 0; p < grads.size(); ++p) {
    require_same_shape(grads[p], state.weights[p], "optimizer_step");
    const std::size_t bad = first_non_finite(grads[p]);
    if (bad != grads[p].size()) {
      throw DivergenceError("divergence: non-finite gradient in '" + state.info[p].name + "' at index " +
                                std::to_string(bad),
                            state.step);
    }
  }
  const std::uint64_t t = state.step + 1;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  for (std::size_t p = 0; p < grads.size(); ++p) {
    auto w = state.weights[p].data();
    auto m = state.m[p].data();
    auto v = state.v[p].data();
    auto g = grads[p].data();
    const double wd = state.info[p].decay ? h.weight_decay : 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double denom = std::sqrt(v[i] / c2) + h.eps;
      const double update = denom > 0.0 ? mhat / denom : 0.0;
      w[i] -= h.lr * wd * w[i];
      w[i] -= h.lr * update;
    }
  }
  state.step = t;
  state.touch();
}

// Linear warm-up over the first warmup_ratio of the run, then cosine decay
// from the peak to min_lr_ratio * peak.
struct LrSchedule {
  double peak_lr = 1e-3;
  std::size_t total_steps = 1;
  double warmup_ratio = 0.1;
  double min_lr_ratio = 0.1;

  std::size_t warmup_steps() const {
    return static_cast<std::size_t>(std::ceil(warmup_ratio * static_cast<double>(total_steps)));
  }

  double at(std::size_t step) const {
    const std::size_t warm = warmup_steps();
    if (step < warm) return peak_lr * static_cast<double>(step + 1) / static_cast<double>(warm);
    const std::size_t span = total_steps > warm + 1 ? total_steps - warm - 1 : 1;
    const double p = std::fmin(1.0, static_cast<double>(step - warm) / static_cast<double>(span));
    const double cosine = 0.5 * (1.0 + std::cos(std::numbers::pi * p));
    return peak_lr * (min_lr_ratio + (1.0 - min_lr_ratio) * cosine);
  }
};

}  // namespace fp8forge::train
