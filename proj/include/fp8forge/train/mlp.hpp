// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fully connected regression network:
//   h_0 = x,  h_l = gelu(h_{l-1} W_l^T + b_l) for hidden layers,
//   y = h_L W_out^T + b_out,  loss = mean (y - target)^2
// Every W product goes through the quantized linear path; biases, GELU and
// the loss stay in 64-bit.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fp8forge/errors.hpp"
#include "fp8forge/pipeline_config.hpp"
#include "fp8forge/scaled_gemm.hpp"
#include "fp8forge/tensor.hpp"
#include "fp8forge/train/model.hpp"
#include "fp8forge/train/ops.hpp"
#include "fp8forge/train/optimizer.hpp"

namespace fp8forge::train {

struct MlpSpec {
  std::size_t input_dim = 16;
  std::size_t width = 64;
  std::size_t output_dim = 4;
  std::size_t hidden_layers = 2;

  std::size_t linear_count() const { return hidden_layers + 1; }
  std::size_t in_dim(std::size_t l) const { return l == 0 ? input_dim : width; }
  std::size_t out_dim(std::size_t l) const { return l == hidden_layers ? output_dim : width; }

  void validate() const {
    if (input_dim == 0 || output_dim == 0 || (hidden_layers > 0 && width == 0)) {
      throw InvalidArgumentError("mlp: dimensions must be positive");
    }
  }
};

struct RegressionBatch {
  Tensor x;
  Tensor y;
};

struct MlpCache {
  CacheStamp stamp;
  std::vector<LinearForward> linear;
  std::vector<Tensor> pre;  // pre-activation of each hidden layer
  Tensor dloss;             // dL/dy
};

class Mlp {
 public:
  using Batch = RegressionBatch;
  using Cache = MlpCache;

  explicit Mlp(MlpSpec spec) : spec_(spec) { spec_.validate(); }

  const MlpSpec& spec() const { return spec_; }

  // Parameters in order W_0, b_0, W_1, b_1, ...
  std::vector<ParamInfo> params() const {
    std::vector<ParamInfo> p;
    for (std::size_t l = 0; l < spec_.linear_count(); ++l) {
      const std::string tag = l == spec_.hidden_layers ? "out" : std::to_string(l);
      p.push_back({"w_" + tag, spec_.out_dim(l), spec_.in_dim(l), true});
      p.push_back({"b_" + tag, 1, spec_.out_dim(l), false});
    }
    return p;
  }

  // Weights ~ N(0, 1/fan_in), biases zero.
  MasterState init(std::uint64_t seed) const {
    Rng rng(seed);
    std::vector<Tensor> w;
    for (const auto& info : params()) {
      Tensor t(info.rows, info.cols);
      if (info.decay) init_normal(t, 1.0 / std::sqrt(static_cast<double>(info.cols)), rng);
      w.push_back(std::move(t));
    }
    return MasterState(params(), std::move(w));
  }

  ForwardResult<MlpCache> forward(const MasterState& s, const RegressionBatch& batch,
                                  const PipelineConfig& cfg) const {
    if (batch.x.cols() != spec_.input_dim || batch.y.cols() != spec_.output_dim || batch.x.rows() != batch.y.rows()) {
      throw ShapeMismatchError("mlp: batch shape does not match the model");
    }
    check_state(s);
    return guarded_forward(s, [&] {
      ForwardResult<MlpCache> out;
      out.cache.stamp = stamp_of(s);
      Tensor h = batch.x;
      for (std::size_t l = 0; l < spec_.linear_count(); ++l) {
        LinearForward f = linear_fprop(h, s.weights[2 * l], cfg);
        Tensor z = f.y;
        add_row_bias(z, s.weights[2 * l + 1]);
        out.cache.linear.push_back(std::move(f));
        if (l < spec_.hidden_layers) {
          h = gelu(z);
          out.cache.pre.push_back(std::move(z));
        } else {
          h = std::move(z);
        }
      }
      auto lg = mse_loss(h, batch.y);
      out.loss = lg.loss;
      out.cache.dloss = std::move(lg.grad);
      return out;
    });
  }

  Gradients backward(const MasterState& s, const MlpCache& cache, const PipelineConfig& cfg) const {
    check_cache(cache.stamp, s, "mlp");
    if (cache.linear.size() != spec_.linear_count()) throw StaleCacheError("mlp: cache is from a different model");
    Gradients g(2 * spec_.linear_count());
    Tensor dz = cache.dloss;
    for (std::size_t l = spec_.linear_count(); l-- > 0;) {
      g[2 * l + 1] = column_sums(dz);
      LinearGrads lg = linear_backward(dz, cache.linear[l], cfg, l > 0);
      g[2 * l] = std::move(lg.dw);
      if (l > 0) dz = gelu_backward(cache.pre[l - 1], lg.dx);
    }
    return g;
  }

 private:
  void check_state(const MasterState& s) const {
    const auto want = params();
    if (s.weights.size() != want.size()) throw ShapeMismatchError("mlp: state has the wrong parameter count");
    for (std::size_t i = 0; i < want.size(); ++i) {
      if (s.weights[i].rows() != want[i].rows || s.weights[i].cols() != want[i].cols) {
        throw ShapeMismatchError("mlp: parameter '" + want[i].name + "' has the wrong shape");
      }
    }
  }

  MlpSpec spec_;
};

// Targets from a fixed random teacher network plus Gaussian noise:
//   y = tanh(x A^T) B^T / sqrt(teacher_width) * 2 + noise
// Inputs are N(0, 1). Batch `step` depends only on (data_seed, step).
struct RegressionTask {
  std::size_t input_dim = 16;
  std::size_t output_dim = 4;
  std::size_t batch_size = 32;
  std::size_t teacher_width = 32;
  double noise_stddev = 0.5;
  std::uint64_t teacher_seed = 7;

  Tensor teacher_a() const {
    return tensor_random(teacher_width, input_dim, NormalDist{0.0, 1.0 / std::sqrt(static_cast<double>(input_dim))},
                         teacher_seed);
  }
  Tensor teacher_b() const {
    return tensor_random(output_dim, teacher_width, NormalDist{0.0, 1.0}, mix_seed(teacher_seed, 1));
  }

  RegressionBatch batch(std::size_t step, std::uint64_t data_seed) const {
    Rng rng(mix_seed(data_seed, step));
    const Tensor x = tensor_random(batch_size, input_dim, NormalDist{}, rng);
    Tensor hid = tensor_matmul_ref(x, transpose(teacher_a()));
    for (auto& v : hid.data()) v = std::tanh(v);
    Tensor y = tensor_matmul_ref(hid, transpose(teacher_b()));
    const double gain = 2.0 / std::sqrt(static_cast<double>(teacher_width));
    for (auto& v : y.data()) v = gain * v + rng.normal(0.0, noise_stddev);
    return {x, y};
  }
};

}  // namespace fp8forge::train
