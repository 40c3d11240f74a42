// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// GEMMs over quantized operands and the three GEMMs of a linear layer's
// training step:
//
//   FProp  y  = Q(x) . Q(w)^T           x: (n, d_in), w: (d_out, d_in)
//   Dgrad  dx = Q(dy) . Q(w)            dy: (n, d_out)
//   Wgrad  dw = Q(dy)^T . Q(x)
//
// Forward operands are cached and reused by the backward GEMMs; the output
// gradient is quantized once per backward call. Outputs stay in 64-bit.

#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "fp8forge/errors.hpp"
#include "fp8forge/pipeline_config.hpp"
#include "fp8forge/quantizer.hpp"
#include "fp8forge/tensor.hpp"

namespace fp8forge {

// Product of two quantized operands, bitwise-equal to
// tensor_matmul_ref(dequantize(a), dequantize(b)). Decoded values times
// their group scale are exact in binary64, so operands are expanded into
// panels once and accumulated in the reference order.
inline Tensor scaled_matmul(const QuantizedTensor& a, const QuantizedTensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeMismatchError("scaled_matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                             std::to_string(b.rows()) + ")");
  }
  const std::size_t n = a.rows(), k_dim = a.cols(), m = b.cols();
  const auto& lut_a = decode_lut(a.format());
  const auto& lut_b = decode_lut(b.format());
  const GroupLayout la = a.layout();
  const GroupLayout lb = b.layout();

  std::vector<double> a_panel(n * k_dim);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < k_dim; ++k) {
      a_panel[i * k_dim + k] = lut_a[a.code(i, k)] * a.scales()[la.group_of(i, k)];
    }
  }
  // Column panel of b, stored so that column j is contiguous over k.
  std::vector<double> b_panel(m * k_dim);
  for (std::size_t k = 0; k < k_dim; ++k) {
    for (std::size_t j = 0; j < m; ++j) {
      b_panel[j * k_dim + k] = lut_b[b.code(k, j)] * b.scales()[lb.group_of(k, j)];
    }
  }

  Tensor c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a_panel.data() + i * k_dim;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bc = b_panel.data() + j * k_dim;
      double acc = 0.0;
      for (std::size_t k = 0; k < k_dim; ++k) acc += ar[k] * bc[k];
      c(i, j) = acc;
    }
  }
  return c;
}

// A GEMM operand: raw 64-bit when quantization is off, quantized otherwise.
using Operand = std::variant<Tensor, QuantizedTensor>;

inline bool is_quantized(const Operand& op) { return std::holds_alternative<QuantizedTensor>(op); }

inline std::size_t operand_rows(const Operand& op) {
  return std::visit([](const auto& t) { return t.rows(); }, op);
}
inline std::size_t operand_cols(const Operand& op) {
  return std::visit([](const auto& t) { return t.cols(); }, op);
}

inline Operand transpose(const Operand& op) {
  return std::visit([](const auto& t) -> Operand { return transpose(t); }, op);
}

// High-precision view of an operand (dequantized if needed).
inline Tensor materialize(const Operand& op) {
  if (const auto* q = std::get_if<QuantizedTensor>(&op)) return dequantize(*q);
  return std::get<Tensor>(op);
}

inline Operand make_operand(const Tensor& t, const ScaleSpec& spec, Fp8Kind fmt, TensorRole role, bool quantized) {
  if (!quantized) return t;
  return quantize(t, spec, format_of(fmt), role);
}

inline Tensor operand_matmul(const Operand& a, const Operand& b) {
  if (is_quantized(a) != is_quantized(b)) {
    throw InvalidArgumentError("operand_matmul: cannot mix quantized and raw operands");
  }
  if (is_quantized(a)) return scaled_matmul(std::get<QuantizedTensor>(a), std::get<QuantizedTensor>(b));
  return tensor_matmul_ref(std::get<Tensor>(a), std::get<Tensor>(b));
}

struct LinearForward {
  Tensor y;
  Operand x_q;
  Operand w_q;
};

struct LinearGrads {
  Tensor dx;
  Tensor dw;
};

inline LinearForward linear_fprop(const Tensor& x, const Tensor& w, const PipelineConfig& cfg) {
  if (x.cols() != w.cols()) {
    throw ShapeMismatchError("linear_fprop: x is (" + std::to_string(x.rows()) + ", " + std::to_string(x.cols()) +
                             ") but w is (" + std::to_string(w.rows()) + ", " + std::to_string(w.cols()) + ")");
  }
  const bool q = cfg.quantization_enabled;
  Operand x_op = make_operand(x, cfg.effective_activation_spec(), cfg.activation_format, TensorRole::kActivation, q);
  Operand w_op = make_operand(w, cfg.effective_weight_spec(), cfg.weight_format, TensorRole::kWeight, q);
  Tensor y = operand_matmul(x_op, transpose(w_op));
  return {std::move(y), std::move(x_op), std::move(w_op)};
}

inline Operand quantize_output_gradient(const Tensor& dy, const PipelineConfig& cfg) {
  return make_operand(dy, cfg.effective_gradient_spec(), cfg.gradient_format, TensorRole::kOutputGradient,
                      cfg.quantization_enabled);
}

inline Tensor linear_dgrad(const Tensor& dy, const Operand& w_q, const PipelineConfig& cfg) {
  if (dy.cols() != operand_rows(w_q)) throw ShapeMismatchError("linear_dgrad: dy cols must equal w rows");
  return operand_matmul(quantize_output_gradient(dy, cfg), w_q);
}

inline Tensor linear_wgrad(const Tensor& dy, const Operand& x_q, const PipelineConfig& cfg) {
  if (dy.rows() != operand_rows(x_q)) throw ShapeMismatchError("linear_wgrad: dy rows must equal x rows");
  return operand_matmul(transpose(quantize_output_gradient(dy, cfg)), x_q);
}

// Dgrad and Wgrad sharing one quantization of dy.
inline LinearGrads linear_backward(const Tensor& dy, const LinearForward& fwd, const PipelineConfig& cfg,
                                   bool need_dx = true) {
  if (dy.rows() != operand_rows(fwd.x_q) || dy.cols() != operand_rows(fwd.w_q)) {
    throw ShapeMismatchError("linear_backward: dy shape does not match the cached forward");
  }
  const Operand dy_q = quantize_output_gradient(dy, cfg);
  LinearGrads g;
  if (need_dx) g.dx = operand_matmul(dy_q, fwd.w_q);
  g.dw = operand_matmul(transpose(dy_q), fwd.x_q);
  return g;
}

}  // namespace fp8forge
