// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>

#include "fp8forge/fp8.hpp"
#include "fp8forge/quantizer.hpp"

namespace fp8forge {

// Numerics of every quantized GEMM in a training step. Defaults: E4M3 for all
// operands, 128x128 weight blocks, 1x128 activation and gradient groups,
// UE8M0 scales.
struct PipelineConfig {
  Fp8Kind weight_format = Fp8Kind::kE4M3;
  Fp8Kind activation_format = Fp8Kind::kE4M3;
  Fp8Kind gradient_format = Fp8Kind::kE4M3;
  ScaleSpec weight_spec = ScaleSpec::per_block(128, ScaleFormat::kUe8m0);
  ScaleSpec activation_spec = ScaleSpec::per_token(128, ScaleFormat::kUe8m0);
  ScaleSpec gradient_spec = ScaleSpec::per_token(128, ScaleFormat::kUe8m0);
  std::optional<ScaleFormat> scale_format_override;
  bool quantization_enabled = true;
  // Route attention score (QK^T) and value (PV) products through FP8 too.
  bool quantize_attention_scores = false;

  static PipelineConfig reference() {
    PipelineConfig cfg;
    cfg.quantization_enabled = false;
    return cfg;
  }

  // Hybrid defaults with block and group size set to `group`.
  static PipelineConfig hybrid(std::size_t group, ScaleFormat scales = ScaleFormat::kUe8m0) {
    PipelineConfig cfg;
    cfg.weight_spec = ScaleSpec::per_block(group, scales);
    cfg.activation_spec = ScaleSpec::per_token(group, scales);
    cfg.gradient_spec = ScaleSpec::per_token(group, scales);
    return cfg;
  }

  ScaleSpec effective(const ScaleSpec& s) const {
    return scale_format_override ? s.with_scale_format(*scale_format_override) : s;
  }
  ScaleSpec effective_weight_spec() const { return effective(weight_spec); }
  ScaleSpec effective_activation_spec() const { return effective(activation_spec); }
  ScaleSpec effective_gradient_spec() const { return effective(gradient_spec); }
};

}  // namespace fp8forge
