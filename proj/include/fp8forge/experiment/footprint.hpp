// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Logical byte counts of training state under a 16-bit baseline and under
// the FP8 strategy. Closed-form counts only; allocator behaviour, workspace
// buffers and fragmentation are not modelled.
//
// Per tensor class (P = parameter count):
//   weights            baseline 2P          fp8 1P
//   weight scales      0                    ceil(P / bs^2) * scale width
//   activations        2 bytes per cached GEMM-input element, 1 for fp8
//   activation scales  0                    one scale per 1 x G row segment
//   master weights     4P                   4P
//   optimizer states   8P (two moments)     8P
//   weight gradients   4P                   4P
// Cached GEMM inputs per layer and token: 3*d_model (QKV, O, FF1 inputs)
// plus d_ff (FF2 input).

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fp8forge/errors.hpp"
#include "fp8forge/experiment/config.hpp"
#include "fp8forge/quantizer.hpp"

namespace fp8forge::experiment {

struct FootprintInput {
  // Defaults describe a dense model of about 1.5e9 parameters.
  std::uint64_t params = 0;  // 0: derive from the model dimensions
  std::size_t d_model = 1536;
  std::size_t d_ff = 8960;
  std::size_t n_layers = 28;
  std::size_t vocab = 151936;
  std::size_t context_length = 4096;
  std::size_t batch = 1;
  std::size_t weight_block = 128;
  std::size_t token_group = 128;
  ScaleFormat scale_format = ScaleFormat::kFp32;

  std::uint64_t parameter_count() const {
    if (params != 0) return params;
    const std::uint64_t d = d_model, f = d_ff;
    return n_layers * (4 * d * d + 2 * d * f) + 2 * static_cast<std::uint64_t>(vocab) * d;
  }

  void validate() const {
    if (parameter_count() == 0) throw InvalidArgumentError("footprint: need params or model dimensions");
    if (weight_block == 0 || token_group == 0) throw InvalidArgumentError("footprint: group sizes must be positive");
    if (n_layers > 0 && (d_model == 0 || d_ff == 0 || context_length == 0 || batch == 0)) {
      throw InvalidArgumentError("footprint: activation dimensions must be positive");
    }
  }
};

struct ClassBytes {
  std::string name;
  std::uint64_t baseline = 0;
  std::uint64_t fp8 = 0;
};

struct FootprintReport {
  FootprintInput input;
  std::vector<ClassBytes> classes;

  const ClassBytes& at(const std::string& name) const {
    for (const auto& c : classes) {
      if (c.name == name) return c;
    }
    throw InvalidArgumentError("footprint: no class '" + name + "'");
  }
  std::uint64_t baseline_total() const {
    std::uint64_t s = 0;
    for (const auto& c : classes) s += c.baseline;
    return s;
  }
  std::uint64_t fp8_total() const {
    std::uint64_t s = 0;
    for (const auto& c : classes) s += c.fp8;
    return s;
  }
  double weights_only_ratio() const {
    const auto& w = at("weights");
    return static_cast<double>(w.fp8) / static_cast<double>(w.baseline);
  }
  double total_ratio() const { return static_cast<double>(fp8_total()) / static_cast<double>(baseline_total()); }
};

inline std::uint64_t scale_width(ScaleFormat f) { return f == ScaleFormat::kFp32 ? 4 : 1; }

inline FootprintReport compute_footprint(const FootprintInput& in) {
  in.validate();
  const std::uint64_t p = in.parameter_count();
  const std::uint64_t sw = scale_width(in.scale_format);
  const auto ceil_div = [](std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; };
  const std::uint64_t block_area = static_cast<std::uint64_t>(in.weight_block) * in.weight_block;

  const std::uint64_t tokens = static_cast<std::uint64_t>(in.context_length) * in.batch;
  const std::uint64_t act_elems = in.n_layers * tokens * (3 * in.d_model + in.d_ff);
  const std::uint64_t act_groups =
      in.n_layers == 0 ? 0
                       : in.n_layers * tokens * (3 * ceil_div(in.d_model, in.token_group) + ceil_div(in.d_ff, in.token_group));

  FootprintReport r;
  r.input = in;
  r.classes = {
      {"weights", 2 * p, p},
      {"weight_scales", 0, ceil_div(p, block_area) * sw},
      {"activations", 2 * act_elems, act_elems},
      {"activation_scales", 0, act_groups * sw},
      {"master_weights", 4 * p, 4 * p},
      {"optimizer_states", 8 * p, 8 * p},
      {"weight_gradients", 4 * p, 4 * p},
  };
  return r;
}

inline FootprintInput read_footprint_input(FieldReader r) {
  FootprintInput in;
  in.params = r.u64("params", 0);
  in.d_model = static_cast<std::size_t>(r.u64("d_model", in.d_model));
  in.d_ff = static_cast<std::size_t>(r.u64("d_ff", in.d_ff));
  in.n_layers = static_cast<std::size_t>(r.u64("n_layers", in.n_layers));
  in.vocab = static_cast<std::size_t>(r.u64("vocab", in.vocab));
  in.context_length = r.positive("context_length", in.context_length);
  in.batch = r.positive("batch", in.batch);
  in.weight_block = r.positive("weight_block", in.weight_block);
  in.token_group = r.positive("token_group", in.token_group);
  in.scale_format = r.parsed("scale_format", "fp32", [](const std::string& v) { return parse_scale_format(v); });
  r.finish();
  try {
    in.validate();
  } catch (const InvalidArgumentError& e) {
    throw ConfigError(std::string("config error: ") + e.what());
  }
  return in;
}

inline json write_footprint_input(const FootprintInput& in) {
  return json{{"params", in.params},
              {"d_model", in.d_model},
              {"d_ff", in.d_ff},
              {"n_layers", in.n_layers},
              {"vocab", in.vocab},
              {"context_length", in.context_length},
              {"batch", in.batch},
              {"weight_block", in.weight_block},
              {"token_group", in.token_group},
              {"scale_format", scale_format_name(in.scale_format)}};
}

inline json footprint_json(const FootprintReport& r) {
  const auto ratio = [](std::uint64_t fp8, std::uint64_t base) {
    return base == 0 ? json(nullptr) : json(static_cast<double>(fp8) / static_cast<double>(base));
  };
  json classes = json::object();
  for (const auto& c : r.classes) {
    classes[c.name] = {{"baseline_bytes", c.baseline}, {"fp8_bytes", c.fp8}, {"ratio", ratio(c.fp8, c.baseline)}};
  }
  return json{{"parameter_count", r.input.parameter_count()},
              {"classes", classes},
              {"total", {{"baseline_bytes", r.baseline_total()},
                         {"fp8_bytes", r.fp8_total()},
                         {"ratio", ratio(r.fp8_total(), r.baseline_total())}}},
              {"weights_only_ratio", r.weights_only_ratio()}};
}

}  // namespace fp8forge::experiment
