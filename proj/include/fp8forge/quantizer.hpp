// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Amax-scaled FP8 quantization at per-tensor, per-block (bs x bs) and
// per-token (1 x G) granularity, with FP32 or UE8M0 scale factors.
//
// A group's scale is S = amax / V_max (FP32 scales, rounded to binary32) or
// the UE8M0 power of two at or above that ratio; each element is stored as
// encode(x / S) and reconstructed as decode(code) * S.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "fp8forge/binary_io.hpp"
#include "fp8forge/errors.hpp"
#include "fp8forge/fp8.hpp"
#include "fp8forge/instrumentation.hpp"
#include "fp8forge/tensor.hpp"

namespace fp8forge {

// kPerColumnGroup (G x 1 groups) is what a per-token tensor becomes when it is
// transposed; it is not normally requested directly.
enum class Granularity : std::uint8_t { kPerTensor = 0, kPerBlock = 1, kPerToken = 2, kPerColumnGroup = 3 };
enum class ScaleFormat : std::uint8_t { kFp32 = 0, kUe8m0 = 1 };

inline std::string_view granularity_name(Granularity g) {
  switch (g) {
    case Granularity::kPerTensor: return "per_tensor";
    case Granularity::kPerBlock: return "per_block";
    case Granularity::kPerToken: return "per_token";
    case Granularity::kPerColumnGroup: return "per_column_group";
  }
  return "?";
}

inline std::string_view scale_format_name(ScaleFormat f) { return f == ScaleFormat::kFp32 ? "fp32" : "ue8m0"; }

inline Granularity parse_granularity(std::string_view s) {
  if (s == "per_tensor") return Granularity::kPerTensor;
  if (s == "per_block") return Granularity::kPerBlock;
  if (s == "per_token") return Granularity::kPerToken;
  if (s == "per_column_group") return Granularity::kPerColumnGroup;
  throw InvalidArgumentError("unknown granularity '" + std::string(s) + "'");
}

inline ScaleFormat parse_scale_format(std::string_view s) {
  if (s == "fp32") return ScaleFormat::kFp32;
  if (s == "ue8m0") return ScaleFormat::kUe8m0;
  throw InvalidArgumentError("unknown scale format '" + std::string(s) + "'");
}

struct GroupLayout {
  std::size_t tile_rows;
  std::size_t tile_cols;
  std::size_t grid_rows;
  std::size_t grid_cols;

  std::size_t group_count() const { return grid_rows * grid_cols; }
  std::size_t group_of(std::size_t r, std::size_t c) const { return (r / tile_rows) * grid_cols + c / tile_cols; }
};

struct ScaleSpec {
  Granularity granularity = Granularity::kPerTensor;
  std::size_t group = 0;  // bs for per-block, G for per-token / per-column-group
  ScaleFormat scale_format = ScaleFormat::kUe8m0;

  static ScaleSpec per_tensor(ScaleFormat f = ScaleFormat::kUe8m0) { return {Granularity::kPerTensor, 0, f}; }
  static ScaleSpec per_block(std::size_t bs, ScaleFormat f = ScaleFormat::kUe8m0) {
    return {Granularity::kPerBlock, bs, f};
  }
  static ScaleSpec per_token(std::size_t g, ScaleFormat f = ScaleFormat::kUe8m0) {
    return {Granularity::kPerToken, g, f};
  }
  static ScaleSpec per_column_group(std::size_t g, ScaleFormat f = ScaleFormat::kUe8m0) {
    return {Granularity::kPerColumnGroup, g, f};
  }

  void validate() const {
    if (granularity != Granularity::kPerTensor && group < 1) {
      throw InvalidArgumentError("scale spec: block/group size must be >= 1");
    }
  }

  ScaleSpec with_scale_format(ScaleFormat f) const { return {granularity, group, f}; }

  // Spec describing the same groups after the tensor is transposed.
  ScaleSpec transposed() const {
    switch (granularity) {
      case Granularity::kPerToken: return {Granularity::kPerColumnGroup, group, scale_format};
      case Granularity::kPerColumnGroup: return {Granularity::kPerToken, group, scale_format};
      default: return *this;
    }
  }

  GroupLayout layout(std::size_t rows, std::size_t cols) const {
    validate();
    auto ceil_div = [](std::size_t a, std::size_t b) { return (a + b - 1) / b; };
    switch (granularity) {
      case Granularity::kPerTensor:
        return {std::max<std::size_t>(rows, 1), std::max<std::size_t>(cols, 1), 1, 1};
      case Granularity::kPerBlock: return {group, group, ceil_div(rows, group), ceil_div(cols, group)};
      case Granularity::kPerToken: return {1, group, rows, ceil_div(cols, group)};
      case Granularity::kPerColumnGroup: return {group, 1, ceil_div(rows, group), cols};
    }
    throw InvalidArgumentError("scale spec: bad granularity");
  }

  std::string to_string() const {
    std::string s(granularity_name(granularity));
    if (granularity != Granularity::kPerTensor) s += "(" + std::to_string(group) + ")";
    s += "/";
    s += scale_format_name(scale_format);
    return s;
  }

  friend bool operator==(const ScaleSpec&, const ScaleSpec&) = default;
};

// S = amax / V_max at the requested scale precision. A zero amax maps to
// the smallest positive scale of the format so that every code is zero.
inline double compute_scale(double block_amax, const Fp8Format& fmt, ScaleFormat scale_format) {
  if (!std::isfinite(block_amax) || block_amax < 0.0) {
    throw NonFiniteInputError("compute_scale: amax must be finite and >= 0");
  }
  if (scale_format == ScaleFormat::kUe8m0) return ue8m0_from_ratio(block_amax, fmt.max_finite).value();
  constexpr double kMin = std::numeric_limits<float>::min();
  constexpr double kMax = std::numeric_limits<float>::max();
  if (block_amax == 0.0) return kMin;
  const double s = static_cast<double>(static_cast<float>(block_amax / fmt.max_finite));
  return std::clamp(s, kMin, kMax);
}

class QuantizedTensor {
 public:
  QuantizedTensor() = default;
  QuantizedTensor(std::size_t rows, std::size_t cols, ScaleSpec spec, Fp8Kind format, std::vector<std::uint8_t> codes,
                  std::vector<double> scales)
      : rows_(rows), cols_(cols), spec_(spec), format_(format), codes_(std::move(codes)), scales_(std::move(scales)) {
    const auto lay = layout();
    if (codes_.size() != rows_ * cols_) throw ShapeMismatchError("quantized tensor: code count mismatch");
    if (scales_.size() != lay.group_count()) throw ShapeMismatchError("quantized tensor: scale grid mismatch");
    for (double s : scales_) {
      if (!(s > 0.0)) throw InvalidArgumentError("quantized tensor: scales must be > 0");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  const ScaleSpec& spec() const { return spec_; }
  const Fp8Format& format() const { return format_of(format_); }
  GroupLayout layout() const { return spec_.layout(rows_, cols_); }

  std::span<const std::uint8_t> codes() const { return codes_; }
  std::span<std::uint8_t> mutable_codes() { return codes_; }
  std::span<const double> scales() const { return scales_; }

  std::uint8_t code(std::size_t r, std::size_t c) const { return codes_[r * cols_ + c]; }
  double scale_at(std::size_t r, std::size_t c) const { return scales_[layout().group_of(r, c)]; }

  // UE8M0 byte for a scale entry; only meaningful for UE8M0 tensors.
  std::uint8_t ue8m0_code(std::size_t group) const {
    int e = 0;
    std::frexp(scales_[group], &e);
    return Ue8m0Scale::from_exponent(e - 1).biased_exponent();
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  ScaleSpec spec_{};
  Fp8Kind format_ = Fp8Kind::kE4M3;
  std::vector<std::uint8_t> codes_;
  std::vector<double> scales_;
};

// Quantizes every group of `t`. If `role` is given, the element encodes are
// attributed to it in the instrumentation counters.
inline QuantizedTensor quantize(const Tensor& t, const ScaleSpec& spec, const Fp8Format& fmt,
                                std::optional<TensorRole> role = std::nullopt) {
  if (const auto bad = first_non_finite(t); bad != t.size()) {
    throw NonFiniteInputError("quantize: non-finite entry at index " + std::to_string(bad) + " (row " +
                                  std::to_string(bad / t.cols()) + ", col " + std::to_string(bad % t.cols()) + ")",
                              bad);
  }
  const GroupLayout lay = spec.layout(t.rows(), t.cols());
  std::vector<double> amax(lay.group_count(), 0.0);
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      double& m = amax[lay.group_of(r, c)];
      m = std::fmax(m, std::fabs(t(r, c)));
    }
  }
  std::vector<double> scales(lay.group_count());
  for (std::size_t g = 0; g < scales.size(); ++g) scales[g] = compute_scale(amax[g], fmt, spec.scale_format);

  std::vector<std::uint8_t> codes(t.size());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) {
      const std::size_t g = lay.group_of(r, c);
      codes[r * t.cols() + c] = amax[g] == 0.0 ? 0u : detail::encode_unchecked(t(r, c) / scales[g], fmt);
    }
  }
  {
    std::optional<TensorRoleScope> scope;
    if (role) scope.emplace(*role);
    detail::count_encodes(t.size());
  }
  return QuantizedTensor(t.rows(), t.cols(), spec, fmt.kind, std::move(codes), std::move(scales));
}

inline Tensor dequantize(const QuantizedTensor& q) {
  const auto& lut = decode_lut(q.format());
  const GroupLayout lay = q.layout();
  Tensor out(q.rows(), q.cols());
  const auto codes = q.codes();
  const auto scales = q.scales();
  for (std::size_t r = 0; r < q.rows(); ++r) {
    for (std::size_t c = 0; c < q.cols(); ++c) {
      out(r, c) = lut[codes[r * q.cols() + c]] * scales[lay.group_of(r, c)];
    }
  }
  return out;
}

inline QuantizedTensor regranularize(const QuantizedTensor& q, const ScaleSpec& new_spec) {
  return quantize(dequantize(q), new_spec, q.format());
}

// Structural transpose: codes and scale grid are transposed, no re-rounding.
inline QuantizedTensor transpose(const QuantizedTensor& q) {
  const GroupLayout lay = q.layout();
  std::vector<std::uint8_t> codes(q.rows() * q.cols());
  for (std::size_t r = 0; r < q.rows(); ++r) {
    for (std::size_t c = 0; c < q.cols(); ++c) codes[c * q.rows() + r] = q.code(r, c);
  }
  std::vector<double> scales(lay.group_count());
  for (std::size_t i = 0; i < lay.grid_rows; ++i) {
    for (std::size_t j = 0; j < lay.grid_cols; ++j) scales[j * lay.grid_rows + i] = q.scales()[i * lay.grid_cols + j];
  }
  return QuantizedTensor(q.cols(), q.rows(), q.spec().transposed(), q.format().kind, std::move(codes),
                         std::move(scales));
}

// Half the largest representable gap below V_max: the per-unit-scale rounding
// error bound for in-range values.
inline double unit_error_bound(const Fp8Format& fmt) {
  static const double e4m3 = largest_code_gap(kE4M3) / 2.0;
  static const double e5m2 = largest_code_gap(kE5M2) / 2.0;
  return fmt.kind == Fp8Kind::kE4M3 ? e4m3 : e5m2;
}

// Per-element bound S_group * u on |x - dequantize(quantize(x))|.
inline Tensor error_bound_tensor(const QuantizedTensor& q) {
  const double u = unit_error_bound(q.format());
  const GroupLayout lay = q.layout();
  Tensor out(q.rows(), q.cols());
  for (std::size_t r = 0; r < q.rows(); ++r) {
    for (std::size_t c = 0; c < q.cols(); ++c) out(r, c) = q.scales()[lay.group_of(r, c)] * u;
  }
  return out;
}

// Elements whose scaled magnitude exceeded V_max and were clipped.
inline std::size_t clipped_count(const Tensor& source, const QuantizedTensor& q) {
  require_same_shape(source, Tensor(q.rows(), q.cols()), "clipped_count");
  const GroupLayout lay = q.layout();
  const double vmax = q.format().max_finite;
  std::size_t n = 0;
  for (std::size_t r = 0; r < q.rows(); ++r) {
    for (std::size_t c = 0; c < q.cols(); ++c) {
      if (std::fabs(source(r, c)) / q.scales()[lay.group_of(r, c)] > vmax) ++n;
    }
  }
  return n;
}

// FPQ1: "FPQ1", u32 rows, u32 cols, u8 granularity, u32 bs-or-G,
// u8 scale format, u8 fp8 format, scale grid (binary32 or UE8M0 bytes),
// rows*cols code bytes. Little-endian throughout.
inline constexpr std::string_view kQuantizedMagic = "FPQ1";

inline void encode_quantized(io::ByteWriter& w, const QuantizedTensor& q) {
  w.bytes(kQuantizedMagic);
  w.u32(static_cast<std::uint32_t>(q.rows()));
  w.u32(static_cast<std::uint32_t>(q.cols()));
  w.u8(static_cast<std::uint8_t>(q.spec().granularity));
  w.u32(static_cast<std::uint32_t>(q.spec().group));
  w.u8(static_cast<std::uint8_t>(q.spec().scale_format));
  w.u8(static_cast<std::uint8_t>(q.format().kind));
  for (std::size_t g = 0; g < q.scales().size(); ++g) {
    if (q.spec().scale_format == ScaleFormat::kFp32) {
      w.f32(static_cast<float>(q.scales()[g]));
    } else {
      w.u8(q.ue8m0_code(g));
    }
  }
  for (auto c : q.codes()) w.u8(c);
}

inline QuantizedTensor decode_quantized(io::ByteReader& r) {
  if (r.remaining() < 4 || r.bytes(4) != kQuantizedMagic) {
    throw BadMagicError("bad magic: not an FPQ1 quantized tensor file");
  }
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  const auto gran = r.u8();
  const std::size_t group = r.u32();
  const auto sfmt = r.u8();
  const auto kind = r.u8();
  if (gran > 3 || sfmt > 1 || kind > 1) throw InvalidArgumentError("FPQ1: invalid tag byte");
  const ScaleSpec spec{static_cast<Granularity>(gran), group, static_cast<ScaleFormat>(sfmt)};
  const GroupLayout lay = spec.layout(rows, cols);
  std::vector<double> scales(lay.group_count());
  for (auto& s : scales) {
    s = spec.scale_format == ScaleFormat::kFp32 ? static_cast<double>(r.f32()) : Ue8m0Scale::from_code(r.u8()).value();
  }
  if (r.remaining() < rows * cols) throw TruncatedPayloadError("truncated payload");
  std::vector<std::uint8_t> codes(rows * cols);
  for (auto& c : codes) c = r.u8();
  return QuantizedTensor(rows, cols, spec, static_cast<Fp8Kind>(kind), std::move(codes), std::move(scales));
}

inline void quantized_save(const QuantizedTensor& q, const std::filesystem::path& path) {
  io::ByteWriter w;
  encode_quantized(w, q);
  io::write_file_atomic(path, w.buffer());
}

inline QuantizedTensor quantized_load(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  io::ByteReader r(data);
  return decode_quantized(r);
}

}  // namespace fp8forge
