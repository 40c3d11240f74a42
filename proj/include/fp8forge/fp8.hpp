// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Software emulation of the E4M3 and E5M2 8-bit floating point formats and of
// the UE8M0 power-of-two scale format.
//
//   E4M3: S.EEEE.MMM, bias 7,  no infinity, NaN = S.1111.111, max 448
//   E5M2: S.EEEEE.MM, bias 15, IEEE-style specials,           max 57344
//   UE8M0: unsigned biased exponent, value = 2^(code - 127)

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "fp8forge/errors.hpp"
#include "fp8forge/instrumentation.hpp"

namespace fp8forge {

enum class Fp8Kind : std::uint8_t { kE4M3 = 0, kE5M2 = 1 };

enum class NanEncoding : std::uint8_t {
  // Only the all-ones exponent with all-ones mantissa is NaN (E4M3 "FN" variant).
  kAllOnes,
  // Whole top exponent is special: mantissa zero is infinity, otherwise NaN.
  kIeee,
};

struct Fp8Format {
  Fp8Kind kind;
  int exponent_bits;
  int mantissa_bits;
  int exponent_bias;
  double max_finite;
  bool has_infinity;
  NanEncoding nan_encoding;
  std::string_view name;

  constexpr int min_normal_exponent() const { return 1 - exponent_bias; }
  constexpr std::uint8_t max_finite_code() const {
    const unsigned top_exp = (1u << exponent_bits) - 1u;
    const unsigned mant_ones = (1u << mantissa_bits) - 1u;
    return nan_encoding == NanEncoding::kAllOnes
               ? static_cast<std::uint8_t>((top_exp << mantissa_bits) | (mant_ones - 1u))
               : static_cast<std::uint8_t>(((top_exp - 1u) << mantissa_bits) | mant_ones);
  }
  friend constexpr bool operator==(const Fp8Format& a, const Fp8Format& b) { return a.kind == b.kind; }
};

inline constexpr Fp8Format kE4M3{Fp8Kind::kE4M3, 4, 3, 7, 448.0, false, NanEncoding::kAllOnes, "e4m3"};
inline constexpr Fp8Format kE5M2{Fp8Kind::kE5M2, 5, 2, 15, 57344.0, true, NanEncoding::kIeee, "e5m2"};

static_assert(kE4M3.exponent_bits + kE4M3.mantissa_bits + 1 == 8);
static_assert(kE5M2.exponent_bits + kE5M2.mantissa_bits + 1 == 8);
static_assert(kE4M3.max_finite_code() == 0x7E);
static_assert(kE5M2.max_finite_code() == 0x7B);

inline const Fp8Format& format_of(Fp8Kind kind) { return kind == Fp8Kind::kE4M3 ? kE4M3 : kE5M2; }

inline const Fp8Format& parse_format(std::string_view name) {
  if (name == "e4m3" || name == "E4M3") return kE4M3;
  if (name == "e5m2" || name == "E5M2") return kE5M2;
  throw InvalidArgumentError("unknown format '" + std::string(name) + "'");
}

struct Fp8Code {
  std::uint8_t bits = 0;
  Fp8Kind kind = Fp8Kind::kE4M3;

  const Fp8Format& format() const { return format_of(kind); }
  friend constexpr bool operator==(const Fp8Code&, const Fp8Code&) = default;
};

enum class CodeClass : std::uint8_t { kFinite, kSubnormal, kZero, kNan, kInf };

constexpr std::string_view class_name(CodeClass c) {
  switch (c) {
    case CodeClass::kFinite: return "finite";
    case CodeClass::kSubnormal: return "subnormal";
    case CodeClass::kZero: return "zero";
    case CodeClass::kNan: return "nan";
    case CodeClass::kInf: return "inf";
  }
  return "?";
}

constexpr CodeClass classify_bits(std::uint8_t bits, const Fp8Format& fmt) {
  const unsigned mant_mask = (1u << fmt.mantissa_bits) - 1u;
  const unsigned top_exp = (1u << fmt.exponent_bits) - 1u;
  const unsigned exp_field = (bits >> fmt.mantissa_bits) & top_exp;
  const unsigned mant = bits & mant_mask;
  if (exp_field == top_exp) {
    if (fmt.nan_encoding == NanEncoding::kAllOnes) {
      if (mant == mant_mask) return CodeClass::kNan;
    } else {
      return mant == 0 ? CodeClass::kInf : CodeClass::kNan;
    }
  }
  if (exp_field == 0) return mant == 0 ? CodeClass::kZero : CodeClass::kSubnormal;
  return CodeClass::kFinite;
}

// Exact value of a code; NaN codes yield quiet NaN, infinity codes yield +/-inf.
inline double decode_bits(std::uint8_t bits, const Fp8Format& fmt) {
  const unsigned mant_mask = (1u << fmt.mantissa_bits) - 1u;
  const unsigned top_exp = (1u << fmt.exponent_bits) - 1u;
  const unsigned exp_field = (bits >> fmt.mantissa_bits) & top_exp;
  const unsigned mant = bits & mant_mask;
  const double sign = (bits & 0x80u) ? -1.0 : 1.0;
  switch (classify_bits(bits, fmt)) {
    case CodeClass::kNan: return std::numeric_limits<double>::quiet_NaN();
    case CodeClass::kInf: return sign * std::numeric_limits<double>::infinity();
    case CodeClass::kZero: return sign * 0.0;
    case CodeClass::kSubnormal:
      return sign * std::ldexp(static_cast<double>(mant), fmt.min_normal_exponent() - fmt.mantissa_bits);
    case CodeClass::kFinite: break;
  }
  const double significand = static_cast<double>((1u << fmt.mantissa_bits) | mant);
  return sign * std::ldexp(significand, static_cast<int>(exp_field) - fmt.exponent_bias - fmt.mantissa_bits);
}

inline double decode_fp8(Fp8Code code) { return decode_bits(code.bits, code.format()); }

namespace detail {

// Round-to-nearest, ties-to-even, independent of the floating point environment.
inline double round_half_even(double q) {
  const double f = std::floor(q);
  const double frac = q - f;
  if (frac > 0.5) return f + 1.0;
  if (frac < 0.5) return f;
  return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
}

// Encodes a non-NaN value without touching the instrumentation counters.
inline std::uint8_t encode_unchecked(double x, const Fp8Format& fmt) {
  const std::uint8_t sign = std::signbit(x) ? 0x80u : 0x00u;
  const double a = std::fabs(x);
  if (std::isinf(a)) {
    if (fmt.has_infinity) {
      return static_cast<std::uint8_t>(sign | (((1u << fmt.exponent_bits) - 1u) << fmt.mantissa_bits));
    }
    return static_cast<std::uint8_t>(sign | fmt.max_finite_code());
  }
  if (a >= fmt.max_finite) return static_cast<std::uint8_t>(sign | fmt.max_finite_code());
  if (a == 0.0) return sign;

  int e2 = 0;
  std::frexp(a, &e2);  // a = m * 2^e2, m in [0.5, 1)
  int exponent = e2 - 1;
  const int emin = fmt.min_normal_exponent();
  if (exponent < emin) exponent = emin;

  const int quantum_exp = exponent - fmt.mantissa_bits;
  double r = round_half_even(std::ldexp(a, -quantum_exp));
  const double implicit = static_cast<double>(1u << fmt.mantissa_bits);
  if (r >= 2.0 * implicit) {  // carried into the next binade
    r /= 2.0;
    ++exponent;
  }
  if (std::ldexp(r, exponent - fmt.mantissa_bits) > fmt.max_finite) {
    return static_cast<std::uint8_t>(sign | fmt.max_finite_code());
  }
  if (r < implicit) {  // subnormal (only reachable at emin)
    return static_cast<std::uint8_t>(sign | static_cast<unsigned>(r));
  }
  const unsigned exp_field = static_cast<unsigned>(exponent + fmt.exponent_bias);
  const unsigned mant = static_cast<unsigned>(r - implicit);
  return static_cast<std::uint8_t>(sign | (exp_field << fmt.mantissa_bits) | mant);
}

}  // namespace detail

// Nearest code to x (ties to even mantissa). Finite overflow saturates to
// +/-max_finite; infinity saturates unless the format has an infinity.
inline Fp8Code encode_fp8(double x, const Fp8Format& fmt) {
  if (std::isnan(x)) throw NonFiniteInputError("non-finite input: NaN passed to encode_fp8");
  detail::count_encodes(1);
  return Fp8Code{detail::encode_unchecked(x, fmt), fmt.kind};
}

// Decoded value of every code, indexed by the code byte.
inline const std::array<double, 256>& decode_lut(const Fp8Format& fmt) {
  static const auto make = [](const Fp8Format& f) {
    std::array<double, 256> lut{};
    for (unsigned c = 0; c < 256; ++c) lut[c] = decode_bits(static_cast<std::uint8_t>(c), f);
    return lut;
  };
  static const std::array<double, 256> e4m3 = make(kE4M3);
  static const std::array<double, 256> e5m2 = make(kE5M2);
  return fmt.kind == Fp8Kind::kE4M3 ? e4m3 : e5m2;
}

struct Fp8TableRow {
  std::uint8_t code;
  int sign;
  unsigned exponent_field;
  unsigned mantissa_field;
  double value;
  CodeClass code_class;
};

inline std::vector<Fp8TableRow> enumerate_format(const Fp8Format& fmt) {
  std::vector<Fp8TableRow> rows;
  rows.reserve(256);
  const unsigned mant_mask = (1u << fmt.mantissa_bits) - 1u;
  const unsigned exp_mask = (1u << fmt.exponent_bits) - 1u;
  for (unsigned c = 0; c < 256; ++c) {
    const auto bits = static_cast<std::uint8_t>(c);
    rows.push_back(Fp8TableRow{bits, static_cast<int>(c >> 7), (c >> fmt.mantissa_bits) & exp_mask, c & mant_mask,
                               decode_bits(bits, fmt), classify_bits(bits, fmt)});
  }
  return rows;
}

inline void write_format_csv(std::ostream& os, const std::vector<Fp8TableRow>& table) {
  static constexpr char kHex[] = "0123456789abcdef";
  os << "code_hex,sign,exponent_field,mantissa_field,value,class\n";
  char buf[64];
  for (const auto& row : table) {
    os << "0x" << kHex[row.code >> 4] << kHex[row.code & 0xF] << ',' << row.sign << ',' << row.exponent_field << ','
       << row.mantissa_field << ',';
    if (row.code_class == CodeClass::kNan) {
      os << "nan";
    } else if (row.code_class == CodeClass::kInf) {
      os << (row.sign ? "-inf" : "inf");
    } else {
      std::snprintf(buf, sizeof(buf), "%.17g", row.value);
      os << buf;
    }
    os << ',' << class_name(row.code_class) << '\n';
  }
}

// Largest distance between consecutive representable non-negative magnitudes
// up to max_finite. Half of it bounds the rounding error of in-range values.
inline double largest_code_gap(const Fp8Format& fmt) {
  double prev = 0.0;
  double gap = 0.0;
  for (const auto& row : enumerate_format(fmt)) {
    if (row.sign != 0) continue;
    if (row.code_class == CodeClass::kNan || row.code_class == CodeClass::kInf) continue;
    if (row.value > fmt.max_finite) continue;
    if (row.value - prev > gap) gap = row.value - prev;
    prev = row.value;
  }
  return gap;
}

class Ue8m0Scale {
 public:
  static constexpr int kBias = 127;
  static constexpr int kMinExponent = -127;
  static constexpr int kMaxExponent = 127;

  constexpr Ue8m0Scale() = default;
  static Ue8m0Scale from_exponent(int exponent) {
    if (exponent < kMinExponent || exponent > kMaxExponent) {
      throw InvalidArgumentError("UE8M0 exponent out of range: " + std::to_string(exponent));
    }
    return Ue8m0Scale(static_cast<std::uint8_t>(exponent + kBias));
  }
  static Ue8m0Scale from_code(std::uint8_t biased) {
    if (biased == 0xFF) throw InvalidArgumentError("UE8M0 code 0xff is NaN");
    return Ue8m0Scale(biased);
  }

  constexpr std::uint8_t biased_exponent() const { return biased_; }
  constexpr int exponent() const { return static_cast<int>(biased_) - kBias; }
  double value() const { return std::ldexp(1.0, exponent()); }
  friend constexpr bool operator==(const Ue8m0Scale&, const Ue8m0Scale&) = default;

 private:
  constexpr explicit Ue8m0Scale(std::uint8_t biased) : biased_(biased) {}
  std::uint8_t biased_ = kBias;
};

// Power-of-two scale 2^ceil(log2(a_max / d_max)) clamped to [-127, 127].
// The exponent is settled by exact comparisons against d_max * 2^e so that
// a_max / scale <= d_max holds even when the floating point log2 is inexact.
inline Ue8m0Scale ue8m0_from_ratio(double a_max, double d_max) {
  if (!(d_max > 0.0) || !std::isfinite(d_max)) throw InvalidArgumentError("ue8m0_from_ratio: d_max must be > 0");
  if (!(a_max >= 0.0) || !std::isfinite(a_max)) {
    throw NonFiniteInputError("ue8m0_from_ratio: a_max must be finite and >= 0");
  }
  if (a_max == 0.0) return Ue8m0Scale::from_exponent(Ue8m0Scale::kMinExponent);

  const double log_ratio = std::log2(a_max / d_max);  // -inf if the ratio underflows
  int exponent = static_cast<int>(std::clamp(std::ceil(log_ratio), -200.0, 200.0));
  while (exponent <= Ue8m0Scale::kMaxExponent && a_max > std::ldexp(d_max, exponent)) ++exponent;
  while (exponent > Ue8m0Scale::kMinExponent && a_max <= std::ldexp(d_max, exponent - 1)) --exponent;
  if (exponent < Ue8m0Scale::kMinExponent) exponent = Ue8m0Scale::kMinExponent;
  if (exponent > Ue8m0Scale::kMaxExponent) exponent = Ue8m0Scale::kMaxExponent;
  return Ue8m0Scale::from_exponent(exponent);
}

}  // namespace fp8forge
