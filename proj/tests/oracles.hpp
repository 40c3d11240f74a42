// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference computations, written independently of the library
// code paths they check.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "fp8forge/tensor.hpp"

namespace fp8forge::oracle {

struct BitLayout {
  int exp_bits;
  int mant_bits;
  int bias;
  bool ieee_specials;  // false: only S.1..1.1..1 is NaN, no infinity
};

inline constexpr BitLayout kE4M3Layout{4, 3, 7, false};
inline constexpr BitLayout kE5M2Layout{5, 2, 15, true};

struct OracleValue {
  double value;
  bool is_nan;
  bool is_inf;
};

// Straight from the bit-field definition using pow, with no shared helpers.
inline OracleValue oracle_decode(unsigned code, const BitLayout& f) {
  const unsigned s = code >> 7;
  const unsigned e = (code >> f.mant_bits) & ((1u << f.exp_bits) - 1u);
  const unsigned m = code & ((1u << f.mant_bits) - 1u);
  const unsigned e_all = (1u << f.exp_bits) - 1u;
  const unsigned m_all = (1u << f.mant_bits) - 1u;
  const double sign = s ? -1.0 : 1.0;
  if (e == e_all) {
    if (f.ieee_specials) {
      if (m == 0) return {sign * std::numeric_limits<double>::infinity(), false, true};
      return {0.0, true, false};
    }
    if (m == m_all) return {0.0, true, false};
  }
  const double frac = static_cast<double>(m) / std::pow(2.0, f.mant_bits);
  if (e == 0) return {sign * frac * std::pow(2.0, 1 - f.bias), false, false};
  return {sign * (1.0 + frac) * std::pow(2.0, static_cast<int>(e) - f.bias), false, false};
}

// Value of the finite code nearest to x; ties go to the code with an even
// mantissa field. Values beyond the largest finite magnitude saturate.
inline double oracle_nearest(double x, const BitLayout& f) {
  double best = 0.0;
  double best_dist = std::numeric_limits<double>::infinity();
  unsigned best_code = 0;
  double max_finite = 0.0;
  for (unsigned c = 0; c < 256; ++c) {
    const auto v = oracle_decode(c, f);
    if (v.is_nan || v.is_inf) continue;
    max_finite = std::fmax(max_finite, v.value);
    const double d = std::fabs(v.value - x);
    const bool even = (c & 1u) == 0;
    if (d < best_dist || (d == best_dist && even && (best_code & 1u))) {
      best = v.value;
      best_dist = d;
      best_code = c;
    }
  }
  if (x > max_finite) return max_finite;
  if (x < -max_finite) return -max_finite;
  return best;
}

// Naive triple loop written without the library's transposed panel.
inline Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
      c(i, j) = acc;
    }
  }
  return c;
}

// Half the largest gap between consecutive non-negative finite values up to
// max finite, computed from the oracle table.
inline double oracle_unit_error(const BitLayout& f) {
  std::vector<double> vals;
  for (unsigned c = 0; c < 128; ++c) {
    const auto v = oracle_decode(c, f);
    if (!v.is_nan && !v.is_inf) vals.push_back(v.value);
  }
  double gap = 0.0;
  for (std::size_t i = 1; i < vals.size(); ++i) gap = std::fmax(gap, vals[i] - vals[i - 1]);
  return gap / 2.0;
}

}  // namespace fp8forge::oracle

namespace fp8forge::oracle {

// Elementwise bound on |Ahat.Bhat - A.B| given per-element operand error
// bounds eA, eB, plus a floating-point accumulation allowance for both
// products computed in binary64.
inline Tensor composed_gemm_bound(const Tensor& a, const Tensor& b, const Tensor& ea, const Tensor& eb) {
  Tensor out(a.rows(), b.cols());
  const double gamma = 4.0 * static_cast<double>(a.cols() + 1) * std::ldexp(1.0, -53);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double bound = 0.0, mag = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        const double aa = std::fabs(a(i, k)), bb = std::fabs(b(k, j));
        bound += aa * eb(k, j) + ea(i, k) * bb + ea(i, k) * eb(k, j);
        mag += 2.0 * (aa + ea(i, k)) * (bb + eb(k, j));
      }
      out(i, j) = bound + gamma * mag;
    }
  }
  return out;
}

}  // namespace fp8forge::oracle
