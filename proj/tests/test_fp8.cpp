// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <thread>

#include "fp8forge/fp8.hpp"
#include "fp8forge/tensor.hpp"
#include "oracles.hpp"

namespace fp8forge {
namespace {

using oracle::kE4M3Layout;
using oracle::kE5M2Layout;

TEST(Fp8Encode, ZeroAndMaxFinite) {
  EXPECT_EQ(encode_fp8(0.0, kE4M3).bits, 0x00);
  EXPECT_EQ(encode_fp8(448.0, kE4M3).bits, 0x7E);
  EXPECT_EQ(encode_fp8(57344.0, kE5M2).bits, 0x7B);
  EXPECT_EQ(encode_fp8(-448.0, kE4M3).bits, 0xFE);
}

TEST(Fp8Encode, SaturatesBeyondMaxFinite) {
  EXPECT_EQ(encode_fp8(500.0, kE4M3).bits, 0x7E);
  EXPECT_EQ(encode_fp8(-1e30, kE4M3).bits, 0xFE);
  EXPECT_EQ(encode_fp8(61440.0, kE5M2).bits, 0x7B);
  EXPECT_EQ(encode_fp8(1e300, kE5M2).bits, 0x7B);
}

TEST(Fp8Encode, InfinityPolicy) {
  const double inf = std::numeric_limits<double>::infinity();
  EXPECT_EQ(encode_fp8(inf, kE4M3).bits, 0x7E);
  EXPECT_EQ(encode_fp8(-inf, kE4M3).bits, 0xFE);
  EXPECT_EQ(encode_fp8(inf, kE5M2).bits, 0x7C);
  EXPECT_EQ(encode_fp8(-inf, kE5M2).bits, 0xFC);
}

TEST(Fp8Encode, NanRejected) {
  try {
    encode_fp8(std::nan(""), kE4M3);
    FAIL() << "expected NonFiniteInputError";
  } catch (const NonFiniteInputError& e) {
    EXPECT_NE(std::string(e.what()).find("non-finite input"), std::string::npos);
  }
}

TEST(Fp8Encode, TiesToEven) {
  // 1.0 = 0x38, next is 1.125 (mantissa 001); midpoint 1.0625 goes to 1.0.
  EXPECT_EQ(decode_fp8(encode_fp8(1.0625, kE4M3)), 1.0);
  // 1.1875 sits between 1.125 (odd) and 1.25 (even).
  EXPECT_EQ(decode_fp8(encode_fp8(1.1875, kE4M3)), 1.25);
  // Smallest subnormal is 2^-9; half of it ties to zero.
  EXPECT_EQ(decode_fp8(encode_fp8(std::ldexp(1.0, -10), kE4M3)), 0.0);
  EXPECT_EQ(decode_fp8(encode_fp8(3.0 * std::ldexp(1.0, -10), kE4M3)), std::ldexp(2.0, -9));
}

TEST(Fp8Decode, KnownCodes) {
  EXPECT_EQ(decode_bits(0x00, kE4M3), 0.0);
  EXPECT_EQ(decode_bits(0x7E, kE4M3), 448.0);
  EXPECT_TRUE(std::isnan(decode_bits(0x7F, kE4M3)));
  EXPECT_TRUE(std::isnan(decode_bits(0xFF, kE4M3)));
  EXPECT_EQ(decode_bits(0x01, kE4M3), std::ldexp(1.0, -9));
  EXPECT_EQ(decode_bits(0x7B, kE5M2), 57344.0);
  EXPECT_TRUE(std::isinf(decode_bits(0x7C, kE5M2)));
  EXPECT_TRUE(std::isnan(decode_bits(0x7D, kE5M2)));
  EXPECT_EQ(decode_bits(0x01, kE5M2), std::ldexp(1.0, -16));
}

void expect_table_matches_oracle(const Fp8Format& fmt, const oracle::BitLayout& layout) {
  const auto table = enumerate_format(fmt);
  ASSERT_EQ(table.size(), 256u);
  for (unsigned c = 0; c < 256; ++c) {
    const auto o = oracle::oracle_decode(c, layout);
    const auto& row = table[c];
    EXPECT_EQ(row.code, c);
    if (o.is_nan) {
      EXPECT_EQ(row.code_class, CodeClass::kNan) << c;
    } else if (o.is_inf) {
      EXPECT_EQ(row.code_class, CodeClass::kInf) << c;
      EXPECT_EQ(row.value, o.value);
    } else {
      EXPECT_EQ(row.value, o.value) << "code " << c;
    }
  }
}

TEST(Fp8Table, MatchesBitSemanticsOracle) {
  expect_table_matches_oracle(kE4M3, kE4M3Layout);
  expect_table_matches_oracle(kE5M2, kE5M2Layout);
}

TEST(Fp8Table, MaxFiniteAndSpecialCounts) {
  for (const auto* fmt : {&kE4M3, &kE5M2}) {
    const auto table = enumerate_format(*fmt);
    double max_finite = 0.0;
    int nan = 0, inf = 0;
    for (const auto& r : table) {
      if (r.code_class == CodeClass::kNan) ++nan;
      else if (r.code_class == CodeClass::kInf) ++inf;
      else max_finite = std::fmax(max_finite, r.value);
    }
    EXPECT_EQ(max_finite, fmt->max_finite);
    EXPECT_EQ(decode_bits(fmt->max_finite_code(), *fmt), fmt->max_finite);
    if (fmt->kind == Fp8Kind::kE4M3) {
      EXPECT_EQ(nan, 2);
      EXPECT_EQ(inf, 0);
    } else {
      EXPECT_EQ(nan, 6);
      EXPECT_EQ(inf, 2);
    }
  }
}

TEST(Fp8Table, MonotoneWithinSign) {
  for (const auto* fmt : {&kE4M3, &kE5M2}) {
    const auto table = enumerate_format(*fmt);
    for (unsigned c = 1; c < 128; ++c) {
      const auto& prev = table[c - 1];
      const auto& cur = table[c];
      if (cur.code_class == CodeClass::kNan || cur.code_class == CodeClass::kInf) continue;
      EXPECT_GT(cur.value, prev.value) << fmt->name << " code " << c;
      EXPECT_LT(table[c + 128].value, table[c + 127].value) << fmt->name << " code " << c + 128;
    }
  }
}

TEST(Fp8Table, CsvExport) {
  std::ostringstream os;
  write_format_csv(os, enumerate_format(kE5M2));
  const std::string csv = os.str();
  EXPECT_EQ(csv.rfind("code_hex,sign,exponent_field,mantissa_field,value,class\n", 0), 0u);
  EXPECT_NE(csv.find("0x7b,0,30,3,57344,finite"), std::string::npos);
  EXPECT_NE(csv.find("0x7c,0,31,0,inf,inf"), std::string::npos);
  EXPECT_NE(csv.find("0xfc,1,31,0,-inf,inf"), std::string::npos);
  EXPECT_NE(csv.find("0x01,0,0,1,1.52587890625e-05,subnormal"), std::string::npos);
}

// decode(encode(x)) is the nearest representable value, checked against a
// brute-force scan of the oracle code table.
void expect_nearest_property(const Fp8Format& fmt, const oracle::BitLayout& layout, std::uint64_t seed) {
  Rng rng(seed);
  for (int i = 0; i < 10000; ++i) {
    // Mix of uniform over the whole range and log-uniform magnitudes to hit
    // the subnormal and small-normal binades.
    double x = i % 2 == 0 ? rng.uniform(-fmt.max_finite, fmt.max_finite)
                          : std::ldexp(rng.uniform(1.0, 2.0), static_cast<int>(rng.below(40)) - 20);
    if (i % 4 == 1) x = -x;
    const double got = decode_fp8(encode_fp8(x, fmt));
    const double want = oracle::oracle_nearest(x, layout);
    ASSERT_EQ(got, want) << "x=" << x;
  }
}

TEST(Fp8Encode, NearestCodeProperty) {
  expect_nearest_property(kE4M3, kE4M3Layout, 11);
  expect_nearest_property(kE5M2, kE5M2Layout, 12);
}

TEST(Fp8Encode, RoundTripsEveryFiniteCode) {
  for (const auto* fmt : {&kE4M3, &kE5M2}) {
    for (unsigned c = 0; c < 256; ++c) {
      const auto bits = static_cast<std::uint8_t>(c);
      const auto cls = classify_bits(bits, *fmt);
      if (cls == CodeClass::kNan || cls == CodeClass::kInf) continue;
      EXPECT_EQ(encode_fp8(decode_bits(bits, *fmt), *fmt).bits, bits) << fmt->name << " " << c;
    }
  }
}

TEST(Fp8Encode, SaturationProperty) {
  Rng rng(5);
  for (const auto* fmt : {&kE4M3, &kE5M2}) {
    for (int i = 0; i < 2000; ++i) {
      const double mag = fmt->max_finite * (1.0 + rng.uniform(1e-12, 1e6));
      EXPECT_EQ(decode_fp8(encode_fp8(mag, *fmt)), fmt->max_finite);
      EXPECT_EQ(decode_fp8(encode_fp8(-mag, *fmt)), -fmt->max_finite);
    }
  }
}

TEST(Fp8Encode, DeterministicAcrossThreads) {
  std::vector<double> xs;
  Rng rng(99);
  for (int i = 0; i < 4096; ++i) xs.push_back(rng.uniform(-500.0, 500.0));
  auto run = [&] {
    std::vector<std::uint8_t> out;
    for (double x : xs) out.push_back(encode_fp8(x, kE4M3).bits);
    return out;
  };
  const auto base = run();
  std::vector<std::uint8_t> a, b;
  std::thread t1([&] { a = run(); });
  std::thread t2([&] { b = run(); });
  t1.join();
  t2.join();
  EXPECT_EQ(a, base);
  EXPECT_EQ(b, base);
}

TEST(Ue8m0, Examples) {
  auto s = ue8m0_from_ratio(448.0, 448.0);
  EXPECT_EQ(s.value(), 1.0);
  EXPECT_EQ(s.biased_exponent(), 127);
  EXPECT_EQ(ue8m0_from_ratio(1344.0, 448.0).value(), 4.0);
  const auto z = ue8m0_from_ratio(0.0, 448.0);
  EXPECT_EQ(z.exponent(), -127);
  EXPECT_EQ(z.biased_exponent(), 0);
  EXPECT_EQ(z.value(), std::ldexp(1.0, -127));
}

TEST(Ue8m0, Errors) {
  EXPECT_THROW(ue8m0_from_ratio(1.0, 0.0), InvalidArgumentError);
  EXPECT_THROW(ue8m0_from_ratio(1.0, -2.0), InvalidArgumentError);
  EXPECT_THROW(ue8m0_from_ratio(std::nan(""), 448.0), NonFiniteInputError);
  EXPECT_THROW(ue8m0_from_ratio(-1.0, 448.0), NonFiniteInputError);
  EXPECT_THROW(Ue8m0Scale::from_code(0xFF), InvalidArgumentError);
}

TEST(Ue8m0, ClampsExponentRange) {
  EXPECT_EQ(ue8m0_from_ratio(std::ldexp(1.0, -1000), 448.0).exponent(), -127);
  EXPECT_EQ(ue8m0_from_ratio(std::ldexp(1.0, 1000), 448.0).exponent(), 127);
  EXPECT_EQ(ue8m0_from_ratio(std::numeric_limits<double>::denorm_min(), 448.0).exponent(), -127);
}

TEST(Ue8m0, RoundUpGuaranteeAndTightness) {
  Rng rng(2024);
  int tight_violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const double a_max = std::ldexp(rng.uniform(1.0, 2.0), static_cast<int>(rng.below(241)) - 120);
    const auto s = ue8m0_from_ratio(a_max, kE4M3.max_finite);
    ASSERT_LE(a_max / s.value(), kE4M3.max_finite) << a_max;
    const double ratio = a_max / kE4M3.max_finite;
    int e = 0;
    const double m = std::frexp(ratio, &e);
    if (m != 0.5 && s.exponent() > Ue8m0Scale::kMinExponent) {
      // Half the scale is too small: the round-up is minimal.
      EXPECT_GT(a_max / (s.value() / 2.0), kE4M3.max_finite);
      ++tight_violations;
    }
  }
  EXPECT_GT(tight_violations, 0);
}

TEST(Ue8m0, ExactPowerOfTwoRatioEdges) {
  // Ratios exactly 2^k keep exponent k; one ulp above moves to k+1.
  for (int k = -100; k <= 100; k += 7) {
    const double a = std::ldexp(448.0, k);
    EXPECT_EQ(ue8m0_from_ratio(a, 448.0).exponent(), k);
    EXPECT_EQ(ue8m0_from_ratio(std::nextafter(a, 1e308), 448.0).exponent(), k + 1);
    EXPECT_EQ(ue8m0_from_ratio(std::nextafter(a, 0.0), 448.0).exponent(), k);
  }
}

TEST(Fp8Format, LargestCodeGap) {
  EXPECT_EQ(largest_code_gap(kE4M3), 32.0);      // 416 -> 448
  EXPECT_EQ(largest_code_gap(kE5M2), 8192.0);    // 49152 -> 57344
  EXPECT_EQ(largest_code_gap(kE4M3) / 2.0, oracle::oracle_unit_error(kE4M3Layout));
  EXPECT_EQ(largest_code_gap(kE5M2) / 2.0, oracle::oracle_unit_error(kE5M2Layout));
}

TEST(Fp8Format, ParseNames) {
  EXPECT_EQ(parse_format("e4m3").kind, Fp8Kind::kE4M3);
  EXPECT_EQ(parse_format("E5M2").kind, Fp8Kind::kE5M2);
  EXPECT_THROW(parse_format("e3m4"), InvalidArgumentError);
}

}  // namespace
}  // namespace fp8forge
