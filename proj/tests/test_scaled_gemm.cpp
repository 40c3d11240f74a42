// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fp8forge/scaled_gemm.hpp"
#include "oracles.hpp"

namespace fp8forge {
namespace {

const double kU = oracle::oracle_unit_error(oracle::kE4M3Layout);

Tensor oracle_product(const QuantizedTensor& a, const QuantizedTensor& b) {
  return oracle::naive_matmul(dequantize(a), dequantize(b));
}

// Per-element bound S*u, with u from the oracle table.
Tensor element_bounds(const QuantizedTensor& q) {
  Tensor e(q.rows(), q.cols());
  for (std::size_t r = 0; r < q.rows(); ++r) {
    for (std::size_t c = 0; c < q.cols(); ++c) e(r, c) = q.scale_at(r, c) * kU;
  }
  return e;
}

ScaleSpec random_spec(Rng& rng) {
  const ScaleFormat sf = rng.below(2) ? ScaleFormat::kFp32 : ScaleFormat::kUe8m0;
  const std::size_t g = 1 + rng.below(24);
  switch (rng.below(4)) {
    case 0: return ScaleSpec::per_tensor(sf);
    case 1: return ScaleSpec::per_block(g, sf);
    case 2: return ScaleSpec::per_token(g, sf);
    default: return ScaleSpec::per_column_group(g, sf);
  }
}

TEST(ScaledMatmul, PowersOfTwoAreExact) {
  const Tensor a{{1, 2, 4}, {0.5, -8, 0.25}};
  const Tensor b{{2, 1}, {-1, 0.5}, {4, 16}};
  // amax 8 and 16 with UE8M0 give scale 2^-5 and 2^-4; use explicit S=1 codes instead.
  const auto qa = QuantizedTensor(2, 3, ScaleSpec::per_tensor(), Fp8Kind::kE4M3,
                                  {encode_fp8(1, kE4M3).bits, encode_fp8(2, kE4M3).bits, encode_fp8(4, kE4M3).bits,
                                   encode_fp8(0.5, kE4M3).bits, encode_fp8(-8, kE4M3).bits,
                                   encode_fp8(0.25, kE4M3).bits},
                                  {1.0});
  const auto qb = quantize(b, ScaleSpec::per_tensor(), kE4M3);
  EXPECT_EQ(scaled_matmul(qa, qb), tensor_matmul_ref(a, b));
}

TEST(ScaledMatmul, IdentityTimesIdentity) {
  // Power-of-two scale: 1.0 maps to code 256 * 2^-8 exactly.
  const auto qi = quantize(Tensor::identity(4), ScaleSpec::per_tensor(ScaleFormat::kUe8m0), kE4M3);
  EXPECT_EQ(scaled_matmul(qi, qi), Tensor::identity(4));
  // A binary32 scale of 1/448 is inexact, so 1.0 comes back within binary32
  // precision of the scale.
  const auto qf = quantize(Tensor::identity(4), ScaleSpec::per_tensor(ScaleFormat::kFp32), kE4M3);
  const Tensor y = scaled_matmul(qf, qf);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(y(i, j), i == j ? 1.0 : 0.0, std::ldexp(1.0, -23));
  }
}

TEST(ScaledMatmul, BlockTimesTokenMatchesOracle) {
  const auto a = quantize(tensor_random(32, 48, NormalDist{}, 1), ScaleSpec::per_block(16), kE4M3);
  const auto b = quantize(tensor_random(48, 16, NormalDist{}, 2), ScaleSpec::per_token(16), kE4M3);
  EXPECT_TRUE(bitwise_equal(scaled_matmul(a, b), oracle_product(a, b)));
  EXPECT_TRUE(bitwise_equal(scaled_matmul(a, b), tensor_matmul_ref(dequantize(a), dequantize(b))));
}

TEST(ScaledMatmul, ShapeMismatch) {
  const auto a = quantize(Tensor(2, 3), ScaleSpec::per_tensor(), kE4M3);
  EXPECT_THROW(scaled_matmul(a, a), ShapeMismatchError);
}

TEST(ScaledMatmulProperty, OracleEquivalence200Cases) {
  Rng rng(777);
  for (int i = 0; i < 200; ++i) {
    const std::size_t n = 1 + rng.below(40), k = 1 + rng.below(40), m = 1 + rng.below(40);
    const Fp8Format& fa = rng.below(3) == 0 ? kE5M2 : kE4M3;
    const Fp8Format& fb = rng.below(3) == 0 ? kE5M2 : kE4M3;
    const auto a = quantize(tensor_random(n, k, OutlierMixDist{1.0, 0.02, 30.0}, rng), random_spec(rng), fa);
    const auto b = quantize(tensor_random(k, m, NormalDist{0.0, 3.0}, rng), random_spec(rng), fb);
    ASSERT_TRUE(bitwise_equal(scaled_matmul(a, b), oracle_product(a, b))) << "case " << i;
  }
}

TEST(ScaledMatmulProperty, ComposedErrorBound) {
  Rng rng(4242);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 1 + rng.below(32), k = 1 + rng.below(64), m = 1 + rng.below(32);
    const Tensor a = tensor_random(n, k, OutlierMixDist{1.0, 0.01, 50.0}, rng);
    const Tensor b = tensor_random(k, m, NormalDist{0.0, 0.1}, rng);
    const auto qa = quantize(a, random_spec(rng), kE4M3);
    const auto qb = quantize(b, random_spec(rng), kE4M3);
    const Tensor err = scaled_matmul(qa, qb) - tensor_matmul_ref(a, b);
    const Tensor bound = oracle::composed_gemm_bound(a, b, element_bounds(qa), element_bounds(qb));
    for (std::size_t e = 0; e < err.size(); ++e) ASSERT_LE(std::fabs(err[e]), bound[e]) << "case " << i;
  }
}

TEST(LinearFprop, ZeroWeightGivesZero) {
  const auto cfg = PipelineConfig::hybrid(16);
  const auto f = linear_fprop(tensor_random(8, 32, NormalDist{}, 1), Tensor(4, 32), cfg);
  EXPECT_EQ(f.y, Tensor(8, 4));
}

TEST(LinearFprop, IdentityWeightReturnsDequantizedInput) {
  const auto cfg = PipelineConfig::hybrid(16);
  const auto f = linear_fprop(tensor_random(8, 32, NormalDist{}, 2), Tensor::identity(32), cfg);
  EXPECT_TRUE(bitwise_equal(f.y, materialize(f.x_q)));
}

TEST(LinearFprop, OperandsFollowHybridGranularity) {
  const auto cfg = PipelineConfig::hybrid(16);
  const auto f = linear_fprop(tensor_random(16, 32, NormalDist{}, 3), tensor_random(8, 32, NormalDist{}, 4), cfg);
  const auto& xq = std::get<QuantizedTensor>(f.x_q);
  const auto& wq = std::get<QuantizedTensor>(f.w_q);
  EXPECT_EQ(xq.spec(), ScaleSpec::per_token(16));
  EXPECT_EQ(wq.spec(), ScaleSpec::per_block(16));
  EXPECT_EQ(xq.format().kind, Fp8Kind::kE4M3);
}

TEST(LinearFprop, PinnedCaseWithinComposedBound) {
  const auto cfg = PipelineConfig::hybrid(16);
  const Tensor x = tensor_random(16, 32, NormalDist{}, 10);
  const Tensor w = tensor_random(8, 32, NormalDist{0.0, 0.2}, 11);
  const auto f = linear_fprop(x, w, cfg);
  const auto& xq = std::get<QuantizedTensor>(f.x_q);
  const auto wq_t = transpose(std::get<QuantizedTensor>(f.w_q));
  const Tensor bound = oracle::composed_gemm_bound(x, transpose(w), element_bounds(xq), element_bounds(wq_t));
  const Tensor err = f.y - tensor_matmul_ref(x, transpose(w));
  for (std::size_t e = 0; e < err.size(); ++e) EXPECT_LE(std::fabs(err[e]), bound[e]);
  EXPECT_TRUE(bitwise_equal(f.y, oracle::naive_matmul(dequantize(xq), dequantize(wq_t))));
}

TEST(LinearFprop, ShapeMismatch) {
  EXPECT_THROW(linear_fprop(Tensor(2, 3), Tensor(4, 5), PipelineConfig{}), ShapeMismatchError);
}

TEST(LinearDgrad, ZeroAndIdentity) {
  const auto cfg = PipelineConfig::hybrid(16);
  const auto w_q = make_operand(Tensor::identity(24), cfg.weight_spec, cfg.weight_format, TensorRole::kWeight, true);
  EXPECT_EQ(linear_dgrad(Tensor(5, 24), w_q, cfg), Tensor(5, 24));
  const Tensor dy = tensor_random(5, 24, NormalDist{}, 5);
  EXPECT_TRUE(bitwise_equal(linear_dgrad(dy, w_q, cfg), dequantize(quantize(dy, cfg.gradient_spec, kE4M3))));
}

TEST(LinearDgrad, PinnedCaseMatchesOracle) {
  const auto cfg = PipelineConfig::hybrid(16);
  const Tensor x = tensor_random(12, 40, NormalDist{}, 12);
  const Tensor w = tensor_random(20, 40, NormalDist{}, 13);
  const Tensor dy = tensor_random(12, 20, NormalDist{0.0, 1e-3}, 14);
  const auto f = linear_fprop(x, w, cfg);
  const Tensor want = oracle::naive_matmul(dequantize(quantize(dy, ScaleSpec::per_token(16), kE4M3)),
                                           dequantize(quantize(w, ScaleSpec::per_block(16), kE4M3)));
  EXPECT_TRUE(bitwise_equal(linear_dgrad(dy, f.w_q, cfg), want));
  EXPECT_THROW(linear_dgrad(Tensor(12, 19), f.w_q, cfg), ShapeMismatchError);
}

TEST(LinearWgrad, ZeroOneHotAndOracle) {
  const auto cfg = PipelineConfig::hybrid(16);
  const Tensor x = tensor_random(1, 40, NormalDist{}, 15);
  const Tensor w = tensor_random(6, 40, NormalDist{}, 16);
  const auto f = linear_fprop(x, w, cfg);
  EXPECT_EQ(linear_wgrad(Tensor(1, 6), f.x_q, cfg), Tensor(6, 40));

  Tensor onehot(1, 6);
  onehot(0, 2) = 1.0;
  const Tensor dw = linear_wgrad(onehot, f.x_q, cfg);
  const Tensor xd = materialize(f.x_q);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 40; ++c) EXPECT_EQ(dw(r, c), r == 2 ? xd(0, c) : 0.0);
  }

  const Tensor xb = tensor_random(24, 40, NormalDist{}, 17);
  const Tensor dy = tensor_random(24, 6, NormalDist{}, 18);
  const auto fb = linear_fprop(xb, w, cfg);
  const Tensor want = oracle::naive_matmul(transpose(dequantize(quantize(dy, ScaleSpec::per_token(16), kE4M3))),
                                           dequantize(quantize(xb, ScaleSpec::per_token(16), kE4M3)));
  EXPECT_TRUE(bitwise_equal(linear_wgrad(dy, fb.x_q, cfg), want));
  EXPECT_THROW(linear_wgrad(Tensor(3, 6), fb.x_q, cfg), ShapeMismatchError);
}

TEST(LinearBackward, MatchesSeparateGemms) {
  const auto cfg = PipelineConfig::hybrid(8);
  const Tensor x = tensor_random(10, 20, NormalDist{}, 19);
  const Tensor w = tensor_random(12, 20, NormalDist{}, 20);
  const Tensor dy = tensor_random(10, 12, NormalDist{}, 21);
  const auto f = linear_fprop(x, w, cfg);
  const auto g = linear_backward(dy, f, cfg);
  EXPECT_TRUE(bitwise_equal(g.dx, linear_dgrad(dy, f.w_q, cfg)));
  EXPECT_TRUE(bitwise_equal(g.dw, linear_wgrad(dy, f.x_q, cfg)));
}

TEST(LinearOps, QuantizationOffReproducesReference) {
  const auto cfg = PipelineConfig::reference();
  const Tensor x = tensor_random(9, 14, NormalDist{}, 22);
  const Tensor w = tensor_random(7, 14, NormalDist{}, 23);
  const Tensor dy = tensor_random(9, 7, NormalDist{}, 24);
  const auto f = linear_fprop(x, w, cfg);
  EXPECT_FALSE(is_quantized(f.x_q));
  EXPECT_TRUE(bitwise_equal(f.y, tensor_matmul_ref(x, transpose(w))));
  EXPECT_TRUE(bitwise_equal(linear_dgrad(dy, f.w_q, cfg), tensor_matmul_ref(dy, w)));
  EXPECT_TRUE(bitwise_equal(linear_wgrad(dy, f.x_q, cfg), tensor_matmul_ref(transpose(dy), x)));
}

TEST(LinearOps, ScaleFormatOverride) {
  auto cfg = PipelineConfig::hybrid(16);
  cfg.scale_format_override = ScaleFormat::kFp32;
  const auto f = linear_fprop(tensor_random(4, 16, NormalDist{}, 1), tensor_random(4, 16, NormalDist{}, 2), cfg);
  EXPECT_EQ(std::get<QuantizedTensor>(f.x_q).spec().scale_format, ScaleFormat::kFp32);
  EXPECT_EQ(std::get<QuantizedTensor>(f.w_q).spec().scale_format, ScaleFormat::kFp32);
}

TEST(OperandMatmul, RejectsMixedOperands) {
  const Operand raw = Tensor(2, 2);
  const Operand q = quantize(Tensor(2, 2), ScaleSpec::per_tensor(), kE4M3);
  EXPECT_THROW(operand_matmul(raw, q), InvalidArgumentError);
}

}  // namespace
}  // namespace fp8forge
