// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Quantization-error study over (granularity, scale format, seed) cells and
// the randomized GEMM self-check.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iterator>
#include <ostream>
#include <string>
#include <vector>

#include "fp8forge/errors.hpp"
#include "fp8forge/experiment/config.hpp"
#include "fp8forge/quantizer.hpp"
#include "fp8forge/scaled_gemm.hpp"
#include "fp8forge/tensor.hpp"
#include "fp8forge/text.hpp"

namespace fp8forge::experiment {

inline Distribution read_distribution(FieldReader r) {
  const std::string kind = r.str("kind", "outlier_mix");
  Distribution d;
  if (kind == "normal") {
    d = NormalDist{r.number("mean", 0.0), r.number("stddev", 1.0)};
  } else if (kind == "uniform") {
    d = UniformDist{r.number("lo", 0.0), r.number("hi", 1.0)};
  } else if (kind == "outlier_mix") {
    d = OutlierMixDist{r.number("sigma", 1.0), r.number("outlier_rate", 0.01), r.number("outlier_scale", 100.0)};
  } else {
    r.fail("kind", "unknown distribution '" + kind + "' (expected normal, uniform or outlier_mix)");
  }
  r.finish();
  try {
    tensor_random(1, 1, d, 0);
  } catch (const InvalidArgumentError& e) {
    throw ConfigError(std::string("config error: field '") + r.path() + "': " + e.what());
  }
  return d;
}

inline json write_distribution(const Distribution& d) {
  if (const auto* n = std::get_if<NormalDist>(&d)) return {{"kind", "normal"}, {"mean", n->mean}, {"stddev", n->stddev}};
  if (const auto* u = std::get_if<UniformDist>(&d)) return {{"kind", "uniform"}, {"lo", u->lo}, {"hi", u->hi}};
  const auto& o = std::get<OutlierMixDist>(d);
  return {{"kind", "outlier_mix"},
          {"sigma", o.sigma},
          {"outlier_rate", o.outlier_rate},
          {"outlier_scale", o.outlier_scale}};
}

inline std::vector<std::uint64_t> read_seeds(FieldReader& r, const std::string& key, std::vector<std::uint64_t> def) {
  const json* a = r.array(key);
  if (a == nullptr) return def;
  std::vector<std::uint64_t> out;
  for (const auto& v : *a) {
    if (!v.is_number_unsigned()) r.fail(key, "entries must be non-negative integers");
    out.push_back(v.get<std::uint64_t>());
  }
  if (out.empty()) r.fail(key, "must not be empty");
  return out;
}

// ---------------------------------------------------------------------------
// quant-study

struct QuantStudyConfig {
  std::size_t rows = 128;
  std::size_t cols = 128;
  Distribution distribution = OutlierMixDist{};
  Fp8Kind format = Fp8Kind::kE4M3;
  // Scale formats in each spec are replaced by every entry of scale_formats.
  std::vector<ScaleSpec> specs{ScaleSpec::per_tensor(), ScaleSpec::per_block(32), ScaleSpec::per_token(128)};
  std::vector<ScaleFormat> scale_formats{ScaleFormat::kFp32, ScaleFormat::kUe8m0};
  std::vector<std::uint64_t> seeds{1, 2, 3};
};

inline QuantStudyConfig read_quant_study(FieldReader r) {
  QuantStudyConfig c;
  c.rows = r.positive("rows", c.rows);
  c.cols = r.positive("cols", c.cols);
  c.distribution = read_distribution(r.object("distribution"));
  c.format = read_format(r, "format", c.format);
  if (const json* specs = r.array("specs")) {
    c.specs.clear();
    for (std::size_t i = 0; i < specs->size(); ++i) {
      FieldReader sr((*specs)[i], r.child("specs[" + std::to_string(i) + "]"));
      c.specs.push_back(read_scale_spec(std::move(sr), ScaleSpec::per_tensor()));
    }
    if (c.specs.empty()) r.fail("specs", "must not be empty");
  }
  if (const json* sf = r.array("scale_formats")) {
    c.scale_formats.clear();
    for (const auto& v : *sf) {
      if (!v.is_string()) r.fail("scale_formats", "entries must be strings");
      try {
        c.scale_formats.push_back(parse_scale_format(v.get<std::string>()));
      } catch (const InvalidArgumentError& e) {
        r.fail("scale_formats", e.what());
      }
    }
    if (c.scale_formats.empty()) r.fail("scale_formats", "must not be empty");
  }
  c.seeds = read_seeds(r, "seeds", c.seeds);
  r.finish();
  return c;
}

inline json write_quant_study(const QuantStudyConfig& c) {
  json specs = json::array();
  for (const auto& s : c.specs) {
    json j = write_scale_spec(s);
    j.erase("scale_format");
    specs.push_back(j);
  }
  json sfs = json::array();
  for (auto f : c.scale_formats) sfs.push_back(scale_format_name(f));
  return {{"rows", c.rows},
          {"cols", c.cols},
          {"distribution", write_distribution(c.distribution)},
          {"format", format_of(c.format).name},
          {"specs", specs},
          {"scale_formats", sfs},
          {"seeds", c.seeds}};
}

struct QuantStudyRow {
  ScaleSpec spec;
  std::uint64_t seed = 0;
  double mse = 0.0;
  double max_err = 0.0;
  double saturation_rate = 0.0;  // fraction of elements with |x|/S > V_max
};

inline std::vector<QuantStudyRow> run_quant_study(const QuantStudyConfig& c) {
  std::vector<QuantStudyRow> rows;
  const Fp8Format& fmt = format_of(c.format);
  for (const auto& base : c.specs) {
    for (auto sf : c.scale_formats) {
      const ScaleSpec spec = base.with_scale_format(sf);
      for (auto seed : c.seeds) {
        const Tensor t = tensor_random(c.rows, c.cols, c.distribution, seed);
        const QuantizedTensor q = quantize(t, spec, fmt);
        const Tensor back = dequantize(q);
        QuantStudyRow row{spec, seed, mean_squared_difference(back, t), max_abs(back - t), 0.0};
        row.saturation_rate = static_cast<double>(clipped_count(t, q)) / static_cast<double>(t.size());
        rows.push_back(row);
      }
    }
  }
  return rows;
}

inline std::string quant_study_csv(const std::vector<QuantStudyRow>& rows) {
  std::string out = "granularity,scale_format,seed,mse,max_err,saturation_rate\n";
  for (const auto& r : rows) {
    std::string g(granularity_name(r.spec.granularity));
    if (r.spec.granularity != Granularity::kPerTensor) g += "(" + std::to_string(r.spec.group) + ")";
    out += g + "," + std::string(scale_format_name(r.spec.scale_format)) + "," + std::to_string(r.seed) + "," +
           format_g17(r.mse) + "," + format_g17(r.max_err) + "," + format_g17(r.saturation_rate) + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// gemm-check

struct GemmCheckConfig {
  std::size_t cases = 200;
  std::uint64_t seed = 1;
  std::size_t max_dim = 40;
  bool check_bound = true;
  // Test hook: corrupt one code byte of operand A in case 0 before the
  // scaled product, so the check must fail and dump its operands.
  bool fault_injection = false;
};

inline GemmCheckConfig read_gemm_check(FieldReader r) {
  GemmCheckConfig c;
  c.cases = r.positive("cases", c.cases);
  c.seed = r.u64("seed", c.seed);
  c.max_dim = r.positive("max_dim", c.max_dim);
  c.check_bound = r.boolean("check_bound", c.check_bound);
  c.fault_injection = r.boolean("fault_injection", c.fault_injection);
  r.finish();
  return c;
}

inline json write_gemm_check(const GemmCheckConfig& c) {
  return {{"cases", c.cases},
          {"seed", c.seed},
          {"max_dim", c.max_dim},
          {"check_bound", c.check_bound},
          {"fault_injection", c.fault_injection}};
}

// Elementwise bound on |dequant(qa) . dequant(qb) - a . b|: first-order
// operand errors, their product, and a binary64 accumulation allowance for
// both products.
inline Tensor composed_error_bound(const Tensor& a, const Tensor& b, const Tensor& ea, const Tensor& eb) {
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

struct GemmCase {
  std::size_t index = 0;
  std::size_t n = 0, k = 0, m = 0;
  ScaleSpec spec_a, spec_b;
  Fp8Kind fmt_a = Fp8Kind::kE4M3, fmt_b = Fp8Kind::kE4M3;
  std::uint64_t seed = 0;

  std::string describe() const {
    return "case " + std::to_string(index) + ": (" + std::to_string(n) + "x" + std::to_string(k) + ") " +
           spec_a.to_string() + "/" + std::string(format_of(fmt_a).name) + " times (" + std::to_string(k) + "x" +
           std::to_string(m) + ") " + spec_b.to_string() + "/" + std::string(format_of(fmt_b).name);
  }
};

inline ScaleSpec random_spec(Rng& rng) {
  static constexpr std::size_t kGroups[] = {1, 2, 3, 4, 7, 8, 16, 32};
  const auto sf = rng.below(2) == 0 ? ScaleFormat::kFp32 : ScaleFormat::kUe8m0;
  const std::size_t g = kGroups[rng.below(std::size(kGroups))];
  switch (rng.below(4)) {
    case 0: return ScaleSpec::per_tensor(sf);
    case 1: return ScaleSpec::per_block(g, sf);
    case 2: return ScaleSpec::per_token(g, sf);
    default: return ScaleSpec::per_column_group(g, sf);
  }
}

inline GemmCase make_gemm_case(const GemmCheckConfig& c, std::size_t index) {
  Rng rng(c.seed * 1000003ull + index);
  GemmCase g;
  g.index = index;
  g.n = 1 + rng.below(c.max_dim);
  g.k = 1 + rng.below(c.max_dim);
  g.m = 1 + rng.below(c.max_dim);
  g.spec_a = random_spec(rng);
  g.spec_b = random_spec(rng);
  g.fmt_a = rng.below(4) == 0 ? Fp8Kind::kE5M2 : Fp8Kind::kE4M3;
  g.fmt_b = rng.below(4) == 0 ? Fp8Kind::kE5M2 : Fp8Kind::kE4M3;
  g.seed = rng.next_u64();
  return g;
}

struct GemmCheckFailure {
  std::size_t case_index = 0;
  std::string reason;
  std::filesystem::path dump_dir;
};

struct GemmCheckReport {
  std::size_t cases = 0;
  std::size_t mismatches = 0;
  std::size_t bound_violations = 0;
  std::vector<GemmCheckFailure> failures;

  bool passed() const { return mismatches == 0 && bound_violations == 0; }
};

// Runs every case; failing cases write a.fpq, b.fpq (clean operands),
// a_used.fpq (operand given to the kernel), expected.fpt and actual.fpt
// under dump_root/case_<index>/ when dump_root is non-empty.
inline GemmCheckReport run_gemm_check(const GemmCheckConfig& c, const std::filesystem::path& dump_root = {}) {
  GemmCheckReport rep;
  for (std::size_t i = 0; i < c.cases; ++i) {
    const GemmCase gc = make_gemm_case(c, i);
    Rng rng(gc.seed);
    const Distribution dist = rng.below(2) == 0 ? Distribution(NormalDist{0.0, 2.0}) : Distribution(OutlierMixDist{1.0, 0.05, 50.0});
    const Tensor a = tensor_random(gc.n, gc.k, dist, rng);
    const Tensor b = tensor_random(gc.k, gc.m, dist, rng);
    const QuantizedTensor qa = quantize(a, gc.spec_a, format_of(gc.fmt_a));
    const QuantizedTensor qb = quantize(b, gc.spec_b, format_of(gc.fmt_b));
    QuantizedTensor qa_used = qa;
    if (c.fault_injection && i == 0) qa_used.mutable_codes()[0] ^= 0x08;

    const Tensor expected = tensor_matmul_ref(dequantize(qa), dequantize(qb));
    const Tensor actual = scaled_matmul(qa_used, qb);
    std::string reason;
    if (!bitwise_equal(actual, expected)) {
      ++rep.mismatches;
      reason = "scaled product differs from dequantize-then-multiply";
    } else if (c.check_bound) {
      const Tensor exact = tensor_matmul_ref(a, b);
      const Tensor bound = composed_error_bound(a, b, error_bound_tensor(qa), error_bound_tensor(qb));
      for (std::size_t e = 0; e < exact.size(); ++e) {
        if (!(std::fabs(actual[e] - exact[e]) <= bound[e])) {
          ++rep.bound_violations;
          reason = "error bound exceeded at element " + std::to_string(e);
          break;
        }
      }
    }
    ++rep.cases;
    if (reason.empty()) continue;
    GemmCheckFailure f{i, gc.describe() + ": " + reason, {}};
    if (!dump_root.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "case_%04zu", i);
      f.dump_dir = dump_root / name;
      std::filesystem::create_directories(f.dump_dir);
      quantized_save(qa, f.dump_dir / "a.fpq");
      quantized_save(qb, f.dump_dir / "b.fpq");
      quantized_save(qa_used, f.dump_dir / "a_used.fpq");
      tensor_save(expected, f.dump_dir / "expected.fpt");
      tensor_save(actual, f.dump_dir / "actual.fpt");
    }
    rep.failures.push_back(std::move(f));
  }
  return rep;
}

inline json gemm_check_json(const GemmCheckReport& r) {
  json failures = json::array();
  for (const auto& f : r.failures) {
    failures.push_back({{"case", f.case_index}, {"reason", f.reason}, {"dump_dir", f.dump_dir.filename().string()}});
  }
  return {{"cases", r.cases},
          {"mismatches", r.mismatches},
          {"bound_violations", r.bound_violations},
          {"passed", r.passed()},
          {"failures", failures}};
}

}  // namespace fp8forge::experiment
