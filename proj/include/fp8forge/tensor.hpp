// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major 2-D tensor of doubles, a seeded RNG with portable
// distributions, the reference GEMM, and the FPT1 file format.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <initializer_list>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fp8forge/binary_io.hpp"
#include "fp8forge/errors.hpp"

namespace fp8forge {

class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw ShapeMismatchError("tensor data length does not match rows*cols");
  }
  Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeMismatchError("ragged tensor literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Tensor zeros(std::size_t rows, std::size_t cols) { return Tensor(rows, cols); }
  static Tensor filled(std::size_t rows, std::size_t cols, double v) {
    return Tensor(rows, cols, std::vector<double>(rows * cols, v));
  }
  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  // Numeric equality (0.0 == -0.0, NaN != NaN).
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.data_ == b.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Shape and every 64-bit pattern identical.
inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         (a.size() == 0 || std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0);
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeMismatchError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()) + ")");
  }
}

// Index of the first non-finite entry, or size() if all are finite.
inline std::size_t first_non_finite(const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) return i;
  }
  return t.size();
}

inline Tensor transpose(const Tensor& t) {
  Tensor out(t.cols(), t.rows());
  for (std::size_t r = 0; r < t.rows(); ++r) {
    for (std::size_t c = 0; c < t.cols(); ++c) out(c, r) = t(r, c);
  }
  return out;
}

inline Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

inline Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

inline Tensor operator*(double s, const Tensor& a) {
  Tensor out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

inline double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::fmax(m, std::fabs(v));
  return m;
}

inline double sum_squares(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return s;
}

inline double mean_squared_difference(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mean_squared_difference");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return a.size() == 0 ? 0.0 : s / static_cast<double>(a.size());
}

// Reference GEMM: c(i,j) = sum over k = 0..K-1 of a(i,k) * b(k,j), accumulated
// left to right into a 64-bit sum starting at +0.0. Every other GEMM in the
// library is checked bitwise against this order.
inline Tensor tensor_matmul_ref(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw ShapeMismatchError("matmul: inner dimensions differ (" + std::to_string(a.cols()) + " vs " +
                             std::to_string(b.rows()) + ")");
  }
  const std::size_t n = a.rows(), k_dim = a.cols(), m = b.cols();
  const Tensor bt = transpose(b);
  Tensor c(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < m; ++j) {
      const double* br = bt.row(j).data();
      double acc = 0.0;
      for (std::size_t k = 0; k < k_dim; ++k) acc += ar[k] * br[k];
      c(i, j) = acc;
    }
  }
  return c;
}

// Deterministic generator: std::mt19937_64 (fully specified by the C++
// standard) with distributions implemented here rather than by the standard
// library, whose distribution algorithms vary between implementations.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "mt19937_64";

  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal by the Box-Muller transform; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(theta);
    has_spare_ = true;
    return radius * std::cos(theta);
  }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw InvalidArgumentError("Rng::below(0)");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

struct NormalDist {
  double mean = 0.0;
  double stddev = 1.0;
};
struct UniformDist {
  double lo = 0.0;
  double hi = 1.0;
};
// Normal(0, sigma) background; with probability outlier_rate an entry is
// replaced by a spike of random sign and magnitude sigma*outlier_scale*(0.5+U),
// U uniform on [0, 1).
struct OutlierMixDist {
  double sigma = 1.0;
  double outlier_rate = 0.01;
  double outlier_scale = 100.0;
};
using Distribution = std::variant<NormalDist, UniformDist, OutlierMixDist>;

namespace detail {
struct SampleVisitor {
  Rng& rng;
  double operator()(const NormalDist& d) const { return rng.normal(d.mean, d.stddev); }
  double operator()(const UniformDist& d) const { return rng.uniform(d.lo, d.hi); }
  double operator()(const OutlierMixDist& d) const {
    if (rng.uniform01() < d.outlier_rate) {
      const double sign = rng.uniform01() < 0.5 ? -1.0 : 1.0;
      return sign * d.sigma * d.outlier_scale * (0.5 + rng.uniform01());
    }
    return rng.normal(0.0, d.sigma);
  }
};

struct ValidateVisitor {
  void operator()(const NormalDist& d) const {
    if (!(d.stddev >= 0.0) || !std::isfinite(d.mean)) throw InvalidArgumentError("normal: invalid parameters");
  }
  void operator()(const UniformDist& d) const {
    if (!(d.hi >= d.lo) || !std::isfinite(d.lo) || !std::isfinite(d.hi)) {
      throw InvalidArgumentError("uniform: requires finite lo <= hi");
    }
  }
  void operator()(const OutlierMixDist& d) const {
    if (!(d.sigma >= 0.0) || !(d.outlier_rate >= 0.0 && d.outlier_rate <= 1.0) || !(d.outlier_scale >= 0.0)) {
      throw InvalidArgumentError("outlier_mix: invalid parameters");
    }
  }
};
}  // namespace detail

inline Tensor tensor_random(std::size_t rows, std::size_t cols, const Distribution& dist, Rng& rng) {
  if (rows == 0 || cols == 0) throw InvalidArgumentError("tensor_random: dimensions must be >= 1");
  std::visit(detail::ValidateVisitor{}, dist);
  Tensor t(rows, cols);
  detail::SampleVisitor sample{rng};
  for (auto& v : t.data()) v = std::visit(sample, dist);
  return t;
}

inline Tensor tensor_random(std::size_t rows, std::size_t cols, const Distribution& dist, std::uint64_t seed) {
  Rng rng(seed);
  return tensor_random(rows, cols, dist, rng);
}

// FPT1: "FPT1", u32 rows, u32 cols, rows*cols binary64, all little-endian.
inline constexpr std::string_view kTensorMagic = "FPT1";

inline void encode_tensor(io::ByteWriter& w, const Tensor& t) {
  w.bytes(kTensorMagic);
  w.u32(static_cast<std::uint32_t>(t.rows()));
  w.u32(static_cast<std::uint32_t>(t.cols()));
  for (double v : t.data()) w.f64(v);
}

inline Tensor decode_tensor(io::ByteReader& r) {
  if (r.remaining() < 4 || r.bytes(4) != kTensorMagic) throw BadMagicError("bad magic: not an FPT1 tensor file");
  const std::size_t rows = r.u32();
  const std::size_t cols = r.u32();
  if (r.remaining() < rows * cols * 8) throw TruncatedPayloadError("truncated payload");
  Tensor t(rows, cols);
  for (auto& v : t.data()) v = r.f64();
  return t;
}

inline void tensor_save(const Tensor& t, const std::filesystem::path& path) {
  io::ByteWriter w;
  encode_tensor(w, t);
  io::write_file_atomic(path, w.buffer());
}

inline Tensor tensor_load(const std::filesystem::path& path) {
  const std::string data = io::read_file(path);
  io::ByteReader r(data);
  return decode_tensor(r);
}

}  // namespace fp8forge
