// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "fp8forge/errors.hpp"
#include "fp8forge/train/optimizer.hpp"

namespace fp8forge::train {

// splitmix64 finalizer, used to derive independent per-step streams.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

template <class Cache>
struct ForwardResult {
  double loss = 0.0;
  Cache cache;
};

// Identifies the state a cache was built from.
struct CacheStamp {
  std::uint64_t version = 0;
  std::uint64_t step = 0;
};

inline CacheStamp stamp_of(const MasterState& s) { return {s.version, s.step}; }

inline void check_cache(const CacheStamp& stamp, const MasterState& s, const char* model) {
  if (stamp.version == 0) throw StaleCacheError(std::string(model) + ": cache is empty or was already consumed");
  if (stamp.version != s.version) {
    throw StaleCacheError(std::string(model) + ": cache was built at step " + std::to_string(stamp.step) +
                          " but the state is now at step " + std::to_string(s.step));
  }
}

// Runs a forward body, turning numeric blow-ups into DivergenceError tagged
// with the training step.
template <class Fn>
auto guarded_forward(const MasterState& s, Fn&& body) {
  try {
    auto result = std::forward<Fn>(body)();
    if (!std::isfinite(result.loss)) {
      throw DivergenceError("divergence: non-finite loss at step " + std::to_string(s.step), s.step);
    }
    return result;
  } catch (const NonFiniteInputError& e) {
    throw DivergenceError("divergence at step " + std::to_string(s.step) + ": " + e.what(), s.step);
  }
}

inline void init_normal(Tensor& t, double stddev, Rng& rng) {
  for (auto& x : t.data()) x = rng.normal(0.0, stddev);
}

}  // namespace fp8forge::train
