// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-thread counters of FP8 encode calls, bucketed by the role of the tensor
// being quantized. Used to check that high-precision state (master weights,
// optimizer moments, weight gradients) never passes through an FP8 encode.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace fp8forge {

enum class TensorRole : std::uint8_t {
  kUnattributed = 0,
  kWeight,
  kActivation,
  kOutputGradient,
  kMasterWeight,
  kOptimizerState,
  kWeightGradient,
};

inline constexpr std::size_t kTensorRoleCount = 7;

constexpr std::string_view role_name(TensorRole role) {
  switch (role) {
    case TensorRole::kUnattributed: return "unattributed";
    case TensorRole::kWeight: return "weight";
    case TensorRole::kActivation: return "activation";
    case TensorRole::kOutputGradient: return "output_gradient";
    case TensorRole::kMasterWeight: return "master_weight";
    case TensorRole::kOptimizerState: return "optimizer_state";
    case TensorRole::kWeightGradient: return "weight_gradient";
  }
  return "?";
}

struct EncodeCounts {
  std::array<std::uint64_t, kTensorRoleCount> by_role{};

  std::uint64_t operator[](TensorRole role) const { return by_role[static_cast<std::size_t>(role)]; }
  std::uint64_t total() const {
    std::uint64_t sum = 0;
    for (auto c : by_role) sum += c;
    return sum;
  }
};

namespace detail {

struct InstrumentationState {
  EncodeCounts* sink = nullptr;
  TensorRole current = TensorRole::kUnattributed;
};

inline InstrumentationState& instrumentation_state() {
  thread_local InstrumentationState state;
  return state;
}

inline void count_encodes(std::uint64_t n) {
  auto& st = instrumentation_state();
  if (st.sink != nullptr) st.sink->by_role[static_cast<std::size_t>(st.current)] += n;
}

}  // namespace detail

// While alive, encode calls on this thread are tallied into `sink`.
class EncodeCounterScope {
 public:
  explicit EncodeCounterScope(EncodeCounts& sink) : previous_(detail::instrumentation_state().sink) {
    detail::instrumentation_state().sink = &sink;
  }
  ~EncodeCounterScope() { detail::instrumentation_state().sink = previous_; }
  EncodeCounterScope(const EncodeCounterScope&) = delete;
  EncodeCounterScope& operator=(const EncodeCounterScope&) = delete;

 private:
  EncodeCounts* previous_;
};

// Attributes encodes on this thread to `role` until destroyed.
class TensorRoleScope {
 public:
  explicit TensorRoleScope(TensorRole role) : previous_(detail::instrumentation_state().current) {
    detail::instrumentation_state().current = role;
  }
  ~TensorRoleScope() { detail::instrumentation_state().current = previous_; }
  TensorRoleScope(const TensorRoleScope&) = delete;
  TensorRoleScope& operator=(const TensorRoleScope&) = delete;

 private:
  TensorRole previous_;
};

}  // namespace fp8forge
