// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Measures the relative final-loss gap of both FP8 arms against the
// reference arm for the default MLP and transformer over seeds 1..N, and
// prints the tolerance to pin: max(2 * worst gap, 0.005).
//
//   parity_calibration [--seeds N] [--steps S] [--model mlp|transformer|both]

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fp8forge/experiment/parity_experiment.hpp"

namespace ex = fp8forge::experiment;

int main(int argc, char** argv) {
  CLI::App app{"parity tolerance calibration"};
  std::uint64_t seeds = 5;
  std::size_t steps = 500;
  std::string which = "both";
  app.add_option("--seeds", seeds, "number of seeds");
  app.add_option("--steps", steps, "training steps per run");
  app.add_option("--model", which, "mlp, transformer or both")->check(CLI::IsMember({"mlp", "transformer", "both"}));
  CLI11_PARSE(app, argc, argv);

  double worst = 0.0;
  bool diverged = false;
  std::printf("model,seed,final_gap_rel,final_gap_rel_fp32scale,max_gap_abs,drift_p_value\n");
  for (const auto kind : {ex::ModelKind::kMlp, ex::ModelKind::kTransformer}) {
    if (which == "mlp" && kind != ex::ModelKind::kMlp) continue;
    if (which == "transformer" && kind != ex::ModelKind::kTransformer) continue;
    for (std::uint64_t s = 1; s <= seeds; ++s) {
      ex::ParityExperiment e;
      e.model = kind;
      e.mode = fp8forge::train::ParityMode::kThreeArm;
      e.train.steps = steps;
      e.set_seed(s);
      const auto log = e.run();
      const auto sum = log.summary();
      diverged = diverged || sum.diverged;
      worst = std::max({worst, sum.final_gap_rel, sum.final_gap_rel_fp32scale});
      std::printf("%s,%llu,%.6g,%.6g,%.6g,%.4g\n", kind == ex::ModelKind::kMlp ? "mlp" : "transformer",
                  static_cast<unsigned long long>(s), sum.final_gap_rel, sum.final_gap_rel_fp32scale, sum.max_gap_abs,
                  sum.drift.p_value);
      std::fflush(stdout);
    }
  }
  const double tolerance = std::max(2.0 * worst, 0.005);
  std::printf("worst_gap=%.6g tolerance=%.4g pinned=%.4g diverged=%s\n", worst, tolerance, ex::kParityTolerance,
              diverged ? "true" : "false");
  return diverged ? 1 : 0;
}
