// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Twin (or triple) training runs that differ only in GEMM numerics.
//
// Every arm starts from model.init(init_seed) and consumes the same batch
// stream task.batch(step, data_seed). Arms share nothing after that, so the
// loss of arm A at step t never depends on arm B.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fp8forge/errors.hpp"
#include "fp8forge/pipeline_config.hpp"
#include "fp8forge/text.hpp"
#include "fp8forge/train/optimizer.hpp"

namespace fp8forge::train {

struct TrainOptions {
  std::size_t steps = 500;
  std::uint64_t init_seed = 1;
  std::uint64_t data_seed = 2;
  AdamWHyper hyper{};  // hyper.lr is the peak of the schedule
  double warmup_ratio = 0.1;
  double min_lr_ratio = 0.1;

  LrSchedule schedule() const { return {hyper.lr, steps, warmup_ratio, min_lr_ratio}; }
};

struct ArmResult {
  std::vector<double> loss;       // one entry per completed step
  std::vector<double> grad_norm;  // global L2 norm of that step's gradients
  std::optional<std::size_t> diverged_at;
  std::string divergence_message;

  bool diverged() const { return diverged_at.has_value(); }
};

// Trains one arm. Divergence ends the arm early and is recorded, not thrown.
template <class Model, class Task>
ArmResult train_arm(const Model& model, const Task& task, const PipelineConfig& cfg, const TrainOptions& opt) {
  if (opt.steps == 0) throw InvalidArgumentError("train: steps must be at least 1");
  ArmResult arm;
  MasterState state = model.init(opt.init_seed);
  const LrSchedule sched = opt.schedule();
  AdamWHyper h = opt.hyper;
  for (std::size_t t = 0; t < opt.steps; ++t) {
    try {
      const auto batch = task.batch(t, opt.data_seed);
      auto fw = model.forward(state, batch, cfg);
      const Gradients g = model.backward(state, fw.cache, cfg);
      const double gn = global_norm(g);
      h.lr = sched.at(t);
      optimizer_step(state, g, h);
      arm.loss.push_back(fw.loss);
      arm.grad_norm.push_back(gn);
    } catch (const DivergenceError& e) {
      arm.diverged_at = t;
      arm.divergence_message = e.what();
      break;
    }
  }
  return arm;
}

enum class ParityMode { kTwoArm, kThreeArm };

struct DriftTest {
  std::size_t windows = 0;
  std::size_t increases = 0;  // consecutive windows whose mean |gap| grew
  double p_value = 1.0;       // one-sided binomial tail P(X >= increases)
  bool passed = true;
};

inline constexpr std::size_t kDriftWindow = 50;
inline constexpr double kDriftAlpha = 0.01;

// Sign test for a monotone upward drift of |gap| across windows of
// kDriftWindow steps. Under no drift each window-to-window change is up or
// down with probability 1/2.
inline DriftTest drift_sign_test(const std::vector<double>& abs_gap, std::size_t window = kDriftWindow,
                                 double alpha = kDriftAlpha) {
  DriftTest r;
  std::vector<double> means;
  for (std::size_t start = 0; start + window <= abs_gap.size(); start += window) {
    double s = 0.0;
    for (std::size_t i = start; i < start + window; ++i) s += abs_gap[i];
    means.push_back(s / static_cast<double>(window));
  }
  r.windows = means.size();
  if (means.size() < 2) return r;
  const std::size_t trials = means.size() - 1;
  for (std::size_t i = 1; i < means.size(); ++i) r.increases += means[i] > means[i - 1] ? 1 : 0;
  double tail = 0.0;
  for (std::size_t k = r.increases; k <= trials; ++k) {
    tail += std::exp(std::lgamma(trials + 1.0) - std::lgamma(k + 1.0) - std::lgamma(trials - k + 1.0) -
                     static_cast<double>(trials) * std::log(2.0));
  }
  r.p_value = std::fmin(1.0, tail);
  r.passed = r.p_value >= alpha;
  return r;
}

// Final loss of an arm: mean of its last kFinalLossWindow step losses (all
// of them for shorter runs). Both arms see the same batches, so the window
// averages out batch-to-batch noise in the gap without hiding a trend.
inline constexpr std::size_t kFinalLossWindow = 50;

inline double final_loss(const ArmResult& arm) {
  if (arm.loss.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = std::min(kFinalLossWindow, arm.loss.size());
  double s = 0.0;
  for (std::size_t i = arm.loss.size() - n; i < arm.loss.size(); ++i) s += arm.loss[i];
  return s / static_cast<double>(n);
}

struct ParitySummary {
  double final_gap_rel = 0.0;  // |final_loss(fp8) - final_loss(ref)| / final_loss(ref)
  double final_gap_rel_fp32scale = 0.0;
  double max_gap_abs = 0.0;  // over steps and FP8 arms
  bool diverged = false;
  DriftTest drift;
};

struct ParityLog {
  ParityMode mode = ParityMode::kTwoArm;
  TrainOptions options;
  PipelineConfig cfg_fp8;
  ArmResult ref;
  ArmResult fp8;
  std::optional<ArmResult> fp8_fp32scale;
  std::string config_hash;  // filled in by callers that hash their config

  bool diverged() const {
    return ref.diverged() || fp8.diverged() || (fp8_fp32scale && fp8_fp32scale->diverged());
  }

  ParitySummary summary() const {
    ParitySummary s;
    s.diverged = diverged();
    const auto rel_final = [&](const ArmResult& arm) {
      if (arm.diverged() || ref.diverged() || arm.loss.empty() || ref.loss.empty()) {
        return std::numeric_limits<double>::infinity();
      }
      const double r = final_loss(ref);
      return std::fabs(final_loss(arm) - r) / r;
    };
    s.final_gap_rel = rel_final(fp8);
    if (fp8_fp32scale) s.final_gap_rel_fp32scale = rel_final(*fp8_fp32scale);
    std::vector<double> abs_gap;
    const auto scan = [&](const ArmResult& arm, bool record) {
      const std::size_t n = std::min(arm.loss.size(), ref.loss.size());
      for (std::size_t i = 0; i < n; ++i) {
        const double gap = std::fabs(arm.loss[i] - ref.loss[i]);
        s.max_gap_abs = std::fmax(s.max_gap_abs, gap);
        if (record) abs_gap.push_back(gap);
      }
    };
    scan(fp8, true);
    if (fp8_fp32scale) scan(*fp8_fp32scale, false);
    s.drift = drift_sign_test(abs_gap);
    return s;
  }

  std::string summary_line() const {
    const ParitySummary s = summary();
    return "final_gap_rel=" + format_g17(s.final_gap_rel) + " max_gap_abs=" + format_g17(s.max_gap_abs) +
           " diverged=" + (s.diverged ? "true" : "false");
  }

  static constexpr const char* kCsvHeader = "step,loss_fp8,loss_ref,loss_fp8_fp32scale,grad_norm_fp8,grad_norm_ref";

  // One row per scheduled step; cells of arms that have stopped are empty.
  void write_csv(std::ostream& os) const {
    os << kCsvHeader << '\n';
    const auto cell = [](const std::vector<double>& v, std::size_t i) {
      return i < v.size() ? format_g17(v[i]) : std::string();
    };
    static const std::vector<double> kNone;
    const auto& f32 = fp8_fp32scale ? fp8_fp32scale->loss : kNone;
    for (std::size_t t = 0; t < options.steps; ++t) {
      os << t << ',' << cell(fp8.loss, t) << ',' << cell(ref.loss, t) << ',' << cell(f32, t) << ','
         << cell(fp8.grad_norm, t) << ',' << cell(ref.grad_norm, t) << '\n';
    }
  }

  std::string csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
  }
};

template <class Model, class Task>
ParityLog run_parity(const Model& model, const Task& task, const PipelineConfig& cfg_fp8, const TrainOptions& opt,
                     ParityMode mode = ParityMode::kTwoArm) {
  if (opt.steps == 0) throw InvalidArgumentError("run_parity: steps must be at least 1");
  ParityLog log;
  log.mode = mode;
  log.options = opt;
  log.cfg_fp8 = cfg_fp8;
  log.ref = train_arm(model, task, PipelineConfig::reference(), opt);
  log.fp8 = train_arm(model, task, cfg_fp8, opt);
  if (mode == ParityMode::kThreeArm) {
    PipelineConfig f32 = cfg_fp8;
    f32.scale_format_override = ScaleFormat::kFp32;
    log.fp8_fp32scale = train_arm(model, task, f32, opt);
  }
  return log;
}

}  // namespace fp8forge::train
