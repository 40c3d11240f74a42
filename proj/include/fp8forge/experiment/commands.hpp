// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Subcommand implementations behind the fp8forge executable.
//
// Each command reads an optional JSON config, applies command-line
// overrides, writes the fully materialized config as <command>.config.json,
// its result files, and a <command>.meta.json sidecar into the output
// directory. Result files depend only on the emitted config, so rerunning
// from it reproduces them byte for byte.
//
// Exit codes: 0 success, 1 experiment failure, 2 usage or config error.

#pragma once

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

#include "fp8forge/errors.hpp"
#include "fp8forge/experiment/config.hpp"
#include "fp8forge/experiment/footprint.hpp"
#include "fp8forge/experiment/hash.hpp"
#include "fp8forge/experiment/parity_experiment.hpp"
#include "fp8forge/experiment/studies.hpp"
#include "fp8forge/fp8.hpp"
#include "fp8forge/tensor.hpp"
#include "fp8forge/text.hpp"

namespace fp8forge::experiment {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

inline constexpr const char* kDefaultOutDir = "fp8forge_out";
inline constexpr const char* kOutDirEnv = "FP8FORGE_OUT";

struct CommandContext {
  std::optional<std::filesystem::path> config_path;
  std::optional<std::filesystem::path> out_flag;  // --out
  std::optional<std::filesystem::path> env_out;   // value of FP8FORGE_OUT
  std::optional<std::uint64_t> seed;              // --seed
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;

  // Reads FP8FORGE_OUT from the process environment.
  void load_environment() {
    if (const char* v = std::getenv(kOutDirEnv); v != nullptr && *v != '\0') env_out = v;
  }
};

// --out, then FP8FORGE_OUT, then the config's out_dir, then kDefaultOutDir.
inline std::filesystem::path resolve_out_dir(const CommandContext& ctx, const std::string& config_out) {
  if (ctx.out_flag) return *ctx.out_flag;
  if (ctx.env_out) return *ctx.env_out;
  if (!config_out.empty()) return config_out;
  return kDefaultOutDir;
}

// Writes to a temporary sibling and renames it into place.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open '" + tmp.string() + "' for writing");
    os.write(content.data(), static_cast<std::streamsize>(content.size()));
    os.flush();
    if (!os) throw IoError("short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot rename into '" + path.string() + "'");
  }
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace detail {

// State shared by one command invocation once its config is read.
struct Run {
  std::string command;
  std::filesystem::path out_dir;
  std::string config_text;
  std::string config_hash;
  json meta = json::object();

  void emit_config(const json& cfg) {
    config_text = experiment::config_text(cfg);
    config_hash = git_blob_hash(config_text);
    std::filesystem::create_directories(out_dir);
    write_file_atomic(out_dir / (command + ".config.json"), config_text);
  }

  std::filesystem::path write_output(const std::string& name, const std::string& content) {
    const auto path = out_dir / name;
    write_file_atomic(path, content);
    meta["outputs"].push_back(name);
    return path;
  }

  void write_meta() {
    json m;
    m["command"] = command;
    m["config_file"] = command + ".config.json";
    m["config_hash"] = config_hash;
    m["timestamp"] = utc_timestamp();
    m["rng"] = std::string(Rng::kAlgorithm);
    for (auto it = meta.begin(); it != meta.end(); ++it) m[it.key()] = it.value();
    write_file_atomic(out_dir / (command + ".meta.json"), m.dump(2) + "\n");
  }
};

// Loads the config (or {} when none is given) and the top-level out_dir.
inline json load_root(const CommandContext& ctx) {
  return ctx.config_path ? load_config_file(*ctx.config_path) : json::object();
}

// Runs `body`, mapping exceptions to exit codes and diagnostics.
inline int guarded(const CommandContext& ctx, const std::string& command, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    *ctx.err << "fp8forge " << command << ": " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    *ctx.err << "fp8forge " << command << ": error: " << e.what() << '\n';
    return kExitFailure;
  }
}

inline Run start(const CommandContext& ctx, const std::string& command, FieldReader& root) {
  Run run;
  run.command = command;
  run.out_dir = resolve_out_dir(ctx, root.str("out_dir", ""));
  return run;
}

inline json with_out_dir(json cfg, const Run& run) {
  json j;
  j["out_dir"] = run.out_dir.generic_string();
  for (auto it = cfg.begin(); it != cfg.end(); ++it) j[it.key()] = it.value();
  return j;
}

}  // namespace detail

// Enumerates all 256 codes of a format. `format_name` overrides the config's
// "format" field when non-empty.
inline int cmd_fp8_table(const CommandContext& ctx, const std::string& format_name = "") {
  return detail::guarded(ctx, "fp8-table", [&] {
    const json root_json = detail::load_root(ctx);
    FieldReader root(root_json, "");
    detail::Run run = detail::start(ctx, "fp8-table", root);
    std::string name = root.str("format", "e4m3");
    if (!format_name.empty()) name = format_name;
    root.finish();
    const Fp8Format* fmt = nullptr;
    try {
      fmt = &parse_format(name);
    } catch (const InvalidArgumentError& e) {
      throw ConfigError(std::string(e.what()) + " (expected e4m3 or e5m2)");
    }
    run.emit_config(detail::with_out_dir(json{{"format", fmt->name}}, run));
    std::ostringstream csv;
    write_format_csv(csv, enumerate_format(*fmt));
    run.write_output("fp8_table_" + std::string(fmt->name) + ".csv", csv.str());
    run.meta["format"] = fmt->name;
    run.write_meta();
    *ctx.out << csv.str();
    return kExitOk;
  });
}

// Twin training run. Exits 0 when no arm diverged.
inline int cmd_parity(const CommandContext& ctx) {
  return detail::guarded(ctx, "parity", [&] {
    const json root_json = detail::load_root(ctx);
    FieldReader root(root_json, "");
    detail::Run run = detail::start(ctx, "parity", root);
    ParityExperiment e;
    try {
      e = read_parity_experiment(root);
    } catch (const InvalidArgumentError& ex) {
      throw ConfigError(std::string("config error: ") + ex.what());
    }
    if (ctx.seed) e.set_seed(*ctx.seed);
    const json cfg = write_parity_experiment(e);
    run.emit_config(detail::with_out_dir(cfg, run));

    train::ParityLog log = e.run();
    log.config_hash = run.config_hash;
    run.write_output("parity.csv", log.csv());

    const train::ParitySummary s = log.summary();
    const bool within = s.final_gap_rel <= e.tolerance &&
                        (!log.fp8_fp32scale || s.final_gap_rel_fp32scale <= e.tolerance);
    run.meta["seeds"] = {{"init_seed", e.train.init_seed}, {"data_seed", e.train.data_seed}};
    run.meta["model"] = cfg["model"];
    run.meta["pipeline"] = cfg["pipeline"];
    run.meta["train"] = cfg["train"];
    run.meta["mode"] = cfg["mode"];
    json summary = {{"final_gap_rel", s.final_gap_rel},
                    {"max_gap_abs", s.max_gap_abs},
                    {"diverged", s.diverged},
                    {"tolerance", e.tolerance},
                    {"within_tolerance", within},
                    {"drift_p_value", s.drift.p_value},
                    {"drift_detected", !s.drift.passed}};
    if (log.fp8_fp32scale) summary["final_gap_rel_fp32scale"] = s.final_gap_rel_fp32scale;
    for (const auto* arm : {&log.ref, &log.fp8}) {
      if (arm->diverged()) summary["divergence"].push_back(arm->divergence_message);
    }
    if (log.fp8_fp32scale && log.fp8_fp32scale->diverged()) {
      summary["divergence"].push_back(log.fp8_fp32scale->divergence_message);
    }
    run.meta["summary"] = summary;
    run.write_meta();

    *ctx.out << log.summary_line() << '\n';
    return s.diverged ? kExitFailure : kExitOk;
  });
}

inline int cmd_footprint(const CommandContext& ctx) {
  return detail::guarded(ctx, "footprint", [&] {
    const json root_json = detail::load_root(ctx);
    FieldReader root(root_json, "");
    detail::Run run = detail::start(ctx, "footprint", root);
    const FootprintInput in = read_footprint_input(root);
    run.emit_config(detail::with_out_dir(write_footprint_input(in), run));
    const std::string report = footprint_json(compute_footprint(in)).dump(2) + "\n";
    run.write_output("footprint.json", report);
    run.meta["scale_format"] = scale_format_name(in.scale_format);
    run.meta["weight_block"] = in.weight_block;
    run.meta["token_group"] = in.token_group;
    run.write_meta();
    *ctx.out << report;
    return kExitOk;
  });
}

inline int cmd_quant_study(const CommandContext& ctx) {
  return detail::guarded(ctx, "quant-study", [&] {
    const json root_json = detail::load_root(ctx);
    FieldReader root(root_json, "");
    detail::Run run = detail::start(ctx, "quant-study", root);
    QuantStudyConfig c = read_quant_study(root);
    if (ctx.seed) c.seeds = {*ctx.seed};
    const json cfg = write_quant_study(c);
    run.emit_config(detail::with_out_dir(cfg, run));
    const std::string csv = quant_study_csv(run_quant_study(c));
    run.write_output("quant_study.csv", csv);
    run.meta["seeds"] = cfg["seeds"];
    run.meta["specs"] = cfg["specs"];
    run.meta["scale_formats"] = cfg["scale_formats"];
    run.meta["format"] = cfg["format"];
    run.write_meta();
    *ctx.out << csv;
    return kExitOk;
  });
}

// Randomized scaled-GEMM check. Exits 1 on any mismatch; failing cases are
// dumped under <out>/gemm_check_failures/.
inline int cmd_gemm_check(const CommandContext& ctx) {
  return detail::guarded(ctx, "gemm-check", [&] {
    const json root_json = detail::load_root(ctx);
    FieldReader root(root_json, "");
    detail::Run run = detail::start(ctx, "gemm-check", root);
    GemmCheckConfig c = read_gemm_check(root);
    if (ctx.seed) c.seed = *ctx.seed;
    run.emit_config(detail::with_out_dir(write_gemm_check(c), run));
    const auto dump_root = run.out_dir / "gemm_check_failures";
    const GemmCheckReport rep = run_gemm_check(c, dump_root);
    run.write_output("gemm_check.json", gemm_check_json(rep).dump(2) + "\n");
    run.meta["seeds"] = {{"seed", c.seed}};
    run.meta["cases"] = c.cases;
    run.write_meta();
    *ctx.out << "gemm-check: " << rep.cases << " cases, " << rep.mismatches << " mismatches, "
             << rep.bound_violations << " bound violations\n";
    for (const auto& f : rep.failures) {
      *ctx.err << "gemm-check: FAIL " << f.reason << "\n  reproduction files: " << f.dump_dir.string() << '\n';
    }
    return rep.passed() ? kExitOk : kExitFailure;
  });
}

}  // namespace fp8forge::experiment
