// Copyright 2026 The fp8forge Authors
// SPDX-License-Identifier: Apache-2.0
//
// fp8forge command-line driver.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fp8forge/experiment/commands.hpp"

namespace ex = fp8forge::experiment;

int main(int argc, char** argv) {
  CLI::App app{"fp8forge: FP8 numerics, scaled GEMM and training-parity experiments"};
  app.require_subcommand(1);

  std::string config, out;
  std::uint64_t seed = 0;
  auto add_globals = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "JSON config file (omit for defaults)");
    cmd->add_option("--out", out, "output directory (overrides FP8FORGE_OUT and the config's out_dir)");
    cmd->add_option("--seed", seed, "seed override");
  };

  std::string format_name;
  CLI::App* fp8_table = app.add_subcommand("fp8-table", "enumerate every code of an FP8 format");
  fp8_table->add_option("format", format_name, "e4m3 or e5m2");
  CLI::App* parity = app.add_subcommand("parity", "train FP8 and reference arms from identical state");
  CLI::App* footprint = app.add_subcommand("footprint", "logical memory footprint of training state");
  CLI::App* quant_study = app.add_subcommand("quant-study", "quantization error per granularity and scale format");
  CLI::App* gemm_check = app.add_subcommand("gemm-check", "randomized scaled-GEMM equality check");
  for (CLI::App* cmd : {fp8_table, parity, footprint, quant_study, gemm_check}) add_globals(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return ex::kExitUsage;
  }

  ex::CommandContext ctx;
  ctx.load_environment();
  CLI::App* chosen = app.get_subcommands().front();
  if (chosen->count("--config") > 0) ctx.config_path = config;
  if (chosen->count("--out") > 0) ctx.out_flag = out;
  if (chosen->count("--seed") > 0) ctx.seed = seed;

  if (chosen == fp8_table) return ex::cmd_fp8_table(ctx, format_name);
  if (chosen == parity) return ex::cmd_parity(ctx);
  if (chosen == footprint) return ex::cmd_footprint(ctx);
  if (chosen == quant_study) return ex::cmd_quant_study(ctx);
  return ex::cmd_gemm_check(ctx);
}
