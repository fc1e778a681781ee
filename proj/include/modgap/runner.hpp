// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "modgap/config.hpp"
#include "modgap/eval_harness.hpp"

namespace modgap {

inline constexpr std::string_view kCodeVersion = "modgap 0.1.0";

struct RunManifest {
  std::string status;  // completed, interrupted or failed
  std::string error;
  std::string config_text;
  std::vector<std::string> overrides;
  std::string code_version;
  std::string started_at;
  std::string finished_at;
  std::string strategy;
  int gen_batches = 0;
  std::int64_t steps = 0;
  int stage_switch_gen_batch = -1;
  std::vector<std::string> checkpoints;
  std::optional<GapMetrics> initial_metrics;
  std::optional<GapMetrics> final_metrics;
};

void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

/// Trains one strategy to completion (or to run.stop_after) and writes
/// trajectory.csv, train_log.jsonl, ckl.csv, checkpoints and manifest.json
/// under run.output_dir. With run.resume=true, continues from the saved
/// resume state if one exists.
RunManifest run_train(const Config& config, std::ostream* log = nullptr);

/// Checkpoint mode (eval.checkpoint) or record mode (eval.records). Prints a
/// table to `out` and writes eval.output (default <run.output_dir>/metrics.csv).
std::vector<MetricsRow> run_eval(const Config& config, std::ostream& out);

/// One row per config, each trained (or loaded from a completed manifest with
/// the same config snapshot).
std::vector<MetricsRow> run_compare(std::span<const Config> configs, const std::filesystem::path& output_csv,
                                    std::ostream* log = nullptr);
/// Expands compare.strategies (comma separated) of one config into per-strategy configs.
std::vector<Config> expand_compare(const Config& config);

/// Writes train.jsonl and test.jsonl under gen.output.
void run_gen_data(const Config& config, std::ostream* log = nullptr);

}  // namespace modgap
