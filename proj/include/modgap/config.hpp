// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "modgap/ckl_distill.hpp"
#include "modgap/eval_harness.hpp"
#include "modgap/policy.hpp"
#include "modgap/rl_engine.hpp"
#include "modgap/schedule.hpp"

namespace modgap {

/// Flat `dotted.key = value` text. Blank lines and lines starting with '#'
/// are ignored.
class Config {
 public:
  static Config parse(std::string_view text, std::string_view source = "<config>");
  static Config load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// Applies one `key=value` override.
  void apply_override(std::string_view assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// The input file exactly as read (empty when built in memory).
  const std::string& raw_text() const { return raw_; }
  const std::vector<std::string>& overrides() const { return overrides_; }

  /// Throws on any key outside `known`.
  void check_known(std::span<const std::string_view> known) const;

 private:
  std::map<std::string, std::string> values_;
  std::string raw_;
  std::vector<std::string> overrides_;
};

struct BaseModelConfig {
  int text_steps = 500;
  int align_steps = 40;
  double align_fraction = 0.5;
  double lr = 3e-3;
  int batch = 64;
  std::uint64_t seed = 0;
  std::string checkpoint;  // cache path; empty disables caching
};

struct EvalSettings {
  int every = 1;
  int k = 4;
  double temperature = 1.0;
  double tol = 1e-2;
  std::uint64_t seed = 999;
};

struct ExperimentConfig {
  std::uint64_t data_seed = 1;
  std::uint64_t model_seed = 2;
  std::uint64_t rollout_seed = 3;
  int difficulty = 3;
  int train_size = 2000;
  int test_size = 300;
  PolicyConfig policy;
  DapoConfig dapo;
  CklConfig ckl;
  Strategy strategy;
  EvalSettings eval;
  BaseModelConfig base;
  std::filesystem::path output_dir = "runs/default";
  int workers = 1;
  int stop_after = 0;  // simulate an interruption after this many gen-batches (0 = never)
  bool resume = false;

  void validate() const;
  SamplingConfig sampling() const;
};

std::span<const std::string_view> known_config_keys();

/// Builds and validates an experiment from a flat config. Unknown keys are errors.
ExperimentConfig experiment_from(const Config& config);

}  // namespace modgap
