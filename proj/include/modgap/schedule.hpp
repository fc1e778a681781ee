// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <string_view>

namespace modgap {

enum class StrategyKind : std::uint8_t { D1Only, D2Only, Mixed, Curriculum, Kl, KlThenCurriculum };

std::string_view strategy_name(StrategyKind k);
StrategyKind parse_strategy(std::string_view name);

struct Strategy {
  StrategyKind kind = StrategyKind::D1Only;
  int budget = 10;  // total gen-batches for single-stage strategies
  int mixed_d1 = 1;
  int mixed_d2 = 1;
  int stage1_budget = 5;
  int stage2_budget = 5;
  int kl_window = 20;
  double kl_tolerance = 0.05;

  bool two_stage() const { return kind == StrategyKind::Curriculum || kind == StrategyKind::KlThenCurriculum; }
  int total_budget() const { return two_stage() ? stage1_budget + stage2_budget : budget; }
  void validate() const;
};

enum class Stage : std::uint8_t { One = 1, Two = 2 };

struct TrainState {
  std::int64_t step = 0;
  int gen_batches = 0;
  Stage stage = Stage::One;
  int stage_switch_gen_batch = -1;
  std::deque<double> ckl_window;  // most recent cKL means, newest last
};

struct BatchSpec {
  int n_d1 = 0;
  int n_d2 = 0;
  bool ckl_active = false;
};

BatchSpec next_batch_spec(const Strategy& strategy, const TrainState& state, int batch_size);

bool should_stop(const Strategy& strategy, const TrainState& state);

/// True when the mean of the newest `window` cKL values differs from the mean
/// of the `window` values before them by less than `tolerance` (relative).
bool kl_stabilized(const TrainState& state, int window = 20, double tolerance = 0.05);

/// Records one optimizer update and its cKL mean (if any rollout passed the gate).
void record_update(const Strategy& strategy, TrainState& state, const double* ckl_mean);

/// Marks the end of one generation batch and applies stage transitions.
void finish_gen_batch(const Strategy& strategy, TrainState& state);

}  // namespace modgap
