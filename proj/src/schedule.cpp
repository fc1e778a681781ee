// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace modgap {

std::string_view strategy_name(StrategyKind k) {
  switch (k) {
    case StrategyKind::D1Only:
      return "d1";
    case StrategyKind::D2Only:
      return "d2";
    case StrategyKind::Mixed:
      return "mixed";
    case StrategyKind::Curriculum:
      return "curriculum";
    case StrategyKind::Kl:
      return "kl";
    case StrategyKind::KlThenCurriculum:
      return "kl_curriculum";
  }
  return "unknown";
}

StrategyKind parse_strategy(std::string_view name) {
  for (auto k : {StrategyKind::D1Only, StrategyKind::D2Only, StrategyKind::Mixed, StrategyKind::Curriculum,
                 StrategyKind::Kl, StrategyKind::KlThenCurriculum}) {
    if (strategy_name(k) == name) return k;
  }
  throw std::invalid_argument("unknown strategy '" + std::string(name) +
                              "' (expected d1, d2, mixed, curriculum, kl, kl_curriculum)");
}

void Strategy::validate() const {
  if (budget < 0) throw std::invalid_argument("strategy budget must be >= 0");
  if (kind == StrategyKind::Mixed && (mixed_d1 < 1 || mixed_d2 < 1)) {
    throw std::invalid_argument("mixed ratio must be positive");
  }
  if (two_stage() && (stage1_budget < 1 || stage2_budget < 1)) {
    throw std::invalid_argument("curriculum stage budgets must be >= 1");
  }
  if (kl_window < 1) throw std::invalid_argument("kl window must be >= 1");
  if (!(kl_tolerance > 0.0)) throw std::invalid_argument("kl tolerance must be > 0");
}

BatchSpec next_batch_spec(const Strategy& s, const TrainState& state, int batch_size) {
  BatchSpec b;
  switch (s.kind) {
    case StrategyKind::D1Only:
      b.n_d1 = batch_size;
      break;
    case StrategyKind::D2Only:
      b.n_d2 = batch_size;
      break;
    case StrategyKind::Mixed: {
      const int total = s.mixed_d1 + s.mixed_d2;
      b.n_d2 = batch_size * s.mixed_d2 / total;
      b.n_d1 = batch_size - b.n_d2;
      break;
    }
    case StrategyKind::Curriculum:
      if (state.gen_batches < s.stage1_budget) {
        b.n_d1 = batch_size;
      } else {
        b.n_d2 = batch_size;
      }
      break;
    case StrategyKind::Kl:
      b.n_d1 = batch_size;
      b.ckl_active = true;
      break;
    case StrategyKind::KlThenCurriculum:
      if (state.stage == Stage::One) {
        b.n_d1 = batch_size;
        b.ckl_active = true;
      } else {
        b.n_d2 = batch_size;
      }
      break;
  }
  return b;
}

bool should_stop(const Strategy& s, const TrainState& state) { return state.gen_batches >= s.total_budget(); }

bool kl_stabilized(const TrainState& state, int window, double tolerance) {
  const auto w = static_cast<std::size_t>(window);
  const auto n = state.ckl_window.size();
  if (window < 1 || n < 2 * w) return false;
  double older = 0.0;
  double newer = 0.0;
  for (std::size_t i = n - 2 * w; i < n - w; ++i) older += state.ckl_window[i];
  for (std::size_t i = n - w; i < n; ++i) newer += state.ckl_window[i];
  older /= static_cast<double>(w);
  newer /= static_cast<double>(w);
  const double denom = std::max(std::abs(older), 1e-12);
  return std::abs(newer - older) / denom < tolerance;
}

void record_update(const Strategy& s, TrainState& state, const double* ckl_mean) {
  ++state.step;
  if (!ckl_mean) return;
  state.ckl_window.push_back(*ckl_mean);
  while (state.ckl_window.size() > 2 * static_cast<std::size_t>(s.kl_window)) state.ckl_window.pop_front();
}

void finish_gen_batch(const Strategy& s, TrainState& state) {
  ++state.gen_batches;
  if (state.stage == Stage::Two) return;
  bool enter_two = false;
  if (s.kind == StrategyKind::Curriculum) {
    enter_two = state.gen_batches >= s.stage1_budget;
  } else if (s.kind == StrategyKind::KlThenCurriculum) {
    enter_two = state.gen_batches >= s.stage1_budget || kl_stabilized(state, s.kl_window, s.kl_tolerance);
  }
  if (enter_two) {
    state.stage = Stage::Two;
    state.stage_switch_gen_batch = state.gen_batches;
  }
}

}  // namespace modgap
