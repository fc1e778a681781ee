// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <ostream>
#include <span>
#include <vector>

#include "modgap/config.hpp"
#include "modgap/policy.hpp"
#include "modgap/task_world.hpp"

namespace modgap {

/// `<think> </think> \boxed{answer} <eos>`.
std::vector<Token> reference_response(std::int64_t answer);

struct SupervisedExample {
  PromptEncoding prompt;
  std::vector<Token> response;
};

/// Mean token negative log-likelihood over all response tokens of the batch.
LossGraph supervised_loss(const PolicyParams& params, std::span<const SupervisedExample> batch, int workers = 1);

/// Supervised warm start: text-only prompts first, then a short phase mixing
/// in scene-plus-question prompts. Plays the role of the pretrained base model.
PolicyParams train_base_model(const ExperimentConfig& cfg, std::span<const TaskInstance> train,
                              std::ostream* log = nullptr);

/// Loads the cached base model when base.checkpoint points at a matching
/// cache, otherwise trains it (and writes the cache).
PolicyParams load_or_train_base_model(const ExperimentConfig& cfg, std::span<const TaskInstance> train,
                                      std::ostream* log = nullptr);

}  // namespace modgap
