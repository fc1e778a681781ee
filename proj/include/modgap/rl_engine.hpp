// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "modgap/policy.hpp"
#include "modgap/task_world.hpp"

namespace modgap {

enum class OptimizerKind : std::uint8_t { Sgd, Adam };

struct DapoConfig {
  double eps_low = 0.2;
  double eps_high = 0.28;
  double dual_clip_c = 10.0;
  int group_size = 8;
  int batch_size = 64;
  int mini_batch = 16;  // counted in prompt groups
  int max_prompt_len = 96;
  int max_resp_len = 32;
  int overlong_buffer = 8;
  double overlong_penalty_factor = 1.0;
  double learning_rate = 1e-3;
  int gen_batch_budget = 10;
  double temperature = 1.0;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  /// Values of the full-scale training setup.
  static DapoConfig full_scale();
  void validate() const;
};

struct RolloutGroup {
  std::string prompt_id;
  PromptVariant variant = PromptVariant::FullText;
  std::vector<Rollout> rollouts;
  std::vector<double> task_rewards;  // verifier output in {0, 1}
  std::vector<double> rewards;       // after overlong shaping
  std::vector<double> advantages;
  bool kept = false;
};

double overlong_penalty(int response_len, const DapoConfig& cfg);
double shaped_reward(double task_reward, int response_len, const DapoConfig& cfg);

inline constexpr double kAdvantageEps = 1e-6;
std::vector<double> group_advantages(std::span<const double> rewards);

/// Fills rewards, advantages and kept from the rollouts and their task rewards.
RolloutGroup make_group(std::string prompt_id, PromptVariant variant, std::vector<Rollout> rollouts,
                        std::vector<double> task_rewards, const DapoConfig& cfg);

struct FilterStats {
  int kept = 0;
  int all_correct = 0;
  int all_wrong = 0;
  int other_uniform = 0;
};

/// Keeps groups whose task rewards are not all equal.
std::vector<RolloutGroup> dynamic_filter(std::span<const RolloutGroup> groups, FilterStats* stats = nullptr);
bool group_is_informative(std::span<const double> task_rewards);

double token_surrogate(double ratio, double advantage, const DapoConfig& cfg);
/// d token_surrogate / d ratio, with the unclipped branch chosen at ties.
double token_surrogate_grad(double ratio, double advantage, const DapoConfig& cfg);

/// Token-mean clipped surrogate over every token of the kept groups (groups
/// with kept == false are skipped). The behaviour log-probs are the rollouts'
/// stored step_logprobs.
LossGraph rl_loss(std::span<const RolloutGroup> groups, const PolicyParams& params, const DapoConfig& cfg,
                  int workers = 1);
/// Same, with behaviour log-probs recomputed under old_params.
LossGraph rl_loss(std::span<const RolloutGroup> groups, const PolicyParams& params, const PolicyParams& old_params,
                  const DapoConfig& cfg, int workers = 1);

struct OptimizerState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;
};

/// theta <- theta - lr * g (SGD) or one Adam step when cfg.optimizer is Adam.
void apply_update(PolicyParams& params, const Gradients& grads, const DapoConfig& cfg,
                  OptimizerState* state = nullptr);

}  // namespace modgap
