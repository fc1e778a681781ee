// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/rl_engine.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "modgap/parallel.hpp"

namespace modgap {

DapoConfig DapoConfig::full_scale() {
  DapoConfig c;
  c.batch_size = 512;
  c.mini_batch = 128;
  c.max_prompt_len = 1024;
  c.max_resp_len = 4096;
  c.overlong_buffer = 1024;
  c.overlong_penalty_factor = 1.0;
  c.learning_rate = 1e-6;
  c.gen_batch_budget = 10;
  return c;
}

void DapoConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("dapo: " + m); };
  if (!(eps_low > 0.0)) fail("eps_low must be > 0");
  if (!(eps_high > 0.0)) fail("eps_high must be > 0");
  if (!(dual_clip_c > 1.0 + eps_high)) fail("dual_clip_c must exceed 1 + eps_high");
  if (group_size < 1 || batch_size < 1 || mini_batch < 1 || max_prompt_len < 1 || max_resp_len < 1) {
    fail("counts must be >= 1");
  }
  if (overlong_buffer < 1 || overlong_buffer >= max_resp_len) fail("overlong_buffer must be in [1, max_resp_len)");
  if (!(overlong_penalty_factor >= 0.0)) fail("overlong_penalty_factor must be >= 0");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (gen_batch_budget < 0) fail("gen_batch_budget must be >= 0");
  if (!(temperature > 0.0)) fail("temperature must be > 0");
}

double overlong_penalty(int len, const DapoConfig& cfg) {
  if (len > cfg.max_resp_len) throw std::invalid_argument("response longer than max_resp_len");
  const int start = cfg.max_resp_len - cfg.overlong_buffer;
  if (len <= start) return 0.0;
  if (len >= cfg.max_resp_len) return -cfg.overlong_penalty_factor;
  return -cfg.overlong_penalty_factor * static_cast<double>(len - start) / cfg.overlong_buffer;
}

double shaped_reward(double task_reward, int response_len, const DapoConfig& cfg) {
  return task_reward + overlong_penalty(response_len, cfg);
}

std::vector<double> group_advantages(std::span<const double> rewards) {
  if (rewards.size() < 2) throw std::invalid_argument("group_advantages needs at least 2 rewards");
  const double n = static_cast<double>(rewards.size());
  double mean = 0.0;
  for (double r : rewards) mean += r;
  mean /= n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  std::vector<double> a(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) a[i] = (rewards[i] - mean) / (sd + kAdvantageEps);
  return a;
}

bool group_is_informative(std::span<const double> task_rewards) {
  return std::any_of(task_rewards.begin(), task_rewards.end(),
                     [&](double r) { return r != task_rewards.front(); });
}

RolloutGroup make_group(std::string prompt_id, PromptVariant variant, std::vector<Rollout> rollouts,
                        std::vector<double> task_rewards, const DapoConfig& cfg) {
  if (rollouts.size() != task_rewards.size()) throw std::invalid_argument("one task reward per rollout required");
  RolloutGroup g;
  g.prompt_id = std::move(prompt_id);
  g.variant = variant;
  g.rollouts = std::move(rollouts);
  g.task_rewards = std::move(task_rewards);
  g.rewards.resize(g.rollouts.size());
  for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
    g.rewards[i] = shaped_reward(g.task_rewards[i], static_cast<int>(g.rollouts[i].length()), cfg);
  }
  g.advantages = g.rewards.size() >= 2 ? group_advantages(g.rewards) : std::vector<double>(g.rewards.size(), 0.0);
  g.kept = group_is_informative(g.task_rewards);
  return g;
}

std::vector<RolloutGroup> dynamic_filter(std::span<const RolloutGroup> groups, FilterStats* stats) {
  std::vector<RolloutGroup> kept;
  FilterStats s;
  for (const auto& g : groups) {
    if (group_is_informative(g.task_rewards)) {
      kept.push_back(g);
      kept.back().kept = true;
      ++s.kept;
    } else if (!g.task_rewards.empty() && g.task_rewards.front() > 0.0) {
      ++s.all_correct;
    } else if (!g.task_rewards.empty() && g.task_rewards.front() == 0.0) {
      ++s.all_wrong;
    } else {
      ++s.other_uniform;
    }
  }
  if (stats) *stats = s;
  return kept;
}

double token_surrogate(double ratio, double advantage, const DapoConfig& cfg) {
  const double clipped = std::clamp(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
  const double inner = std::min(ratio * advantage, clipped * advantage);
  if (advantage >= 0.0) return -inner;
  return -std::max(inner, cfg.dual_clip_c * advantage);
}

double token_surrogate_grad(double ratio, double advantage, const DapoConfig& cfg) {
  if (advantage > 0.0) return ratio <= 1.0 + cfg.eps_high ? -advantage : 0.0;
  if (advantage < 0.0) return ratio >= 1.0 - cfg.eps_low && ratio <= cfg.dual_clip_c ? -advantage : 0.0;
  return 0.0;
}

namespace {

struct FlatRollout {
  const Rollout* rollout;
  double advantage;
};

LossGraph rl_loss_impl(std::span<const RolloutGroup> groups, const PolicyParams& params,
                       const PolicyParams* old_params, const DapoConfig& cfg, int workers) {
  std::vector<FlatRollout> flat;
  std::size_t total_tokens = 0;
  for (const auto& g : groups) {
    if (!g.kept) continue;
    if (g.advantages.size() != g.rollouts.size()) throw std::invalid_argument("group advantages size mismatch");
    for (std::size_t i = 0; i < g.rollouts.size(); ++i) {
      flat.push_back({&g.rollouts[i], g.advantages[i]});
      total_tokens += g.rollouts[i].length();
    }
  }
  LossGraph graph;
  if (total_tokens == 0) {
    graph.add_scalar("rl", 0.0);
    return graph;
  }
  const auto V = static_cast<std::size_t>(params.config.vocab_size);
  const double inv_n = 1.0 / static_cast<double>(total_tokens);
  std::vector<SequenceTerm> terms(flat.size());
  std::vector<double> partial(flat.size(), 0.0);
  parallel_for(flat.size(), workers, [&](std::size_t i) {
    const Rollout& r = *flat[i].rollout;
    const double A = flat[i].advantage;
    const auto T = r.length();
    const auto dist = step_distributions(params, r.prompt, r.tokens);
    std::vector<double> old_lp;
    if (old_params) {
      old_lp = token_logprobs(*old_params, r.prompt, r.tokens);
    } else {
      if (r.step_logprobs.size() != T) throw std::invalid_argument("rollout step_logprobs size mismatch");
      old_lp = r.step_logprobs;
    }
    SequenceTerm term{"rl", r.prompt, r.tokens, std::vector<double>(T * V, 0.0)};
    double sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      const double* p = dist.data() + t * V;
      const double ratio = std::exp(std::log(p[r.tokens[t]]) - old_lp[t]);
      if (!std::isfinite(ratio)) {
        throw NonFiniteError(fmt::format("non-finite importance ratio at token {} of a rollout", t));
      }
      sum += token_surrogate(ratio, A, cfg);
      const double g = token_surrogate_grad(ratio, A, cfg) * ratio * inv_n;
      if (g == 0.0) continue;
      double* row = term.dlogits.data() + t * V;
      for (std::size_t v = 0; v < V; ++v) row[v] = -g * p[v];
      row[r.tokens[t]] += g;
    }
    partial[i] = sum;
    terms[i] = std::move(term);
  });
  double total = 0.0;
  for (double s : partial) total += s;
  graph.add_scalar("rl", total * inv_n);
  for (auto& t : terms) graph.add_sequence(std::move(t));
  return graph;
}

}  // namespace

LossGraph rl_loss(std::span<const RolloutGroup> groups, const PolicyParams& params, const DapoConfig& cfg,
                  int workers) {
  return rl_loss_impl(groups, params, nullptr, cfg, workers);
}

LossGraph rl_loss(std::span<const RolloutGroup> groups, const PolicyParams& params, const PolicyParams& old_params,
                  const DapoConfig& cfg, int workers) {
  return rl_loss_impl(groups, params, &old_params, cfg, workers);
}

void apply_update(PolicyParams& params, const Gradients& grads, const DapoConfig& cfg, OptimizerState* state) {
  if (grads.values.size() != params.values.size()) throw std::invalid_argument("gradient shape mismatch");
  for (double g : grads.values) {
    if (!std::isfinite(g)) throw NonFiniteError("non-finite gradient in update");
  }
  const double lr = cfg.learning_rate;
  if (cfg.optimizer == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.values.size(); ++i) params.values[i] -= lr * grads.values[i];
    return;
  }
  if (!state) throw std::invalid_argument("Adam requires optimizer state");
  if (state->m.empty()) {
    state->m.assign(params.values.size(), 0.0);
    state->v.assign(params.values.size(), 0.0);
  }
  state->t += 1;
  const double b1 = cfg.adam_beta1;
  const double b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state->t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state->t));
  for (std::size_t i = 0; i < params.values.size(); ++i) {
    const double g = grads.values[i];
    state->m[i] = b1 * state->m[i] + (1.0 - b1) * g;
    state->v[i] = b2 * state->v[i] + (1.0 - b2) * g * g;
    params.values[i] -= lr * (state->m[i] / c1) / (std::sqrt(state->v[i] / c2) + cfg.adam_eps);
  }
}

}  // namespace modgap
