// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "modgap/policy.hpp"
#include "modgap/task_world.hpp"

namespace modgap {

/// Full-text and partial-text prompts of one instance.
struct PairedPrompt {
  PromptEncoding x1;
  PromptEncoding x2;
  std::string instance_id;

  static PairedPrompt from_instance(const TaskInstance& instance);
  void validate() const;
};

struct CklConfig {
  double alpha = 0.01;
  bool gate_on_correct = true;
  bool apply_to_all_rollouts = true;

  void validate() const;
};

inline constexpr double kProbFloor = 1e-12;

/// sum_v p_v (log max(p_v, floor) - log max(q_v, floor)).
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Time-averaged forward KL between the partial-text student distributions
/// and the full-text teacher distributions along `tokens`.
double contrastive_kl(const PolicyParams& params, const PairedPrompt& pair, std::span<const Token> tokens);

/// Differentiable form; the teacher is evaluated under `params` and treated
/// as a constant. Sequence terms are scaled by `weight`.
LossGraph contrastive_kl_graph(const PolicyParams& params, const PairedPrompt& pair, std::span<const Token> tokens,
                               double weight = 1.0);

/// Same loss with explicit teacher distributions (T x vocab_size).
LossGraph contrastive_kl_graph_with_teacher(const PolicyParams& params, const PromptEncoding& x2,
                                            std::span<const Token> tokens, std::span<const double> teacher,
                                            double weight = 1.0);

struct CklItem {
  PairedPrompt pair;
  std::vector<Token> tokens;  // rollout sampled from x1
  bool correct = false;
  bool kept = true;  // whether its group survived dynamic filtering
};

struct CklBatch {
  LossGraph graph;  // scalar term "ckl" holds the batch mean
  double mean_ckl = 0.0;
  std::size_t gated = 0;
  std::size_t total = 0;

  double gated_fraction() const { return total ? static_cast<double>(gated) / static_cast<double>(total) : 0.0; }
};

/// Mean contrastive KL over the rollouts that pass the gate.
CklBatch gated_ckl_batch(const PolicyParams& params, std::span<const CklItem> items, const CklConfig& cfg,
                         int workers = 1);

double combine_loss(double rl_loss, double ckl, const CklConfig& cfg);
/// rl + alpha * ckl as a graph.
LossGraph combine_loss(const LossGraph& rl, const LossGraph& ckl, const CklConfig& cfg);

}  // namespace modgap
