// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/ckl_distill.hpp"

#include <cmath>
#include <stdexcept>

#include "modgap/parallel.hpp"

namespace modgap {

PairedPrompt PairedPrompt::from_instance(const TaskInstance& instance) {
  return {render_prompt(instance, PromptVariant::FullText), render_prompt(instance, PromptVariant::PartialText),
          instance.id};
}

void PairedPrompt::validate() const {
  if (x1.scene_tokens != x2.scene_tokens) throw std::invalid_argument("paired prompts must share the scene channel");
}

void CklConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("ckl.alpha must be >= 0");
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
  double s = 0.0;
  for (std::size_t v = 0; v < p.size(); ++v) {
    if (p[v] == 0.0) continue;
    s += p[v] * (std::log(std::max(p[v], kProbFloor)) - std::log(std::max(q[v], kProbFloor)));
  }
  return s;
}

namespace {

double ckl_with_teacher(const PolicyParams& params, const PromptEncoding& x2, std::span<const Token> tokens,
                        std::span<const double> teacher, double weight, SequenceTerm* term) {
  const std::size_t T = tokens.size();
  if (T == 0) throw std::invalid_argument("contrastive_kl needs a non-empty rollout");
  const auto V = static_cast<std::size_t>(params.config.vocab_size);
  if (teacher.size() != T * V) throw std::invalid_argument("teacher distributions size mismatch");
  const auto student = step_distributions(params, x2, tokens);
  double total = 0.0;
  if (term) {
    term->term = "ckl";
    term->prompt = x2;
    term->tokens.assign(tokens.begin(), tokens.end());
    term->dlogits.assign(T * V, 0.0);
  }
  std::vector<double> g(V);
  for (std::size_t t = 0; t < T; ++t) {
    const double* p = student.data() + t * V;
    const double* q = teacher.data() + t * V;
    total += kl_divergence({p, V}, {q, V});
    if (!term) continue;
    double mean = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      g[v] = std::log(std::max(p[v], kProbFloor)) - std::log(std::max(q[v], kProbFloor)) +
             (p[v] >= kProbFloor ? 1.0 : 0.0);
      mean += p[v] * g[v];
    }
    double* row = term->dlogits.data() + t * V;
    for (std::size_t v = 0; v < V; ++v) row[v] = weight * p[v] * (g[v] - mean) / static_cast<double>(T);
  }
  return total / static_cast<double>(T);
}

}  // namespace

double contrastive_kl(const PolicyParams& params, const PairedPrompt& pair, std::span<const Token> tokens) {
  if (tokens.empty()) throw std::invalid_argument("contrastive_kl needs a non-empty rollout");
  const auto teacher = step_distributions(params, pair.x1, tokens);
  return ckl_with_teacher(params, pair.x2, tokens, teacher, 1.0, nullptr);
}

LossGraph contrastive_kl_graph_with_teacher(const PolicyParams& params, const PromptEncoding& x2,
                                            std::span<const Token> tokens, std::span<const double> teacher,
                                            double weight) {
  SequenceTerm term;
  const double value = ckl_with_teacher(params, x2, tokens, teacher, weight, &term);
  LossGraph graph;
  graph.add_scalar("ckl", weight * value);
  graph.add_sequence(std::move(term));
  return graph;
}

LossGraph contrastive_kl_graph(const PolicyParams& params, const PairedPrompt& pair, std::span<const Token> tokens,
                               double weight) {
  if (tokens.empty()) throw std::invalid_argument("contrastive_kl needs a non-empty rollout");
  const auto teacher = step_distributions(params, pair.x1, tokens);
  return contrastive_kl_graph_with_teacher(params, pair.x2, tokens, teacher, weight);
}

CklBatch gated_ckl_batch(const PolicyParams& params, std::span<const CklItem> items, const CklConfig& cfg,
                         int workers) {
  cfg.validate();
  CklBatch out;
  out.total = items.size();
  std::vector<const CklItem*> gated;
  for (const auto& it : items) {
    if (cfg.gate_on_correct && !it.correct) continue;
    if (!cfg.apply_to_all_rollouts && !it.kept) continue;
    gated.push_back(&it);
  }
  out.gated = gated.size();
  if (gated.empty()) {
    out.graph.add_scalar("ckl", 0.0);
    return out;
  }
  const double w = 1.0 / static_cast<double>(gated.size());
  std::vector<double> values(gated.size());
  std::vector<SequenceTerm> terms(gated.size());
  parallel_for(gated.size(), workers, [&](std::size_t i) {
    const auto& it = *gated[i];
    const auto teacher = step_distributions(params, it.pair.x1, it.tokens);
    values[i] = ckl_with_teacher(params, it.pair.x2, it.tokens, teacher, w, &terms[i]);
  });
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean_ckl = sum * w;
  out.graph.add_scalar("ckl", out.mean_ckl);
  for (auto& t : terms) out.graph.add_sequence(std::move(t));
  return out;
}

double combine_loss(double rl_loss, double ckl, const CklConfig& cfg) { return rl_loss + cfg.alpha * ckl; }

LossGraph combine_loss(const LossGraph& rl, const LossGraph& ckl, const CklConfig& cfg) {
  LossGraph total = rl;
  if (cfg.alpha != 0.0) total.merge(ckl, cfg.alpha);
  return total;
}

}  // namespace modgap
