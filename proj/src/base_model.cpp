// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/base_model.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "modgap/checkpoint.hpp"
#include "modgap/parallel.hpp"
#include "modgap/rl_engine.hpp"
#include "modgap/rng.hpp"

namespace modgap {

std::vector<Token> reference_response(std::int64_t answer) {
  std::vector<Token> r = {vocab::kThinkOpen, vocab::kThinkClose, vocab::kBoxedOpen};
  const auto digits = number_tokens(answer);
  r.insert(r.end(), digits.begin(), digits.end());
  r.push_back(vocab::kBoxedClose);
  r.push_back(vocab::kEos);
  return r;
}

LossGraph supervised_loss(const PolicyParams& params, std::span<const SupervisedExample> batch, int workers) {
  std::size_t n = 0;
  for (const auto& ex : batch) n += ex.response.size();
  LossGraph graph;
  if (n == 0) {
    graph.add_scalar("nll", 0.0);
    return graph;
  }
  const auto V = static_cast<std::size_t>(params.config.vocab_size);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> partial(batch.size());
  std::vector<SequenceTerm> terms(batch.size());
  parallel_for(batch.size(), workers, [&](std::size_t i) {
    const auto& ex = batch[i];
    const auto dist = step_distributions(params, ex.prompt, ex.response);
    SequenceTerm term{"nll", ex.prompt, ex.response, std::vector<double>(ex.response.size() * V)};
    double s = 0.0;
    for (std::size_t t = 0; t < ex.response.size(); ++t) {
      const double* p = dist.data() + t * V;
      s -= std::log(p[ex.response[t]]);
      double* row = term.dlogits.data() + t * V;
      for (std::size_t v = 0; v < V; ++v) row[v] = p[v] * inv_n;
      row[ex.response[t]] -= inv_n;
    }
    partial[i] = s;
    terms[i] = std::move(term);
  });
  double total = 0.0;
  for (double s : partial) total += s;
  graph.add_scalar("nll", total * inv_n);
  for (auto& t : terms) graph.add_sequence(std::move(t));
  return graph;
}

namespace {

void run_phase(PolicyParams& params, OptimizerState& opt, const DapoConfig& adam, std::span<const TaskInstance> train,
               int steps, double scene_fraction, int batch, std::uint64_t seed, const char* name, int workers,
               std::ostream* log) {
  for (int step = 0; step < steps; ++step) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(step)}));
    std::vector<SupervisedExample> examples;
    examples.reserve(batch);
    for (int b = 0; b < batch; ++b) {
      const auto& inst = train[rng.below(train.size())];
      SupervisedExample ex;
      if (scene_fraction > 0.0 && rng.uniform() < scene_fraction) {
        ex.prompt = render_prompt(inst, PromptVariant::PartialText);
      } else {
        ex.prompt.text_tokens = inst.full_text;
      }
      ex.response = reference_response(inst.gold_answer);
      examples.push_back(std::move(ex));
    }
    const auto graph = supervised_loss(params, examples, workers);
    const auto grads = backward(params, graph, workers);
    apply_update(params, grads, adam, &opt);
    if (log && (step % 100 == 0 || step + 1 == steps)) {
      *log << fmt::format("base {} step {} nll {:.4f}\n", name, step, graph.value());
    }
  }
}

nlohmann::json cache_key(const ExperimentConfig& cfg) {
  return {{"model_seed", cfg.model_seed},
          {"data_seed", cfg.data_seed},
          {"difficulty", cfg.difficulty},
          {"train_size", cfg.train_size},
          {"dim", cfg.policy.dim},
          {"heads", cfg.policy.heads},
          {"text_steps", cfg.base.text_steps},
          {"align_steps", cfg.base.align_steps},
          {"align_fraction", cfg.base.align_fraction},
          {"lr", cfg.base.lr},
          {"batch", cfg.base.batch},
          {"seed", cfg.base.seed}};
}

}  // namespace

PolicyParams train_base_model(const ExperimentConfig& cfg, std::span<const TaskInstance> train, std::ostream* log) {
  if (train.empty()) throw std::invalid_argument("base model needs training data");
  PolicyParams params = PolicyParams::random(cfg.policy, cfg.model_seed);
  DapoConfig adam;
  adam.optimizer = OptimizerKind::Adam;
  adam.learning_rate = cfg.base.lr;
  OptimizerState opt;
  const auto seed = derive_seed({cfg.base.seed, cfg.model_seed, 0x62617365});
  run_phase(params, opt, adam, train, cfg.base.text_steps, 0.0, cfg.base.batch, derive_seed({seed, 1}), "text",
            cfg.workers, log);
  run_phase(params, opt, adam, train, cfg.base.align_steps, cfg.base.align_fraction, cfg.base.batch,
            derive_seed({seed, 2}), "align", cfg.workers, log);
  return params;
}

PolicyParams load_or_train_base_model(const ExperimentConfig& cfg, std::span<const TaskInstance> train,
                                      std::ostream* log) {
  if (cfg.base.checkpoint.empty()) return train_base_model(cfg, train, log);
  const std::filesystem::path path = cfg.base.checkpoint;
  const auto key_path = std::filesystem::path(path.string() + ".json");
  const auto key = cache_key(cfg);
  if (std::filesystem::exists(path) && std::filesystem::exists(key_path)) {
    std::ifstream in(key_path);
    nlohmann::json stored;
    try {
      in >> stored;
    } catch (const nlohmann::json::exception&) {
      stored = nullptr;
    }
    if (stored == key) return load_checkpoint(path);
  }
  auto params = train_base_model(cfg, train, log);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  save_checkpoint(path, params);
  std::ofstream out(key_path);
  out << key.dump(2) << "\n";
  return params;
}

}  // namespace modgap
