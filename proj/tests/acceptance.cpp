// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Each criterion prints one PASS/FAIL line; the process
// exits non-zero if any requested criterion fails.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "modgap/checkpoint.hpp"
#include "modgap/ckl_distill.hpp"
#include "modgap/eval_harness.hpp"
#include "modgap/rl_engine.hpp"
#include "modgap/runner.hpp"
#include "modgap/verifier.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace modgap;

namespace {

struct Outcome {
  bool pass = true;
  std::vector<std::string> notes;

  void check(bool ok, std::string what) {
    if (!ok) pass = false;
    notes.push_back((ok ? "ok   " : "FAIL ") + std::move(what));
  }
};

// ---------------------------------------------------------------------------
// 1. Metric arithmetic against the published base-model table.

struct TableRow {
  const char* model;
  const char* dataset;
  double text, vision, avg, gap;
};

constexpr std::array<TableRow, 20> kTable = {{
    {"Qwen2.5-VL 3B", "PGPS9K", 0.2397, 0.1812, 0.2105, 0.0585},
    {"Qwen2.5-VL 3B", "MathVerse", 0.3568, 0.2866, 0.3147, 0.0702},
    {"Qwen2.5-VL 7B", "PGPS9K", 0.3775, 0.2998, 0.3387, 0.0777},
    {"Qwen2.5-VL 7B", "MathVerse", 0.5501, 0.4576, 0.5110, 0.0925},
    {"MiniCPM-V-4", "PGPS9K", 0.3470, 0.3020, 0.3245, 0.0450},
    {"MiniCPM-V-4", "MathVerse", 0.4435, 0.3721, 0.4007, 0.0714},
    {"Gemma-3-4b-it", "PGPS9K", 0.4050, 0.2612, 0.3559, 0.1438},
    {"Gemma-3-4b-it", "MathVerse", 0.4236, 0.3350, 0.3705, 0.0886},
    {"Kimi-VL-A3B", "PGPS9K", 0.4057, 0.3132, 0.3595, 0.0925},
    {"Kimi-VL-A3B", "MathVerse", 0.5791, 0.4827, 0.5123, 0.0964},
    {"VL-Rethinker 7B", "PGPS9K", 0.4045, 0.3605, 0.3825, 0.0440},
    {"VL-Rethinker 7B", "MathVerse", 0.6542, 0.5728, 0.6053, 0.0814},
    {"InternVL3.5 8B", "PGPS9K", 0.5218, 0.3965, 0.4592, 0.1253},
    {"InternVL3.5 8B", "MathVerse", 0.6668, 0.5419, 0.5919, 0.1249},
    {"Qwen3-VL", "PGPS9K", 0.6970, 0.6699, 0.6835, 0.0271},
    {"Qwen3-VL", "MathVerse", 0.6406, 0.6089, 0.6167, 0.0317},
    {"GPT-5", "PGPS9K", 0.9400, 0.8000, 0.8700, 0.1400},
    {"GPT-5", "MathVerse", 0.7667, 0.6333, 0.7000, 0.1334},
    {"Gemini 2.5 Flash", "PGPS9K", 0.9200, 0.7400, 0.8300, 0.1800},
    {"Gemini 2.5 Flash", "MathVerse", 0.8696, 0.7778, 0.8200, 0.0918},
}};

Outcome criterion1(const fs::path&) {
  Outcome o;
  for (const auto& r : kTable) {
    const auto w = std::string_view(r.dataset) == "PGPS9K" ? Weighting::SimplePair : Weighting::Weighted;
    const std::vector<double> t = {r.text};
    const std::vector<double> v = {r.vision};
    const auto m = aggregate(t, v, w);
    const double davg = std::abs(m.overall - r.avg);
    const double dgap = std::abs(m.gap - r.gap);
    o.check(davg <= 5e-4 && dgap <= 5e-4,
            fmt::format("{:<17} {:<9} {:<6} avg {:.5f} (printed {:.4f}, |d| {:.2e})  gap {:.5f} (printed {:.4f})",
                        r.model, r.dataset, weighting_name(w), m.overall, r.avg, davg, m.gap, r.gap));
  }
  return o;
}

// ---------------------------------------------------------------------------
// 2. Contrastive KL closed form, identity and non-negativity.

Outcome criterion2(const fs::path&) {
  Outcome o;
  const std::vector<double> p = {0.5, 0.5};
  const std::vector<double> q = {0.25, 0.75};
  const double k = kl_divergence(p, q);
  const double closed = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  o.check(std::abs(k - closed) <= 1e-6 && std::round(k * 1e5) == 14384.0,
          fmt::format("KL((.5,.5)||(.25,.75)) = {:.8f}; closed form {:.8f}; 5-digit value 0.14384", k, closed));

  const auto params = testing::small_policy(2);
  const auto inst = testing::simple_instance();
  const auto pair = PairedPrompt::from_instance(inst);
  const PairedPrompt same{pair.x1, pair.x1, "identity"};
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto y = sample_sequence(params, pair.x1, 8, 1.0, s).tokens;
    worst = std::max(worst, std::abs(contrastive_kl(params, same, y)));
  }
  o.check(worst <= 1e-9, fmt::format("identical prompts: max |cKL| = {:.3e}", worst));

  Rng rng(11);
  double min_kl = 1.0;
  for (int i = 0; i < 10000; ++i) {
    const auto n = 2 + rng.below(30);
    std::vector<double> a(n), b(n);
    double sa = 0.0, sb = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      a[j] = std::exp(3.0 * rng.normal());
      b[j] = std::exp(3.0 * rng.normal());
      sa += a[j];
      sb += b[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      a[j] /= sa;
      b[j] /= sb;
    }
    min_kl = std::min(min_kl, kl_divergence(a, b));
  }
  o.check(min_kl >= 0.0, fmt::format("10000 random pairs: min KL = {:.3e}", min_kl));
  return o;
}

// ---------------------------------------------------------------------------
// 3. Gradient fidelity against central differences.

Outcome criterion3(const fs::path&) {
  Outcome o;
  const auto params = testing::small_policy(3);
  o.check(params.size() <= 5000, fmt::format("policy has {} parameters", params.size()));
  const auto inst = testing::simple_instance();
  const auto pair = PairedPrompt::from_instance(inst);
  DapoConfig cfg;
  cfg.max_resp_len = 32;
  cfg.overlong_buffer = 8;

  auto group = [&](std::uint64_t seed, std::vector<double> rewards) {
    std::vector<Rollout> rs;
    for (std::size_t j = 0; j < rewards.size(); ++j) rs.push_back(sample_sequence(params, pair.x1, 6, 1.0, seed + j));
    return make_group("g", PromptVariant::FullText, rs, rewards, cfg);
  };
  const std::vector<RolloutGroup> groups = {group(10, {1, 0, 0, 1}), group(20, {0, 0, 1, 0})};
  auto old = params;
  Rng rng(5);
  for (auto& x : old.values) x += 0.01 * rng.normal();

  const auto y = groups[0].rollouts[0].tokens;
  const auto teacher = step_distributions(params, pair.x1, y);
  CklConfig ckl;
  ckl.alpha = 0.01;

  auto rl_value = [&](const PolicyParams& p) { return rl_loss(groups, p, old, cfg).value(); };
  auto ckl_value = [&](const PolicyParams& p) {
    return ckl.alpha * contrastive_kl_graph_with_teacher(p, pair.x2, y, teacher).value();
  };
  auto combined_value = [&](const PolicyParams& p) { return rl_value(p) + ckl_value(p); };

  const auto rl_graph = rl_loss(groups, params, old, cfg);
  const auto ckl_graph = contrastive_kl_graph_with_teacher(params, pair.x2, y, teacher);
  LossGraph scaled_ckl;
  scaled_ckl.merge(ckl_graph, ckl.alpha);

  const std::array<std::pair<const char*, std::pair<LossGraph, std::function<double(const PolicyParams&)>>>, 3> cases = {{
      {"rl_loss", {rl_graph, rl_value}},
      {"alpha*cKL", {scaled_ckl, ckl_value}},
      {"combined", {combine_loss(rl_graph, ckl_graph, ckl), combined_value}},
  }};
  for (const auto& [name, c] : cases) {
    const auto grads = backward(params, c.first);
    const auto r = testing::finite_difference_check(params, grads.values, c.second, 50, 7, 1e-4);
    o.check(r.worst <= 1e-3, fmt::format("{:<10} worst relative error {:.3e} over 50 coordinates", name, r.worst));
  }
  return o;
}

// ---------------------------------------------------------------------------
// 4. Surrogate identities and zero gradient from filtered groups.

Outcome criterion4(const fs::path&) {
  Outcome o;
  DapoConfig cfg;
  Rng rng(4);
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const double ratio = (1.0 - cfg.eps_low) + (cfg.eps_low + cfg.eps_high) * rng.uniform();
    const double adv = (rng.uniform() - 0.5) * 10.0;
    if (token_surrogate(ratio, adv, cfg) != -ratio * adv) ++mismatches;
  }
  o.check(mismatches == 0, fmt::format("clip region identity: {} mismatches in 10000 draws", mismatches));

  int dual_nonneg = 0;
  int dual_neg = 0;
  int bound_violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const double ratio = std::exp((rng.uniform() - 0.5) * 10.0);
    const double adv = (rng.uniform() - 0.5) * 10.0;
    const double clipped = std::clamp(ratio, 1.0 - cfg.eps_low, 1.0 + cfg.eps_high);
    const double ppo = -std::min(ratio * adv, clipped * adv);
    const double s = token_surrogate(ratio, adv, cfg);
    if (s != ppo) (adv < 0.0 ? dual_neg : dual_nonneg)++;
    if (s > cfg.dual_clip_c * std::abs(adv) + 1e-12) ++bound_violations;
  }
  o.check(dual_nonneg == 0 && dual_neg > 0 && bound_violations == 0,
          fmt::format("dual clip active for A<0 in {} draws, for A>=0 in {}; bound violations {}", dual_neg,
                      dual_nonneg, bound_violations));

  const double e1 = token_surrogate(1.0, 1.0, cfg);
  const double e2 = token_surrogate(1.5, 1.0, cfg);
  const double e3 = token_surrogate(20.0, -1.0, cfg);
  o.check(e1 == -1.0 && std::abs(e2 + 1.28) <= 1e-15 && e3 == 10.0,
          fmt::format("examples: {} {} {} (expected -1, -1.28, 10)", e1, e2, e3));

  const auto params = testing::small_policy(4);
  const auto pair = PairedPrompt::from_instance(testing::simple_instance());
  auto group = [&](std::uint64_t seed, std::vector<double> rewards) {
    std::vector<Rollout> rs;
    for (std::size_t j = 0; j < rewards.size(); ++j) rs.push_back(sample_sequence(params, pair.x1, 6, 1.0, seed + j));
    return make_group("g", PromptVariant::FullText, rs, rewards, cfg);
  };
  const auto kept = group(1, {1, 0, 1, 0});
  const auto all_right = group(10, {1, 1, 1, 1});
  const auto all_wrong = group(20, {0, 0, 0, 0});
  const std::vector<RolloutGroup> with = {kept, all_right, all_wrong};
  const std::vector<RolloutGroup> without = dynamic_filter(with);
  const auto ga = backward(params, rl_loss(with, params, cfg));
  const auto gb = backward(params, rl_loss(without, params, cfg));
  o.check(without.size() == 1 && ga.values == gb.values,
          fmt::format("filtered groups: kept {} of 3, gradients identical: {}", without.size(), ga.values == gb.values));
  return o;
}

// ---------------------------------------------------------------------------
// 5. Overlong shaping.

Outcome criterion5(const fs::path&) {
  Outcome o;
  DapoConfig cfg;
  cfg.max_resp_len = 32;
  cfg.overlong_buffer = 8;
  cfg.overlong_penalty_factor = 1.0;
  const double a = shaped_reward(1.0, 24, cfg);
  const double b = shaped_reward(1.0, 28, cfg);
  const double c = shaped_reward(0.0, 32, cfg);
  o.check(a == 1.0 && b == 0.5 && c == -1.0, fmt::format("examples: {} {} {} (expected 1, 0.5, -1)", a, b, c));
  const double start = cfg.max_resp_len - cfg.overlong_buffer;
  auto linear = [&](double len) { return -cfg.overlong_penalty_factor * (len - start) / cfg.overlong_buffer; };
  const double left = std::abs(linear(start) - overlong_penalty(static_cast<int>(start), cfg));
  const double right = std::abs(linear(cfg.max_resp_len) - overlong_penalty(cfg.max_resp_len, cfg));
  o.check(left <= 1e-12 && right <= 1e-12,
          fmt::format("continuity at {} and {}: {:.1e} {:.1e}", start, cfg.max_resp_len, left, right));
  return o;
}

// ---------------------------------------------------------------------------
// Toy-world training runs shared by 6, 7 and 9.

constexpr const char* kToyConfig = R"(# toy world acceptance run
strategy = d1
data.difficulty = 3
data.train_size = 2000
data.test_size = 300
dapo.batch_size = 32
dapo.group_size = 8
dapo.mini_batch = 8
dapo.gen_batch_budget = 30
dapo.optimizer = adam
dapo.learning_rate = 0.003
eval.every = 5
eval.k = 4
)";

struct SeedTriple {
  int data, model, rollout;
};
constexpr std::array<SeedTriple, 3> kSeeds = {{{1, 100, 7}, {2, 102, 9}, {3, 103, 10}}};

Config toy_config(const fs::path& work, const SeedTriple& s, const std::string& strategy) {
  auto c = Config::parse(kToyConfig, "acceptance");
  c.apply_override(fmt::format("data.seed={}", s.data));
  c.apply_override(fmt::format("model.seed={}", s.model));
  c.apply_override(fmt::format("rollout.seed={}", s.rollout));
  c.apply_override("strategy=" + strategy);
  c.apply_override("base.checkpoint=" + (work / fmt::format("base_seed{}.mglb", s.data)).string());
  c.apply_override("run.output_dir=" + (work / fmt::format("seed{}", s.data) / strategy).string());
  return c;
}

// Runs training unless a completed run with the same configuration exists.
RunManifest train_cached(const Config& c) {
  const auto dir = experiment_from(c).output_dir;
  const auto path = dir / "manifest.json";
  if (fs::exists(path)) {
    auto m = read_manifest(path);
    if (m.status == "completed" && m.config_text == c.raw_text() && m.overrides == c.overrides()) return m;
  }
  std::cout << fmt::format("  training {}\n", dir.string()) << std::flush;
  return run_train(c);
}

Outcome criterion6(const fs::path& work) {
  Outcome o;
  int widened = 0;
  double init_sum = 0.0;
  double final_sum = 0.0;
  for (const auto& s : kSeeds) {
    const auto m = train_cached(toy_config(work, s, "d1"));
    const double g0 = m.initial_metrics->gap;
    const double g1 = m.final_metrics->gap;
    widened += g1 >= g0 ? 1 : 0;
    init_sum += g0;
    final_sum += g1;
    o.notes.push_back(fmt::format("     seed {}: gap {:.4f} -> {:.4f} (text {:.4f}, vision {:.4f})", s.data, g0, g1,
                                  m.final_metrics->text_acc, m.final_metrics->vision_acc));
  }
  o.check(widened >= 2, fmt::format("final gap >= initial gap in {} of 3 seeds", widened));
  o.check(final_sum / 3.0 > init_sum / 3.0,
          fmt::format("seed-averaged gap {:.4f} -> {:.4f}", init_sum / 3.0, final_sum / 3.0));
  return o;
}

Outcome criterion7(const fs::path& work) {
  Outcome o;
  const std::array<std::string, 3> strategies = {"d1", "curriculum", "kl_curriculum"};
  std::array<GapMetrics, 3> avg{};
  for (const auto& s : kSeeds) {
    for (std::size_t i = 0; i < strategies.size(); ++i) {
      const auto m = train_cached(toy_config(work, s, strategies[i]));
      const auto& f = *m.final_metrics;
      avg[i].text_acc += f.text_acc / 3.0;
      avg[i].vision_acc += f.vision_acc / 3.0;
      avg[i].overall += f.overall / 3.0;
      avg[i].gap += f.gap / 3.0;
      o.notes.push_back(fmt::format("     seed {} {:<13} text {:.4f} vision {:.4f} overall {:.4f} gap {:.4f}", s.data,
                                    strategies[i], f.text_acc, f.vision_acc, f.overall, f.gap));
    }
  }
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    o.notes.push_back(fmt::format("     mean   {:<13} text {:.4f} vision {:.4f} overall {:.4f} gap {:.4f}",
                                  strategies[i], avg[i].text_acc, avg[i].vision_acc, avg[i].overall, avg[i].gap));
  }
  o.check(avg[1].gap < avg[0].gap, fmt::format("gap curriculum {:.4f} < d1 {:.4f}", avg[1].gap, avg[0].gap));
  o.check(avg[1].vision_acc > avg[0].vision_acc,
          fmt::format("vision curriculum {:.4f} > d1 {:.4f}", avg[1].vision_acc, avg[0].vision_acc));
  o.check(avg[2].overall >= avg[1].overall - 0.02,
          fmt::format("overall kl_curriculum {:.4f} >= curriculum {:.4f} - 0.02", avg[2].overall, avg[1].overall));
  return o;
}

// ---------------------------------------------------------------------------
// 8. Evaluation protocol.

Outcome criterion8(const fs::path& work) {
  Outcome o;
  const auto in = MatchRule::in_distribution();
  const auto ood = MatchRule::out_of_distribution();
  auto num = [](double x) { return Answer::numeric(x); };
  auto extracted = [](std::string_view s) {
    const auto a = extract_answer(s);
    return a ? fmt::format("{}", a->number) : std::string("absent");
  };
  o.check(extracted("<think>...</think> \\boxed{42}") == "42", "extract: single span -> 42");
  o.check(extracted("\\boxed{3} then \\boxed{7}") == "7", "extract: last span -> 7");
  o.check(extracted("the answer is 42") == "absent", "extract: no span -> absent");
  o.check(judge(num(3.142), num(3.14159), in).correct, "judge: 3.142 vs 3.14159 at 1e-2 -> correct");
  o.check(judge(num(2.5), num(2.5), in).correct && judge(num(2.5), num(2.5), ood).correct,
          "judge: equal values -> correct");
  o.check(!judge(num(0.02), num(0.0), in).correct, "judge: 0.02 vs 0 at 1e-2 -> incorrect");
  o.check(!judge(num(1.03), num(1.0), in).correct && judge(num(1.03), num(1.0), ood).correct,
          "judge: 1.03 vs 1 is wrong at 1e-2 and right at 5e-2");

  auto inst = testing::simple_instance();
  Rollout good;
  good.tokens = {vocab::kThinkOpen, vocab::kThinkClose, vocab::kBoxedOpen, vocab::digit(7), vocab::kBoxedClose,
                 vocab::kEos};
  Rollout none;
  none.tokens = {vocab::kThinkOpen, vocab::kThinkClose, vocab::digit(7), vocab::kEos};
  o.check(reward(good, inst, in) == 1.0 && reward(none, inst, in) == 0.0, "reward: boxed 7 -> 1, no box -> 0");
  o.check(verify("\\boxed{6.99}", num(7), in).correct, "verify: 6.99 vs 7 at 1e-2 -> correct");

  const bool v4[] = {true, false, true, false};
  const bool v1[] = {false, false, true, false};
  o.check(pass_at_1(v4) == 0.5 && pass_at_1(v1) == 0.25, "pass@1 over k=4: 0.5 and 0.25");

  // Synthetic log: 2500 questions per side, 4 responses each, with 2397 and
  // 1812 correct responses out of 10000.
  fs::create_directories(work);
  const auto path = work / "table_row_records.jsonl";
  {
    std::ofstream out(path);
    auto emit = [&](const char* variant, int correct_total) {
      int left = correct_total;
      for (int q = 0; q < 2500; ++q) {
        std::string responses;
        for (int j = 0; j < 4; ++j) {
          const bool ok = left > 0;
          left -= ok ? 1 : 0;
          responses += fmt::format("{}\"<think></think>\\\\boxed{{{}}}\"", j ? "," : "", ok ? q : q + 1000);
        }
        out << fmt::format(R"({{"id":"q{}","variant":"{}","responses":[{}],"gold":{},"qtype":"numeric"}})", q,
                           variant, responses, q)
            << "\n";
      }
    };
    emit("text_centric", 2397);
    emit("vision_centric", 1812);
  }
  auto c = Config::parse("eval.weighting = simple\n", "acceptance");
  c.apply_override("eval.records=" + path.string());
  c.apply_override("eval.output=" + (work / "table_row_metrics.csv").string());
  std::ostringstream table;
  const auto rows = run_eval(c, table);
  const auto& m = rows.at(0).second;
  std::istringstream lines(table.str());
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  o.check(std::abs(m.gap - 0.0585) <= 1e-12 && row.find("0.0585") != std::string::npos,
          fmt::format("record mode: text {:.4f} vision {:.4f} gap {:.4f}; printed row '{}'", m.text_acc, m.vision_acc,
                      m.gap, row));
  return o;
}

// ---------------------------------------------------------------------------
// 9. Reproducibility.

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion9(const fs::path& work) {
  Outcome o;
  auto make = [&](const std::string& name) {
    auto c = toy_config(work, kSeeds[0], "kl_curriculum");
    c.apply_override("dapo.gen_batch_budget=8");
    c.apply_override("eval.every=2");
    c.apply_override("run.output_dir=" + (work / "repro" / name).string());
    return c;
  };
  for (const char* name : {"a", "b", "resumed"}) fs::remove_all(work / "repro" / name);
  std::cout << "  training reproducibility runs\n" << std::flush;
  const auto a = run_train(make("a"));
  const auto b = run_train(make("b"));
  const auto ta = slurp(work / "repro" / "a" / "trajectory.csv");
  const auto tb = slurp(work / "repro" / "b" / "trajectory.csv");
  o.check(!ta.empty() && ta == tb, fmt::format("identical runs: trajectory.csv bit-identical ({} bytes)", ta.size()));
  o.check(slurp(work / "repro" / "a" / a.checkpoints.back()) == slurp(work / "repro" / "b" / b.checkpoints.back()),
          "identical runs: final checkpoints bit-identical");

  auto interrupted = make("resumed");
  interrupted.apply_override("run.stop_after=3");
  const auto mi = run_train(interrupted);
  auto resumed = make("resumed");
  resumed.apply_override("run.resume=true");
  const auto mr = run_train(resumed);
  const auto tr = slurp(work / "repro" / "resumed" / "trajectory.csv");
  o.check(mi.status == "interrupted" && mr.status == "completed",
          fmt::format("interrupted at gen-batch {}, resumed to {}", mi.gen_batches, mr.gen_batches));
  o.check(tr == ta && mr.steps == a.steps, "resumed run: trajectory.csv and step count match uninterrupted run");
  o.check(slurp(work / "repro" / "resumed" / mr.checkpoints.back()) ==
              slurp(work / "repro" / "a" / a.checkpoints.back()),
          "resumed run: final checkpoint bit-identical");
  o.check(slurp(work / "repro" / "resumed" / "ckl.csv") == slurp(work / "repro" / "a" / "ckl.csv"),
          "resumed run: ckl.csv matches");
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"modgap acceptance checks"};
  std::vector<int> criteria;
  std::string workdir = "acceptance_runs";
  app.add_option("--criterion,-c", criteria, "criterion numbers to run (default: all)")->check(CLI::Range(1, 9));
  app.add_option("--workdir", workdir, "directory for training runs and generated files");
  CLI11_PARSE(app, argc, argv);
  if (criteria.empty()) criteria = {1, 2, 3, 4, 5, 6, 7, 8, 9};

  using Fn = Outcome (*)(const fs::path&);
  constexpr std::array<Fn, 9> fns = {criterion1, criterion2, criterion3, criterion4, criterion5,
                                     criterion6, criterion7, criterion8, criterion9};
  bool all = true;
  for (int n : criteria) {
    Outcome o;
    try {
      o = fns[static_cast<std::size_t>(n - 1)](workdir);
    } catch (const std::exception& e) {
      o.check(false, fmt::format("exception: {}", e.what()));
    }
    for (const auto& note : o.notes) std::cout << "  " << note << "\n";
    std::cout << fmt::format("criterion {}: {}\n", n, o.pass ? "PASS" : "FAIL") << std::flush;
    all = all && o.pass;
  }
  return all ? 0 : 1;
}
