// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/runner.hpp"

#include <fmt/chrono.h>
#include <fmt/format.h>

#include <chrono>
#include <deque>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "modgap/base_model.hpp"
#include "modgap/checkpoint.hpp"
#include "modgap/ckl_distill.hpp"
#include "modgap/parallel.hpp"
#include "modgap/rl_engine.hpp"
#include "modgap/rng.hpp"
#include "modgap/schedule.hpp"
#include "modgap/verifier.hpp"

namespace modgap {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(t));
}

void write_atomic(const fs::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp));
    out << text;
    out.flush();
    if (!out) throw std::runtime_error(fmt::format("write failed: {}", tmp));
  }
  fs::rename(tmp, path);
}

json metrics_json(const GapMetrics& m) {
  return {{"text_acc", m.text_acc}, {"vision_acc", m.vision_acc}, {"overall", m.overall}, {"gap", m.gap},
          {"n_text", m.n_text},     {"n_vision", m.n_vision},     {"k", m.k},             {"weighting", weighting_name(m.weighting)}};
}

GapMetrics metrics_from_json(const json& j) {
  GapMetrics m;
  m.text_acc = j.at("text_acc").get<double>();
  m.vision_acc = j.at("vision_acc").get<double>();
  m.overall = j.at("overall").get<double>();
  m.gap = j.at("gap").get<double>();
  m.n_text = j.at("n_text").get<std::size_t>();
  m.n_vision = j.at("n_vision").get<std::size_t>();
  m.k = j.at("k").get<int>();
  m.weighting = parse_weighting(j.at("weighting").get<std::string>());
  return m;
}

}  // namespace

void write_manifest(const fs::path& path, const RunManifest& m) {
  json j = {{"status", m.status},
            {"error", m.error},
            {"config_text", m.config_text},
            {"overrides", m.overrides},
            {"code_version", m.code_version},
            {"started_at", m.started_at},
            {"finished_at", m.finished_at},
            {"strategy", m.strategy},
            {"gen_batches", m.gen_batches},
            {"steps", m.steps},
            {"stage_switch_gen_batch", m.stage_switch_gen_batch},
            {"checkpoints", m.checkpoints},
            {"initial_metrics", m.initial_metrics ? metrics_json(*m.initial_metrics) : json(nullptr)},
            {"final_metrics", m.final_metrics ? metrics_json(*m.final_metrics) : json(nullptr)}};
  write_atomic(path, j.dump(2) + "\n");
}

RunManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open manifest {}", path.string()));
  json j;
  in >> j;
  RunManifest m;
  m.status = j.at("status").get<std::string>();
  m.error = j.value("error", "");
  m.config_text = j.at("config_text").get<std::string>();
  m.overrides = j.at("overrides").get<std::vector<std::string>>();
  m.code_version = j.value("code_version", "");
  m.started_at = j.value("started_at", "");
  m.finished_at = j.value("finished_at", "");
  m.strategy = j.value("strategy", "");
  m.gen_batches = j.value("gen_batches", 0);
  m.steps = j.value("steps", std::int64_t{0});
  m.stage_switch_gen_batch = j.value("stage_switch_gen_batch", -1);
  m.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  if (!j.at("initial_metrics").is_null()) m.initial_metrics = metrics_from_json(j.at("initial_metrics"));
  if (!j.at("final_metrics").is_null()) m.final_metrics = metrics_from_json(j.at("final_metrics"));
  return m;
}

namespace {

// A sampled prompt group waiting in the update buffer.
struct PendingGroup {
  std::size_t instance = 0;
  bool ckl_active = false;
  RolloutGroup group;
};

json rollout_json(const Rollout& r) {
  return {{"scene", r.prompt.scene_tokens},
          {"text", r.prompt.text_tokens},
          {"tokens", r.tokens},
          {"logprobs", r.step_logprobs},
          {"truncated", r.truncated}};
}

Rollout rollout_from_json(const json& j) {
  Rollout r;
  r.prompt.scene_tokens = j.at("scene").get<std::vector<Token>>();
  r.prompt.text_tokens = j.at("text").get<std::vector<Token>>();
  r.tokens = j.at("tokens").get<std::vector<Token>>();
  r.step_logprobs = j.at("logprobs").get<std::vector<double>>();
  r.truncated = j.at("truncated").get<bool>();
  return r;
}

json pending_json(const PendingGroup& p) {
  json rollouts = json::array();
  for (const auto& r : p.group.rollouts) rollouts.push_back(rollout_json(r));
  return {{"instance", p.instance},
          {"ckl_active", p.ckl_active},
          {"prompt_id", p.group.prompt_id},
          {"variant", static_cast<int>(p.group.variant)},
          {"rollouts", rollouts},
          {"task_rewards", p.group.task_rewards},
          {"rewards", p.group.rewards},
          {"advantages", p.group.advantages},
          {"kept", p.group.kept}};
}

PendingGroup pending_from_json(const json& j) {
  PendingGroup p;
  p.instance = j.at("instance").get<std::size_t>();
  p.ckl_active = j.at("ckl_active").get<bool>();
  p.group.prompt_id = j.at("prompt_id").get<std::string>();
  p.group.variant = static_cast<PromptVariant>(j.at("variant").get<int>());
  for (const auto& r : j.at("rollouts")) p.group.rollouts.push_back(rollout_from_json(r));
  p.group.task_rewards = j.at("task_rewards").get<std::vector<double>>();
  p.group.rewards = j.at("rewards").get<std::vector<double>>();
  p.group.advantages = j.at("advantages").get<std::vector<double>>();
  p.group.kept = j.at("kept").get<bool>();
  return p;
}

struct OutputFiles {
  fs::path dir;
  fs::path trajectory() const { return dir / "trajectory.csv"; }
  fs::path train_log() const { return dir / "train_log.jsonl"; }
  fs::path ckl_csv() const { return dir / "ckl.csv"; }
  fs::path manifest() const { return dir / "manifest.json"; }
  fs::path resume_state() const { return dir / "resume.json"; }
  fs::path resume_params() const { return dir / "resume_params.mglb"; }
};

class Appender {
 public:
  Appender() = default;
  Appender(const fs::path& path, bool truncate) : path_(path) {
    out_.open(path, truncate ? std::ios::trunc | std::ios::out : std::ios::app | std::ios::out);
    if (!out_) throw std::runtime_error(fmt::format("cannot open {}", path.string()));
  }
  void line(const std::string& s) {
    out_ << s << '\n';
    out_.flush();
    if (!out_) throw std::runtime_error(fmt::format("write failed: {}", path_.string()));
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

std::uintmax_t file_size_or_zero(const fs::path& p) { return fs::exists(p) ? fs::file_size(p) : 0; }

class Trainer {
 public:
  Trainer(const Config& raw, std::ostream* log) : raw_(raw), cfg_(experiment_from(raw)), log_(log) {
    files_.dir = cfg_.output_dir;
  }

  RunManifest run();

 private:
  void evaluate_and_checkpoint();
  void sample_gen_batch();
  void maybe_update();
  void save_resume_state();
  bool load_resume_state();
  void finish_manifest(const std::string& status);

  const Config& raw_;
  ExperimentConfig cfg_;
  std::ostream* log_;
  OutputFiles files_;
  std::vector<TaskInstance> train_, test_;
  PolicyParams params_;
  OptimizerState opt_;
  TrainState state_;
  std::deque<PendingGroup> pending_;
  RunManifest manifest_;
  Appender trajectory_, train_log_, ckl_log_;
};

void Trainer::evaluate_and_checkpoint() {
  const auto m = evaluate_gap(params_, test_, cfg_.sampling(), cfg_.eval.seed);
  if (!manifest_.initial_metrics) manifest_.initial_metrics = m;
  manifest_.final_metrics = m;
  trajectory_.line(fmt::format("{},{:.6f},{:.6f},{:.6f}", state_.gen_batches, m.text_acc, m.vision_acc, m.gap));
  const auto name = fmt::format("ckpt_gb{:06d}.mglb", state_.gen_batches);
  save_checkpoint(files_.dir / name, params_);
  manifest_.checkpoints.push_back(name);
  if (log_) {
    *log_ << fmt::format("[{}] gen_batch {} text {:.4f} vision {:.4f} gap {:.4f}\n",
                         strategy_name(cfg_.strategy.kind), state_.gen_batches, m.text_acc, m.vision_acc, m.gap);
  }
}

void Trainer::sample_gen_batch() {
  const auto& d = cfg_.dapo;
  const auto spec = next_batch_spec(cfg_.strategy, state_, d.batch_size);
  const auto gb = static_cast<std::uint64_t>(state_.gen_batches);
  Rng rng(derive_seed({cfg_.rollout_seed, gb, 0x7072}));
  const int n = spec.n_d1 + spec.n_d2;
  std::vector<std::size_t> picks(n);
  for (auto& p : picks) p = rng.below(train_.size());
  const MatchRule rule{MatchRule::Mode::RelativeError, cfg_.eval.tol};
  std::vector<PendingGroup> groups(n);
  parallel_for(static_cast<std::size_t>(n), cfg_.workers, [&](std::size_t i) {
    const auto& inst = train_[picks[i]];
    const auto variant = static_cast<int>(i) < spec.n_d1 ? PromptVariant::FullText : PromptVariant::PartialText;
    const auto enc = encode_prompt(params_, render_prompt(inst, variant));
    std::vector<Rollout> rollouts;
    std::vector<double> rewards;
    for (int j = 0; j < d.group_size; ++j) {
      const auto seed = derive_seed({cfg_.rollout_seed, gb, i, static_cast<std::uint64_t>(j)});
      rollouts.push_back(sample_sequence(params_, enc, d.max_resp_len, d.temperature, seed));
      rewards.push_back(reward(rollouts.back(), inst, rule));
    }
    groups[i].instance = picks[i];
    groups[i].ckl_active = spec.ckl_active && variant == PromptVariant::FullText;
    groups[i].group = make_group(inst.id, variant, std::move(rollouts), std::move(rewards), d);
  });
  for (auto& g : groups) pending_.push_back(std::move(g));
}

void Trainer::maybe_update() {
  const auto& d = cfg_.dapo;
  auto kept_in_buffer = [&] {
    int k = 0;
    for (const auto& p : pending_) k += p.group.kept ? 1 : 0;
    return k;
  };
  while (kept_in_buffer() >= d.mini_batch) {
    std::vector<PendingGroup> taken;
    int nk = 0;
    while (nk < d.mini_batch) {
      nk += pending_.front().group.kept ? 1 : 0;
      taken.push_back(std::move(pending_.front()));
      pending_.pop_front();
    }
    std::vector<RolloutGroup> groups;
    std::vector<CklItem> items;
    FilterStats stats;
    double reward_sum = 0.0;
    std::size_t reward_n = 0;
    for (const auto& p : taken) {
      groups.push_back(p.group);
      for (double r : p.group.task_rewards) reward_sum += r;
      reward_n += p.group.task_rewards.size();
      if (p.ckl_active) {
        const auto pair = PairedPrompt::from_instance(train_[p.instance]);
        for (std::size_t j = 0; j < p.group.rollouts.size(); ++j) {
          items.push_back({pair, p.group.rollouts[j].tokens, p.group.task_rewards[j] > 0.0, p.group.kept});
        }
      }
    }
    dynamic_filter(groups, &stats);
    const auto rl = rl_loss(groups, params_, d, cfg_.workers);
    CklBatch ckl;
    if (!items.empty()) ckl = gated_ckl_batch(params_, items, cfg_.ckl, cfg_.workers);
    const auto total = combine_loss(rl, ckl.graph, cfg_.ckl);
    const auto grads = backward(params_, total, cfg_.workers);
    apply_update(params_, grads, d, &opt_);
    const bool has_ckl = !items.empty() && ckl.gated > 0;
    record_update(cfg_.strategy, state_, has_ckl ? &ckl.mean_ckl : nullptr);
    json line = {{"step", state_.step},
                 {"gen_batches", state_.gen_batches},
                 {"kept_groups", stats.kept},
                 {"filtered_all_correct", stats.all_correct},
                 {"filtered_all_wrong", stats.all_wrong},
                 {"mean_reward", reward_n ? reward_sum / static_cast<double>(reward_n) : 0.0},
                 {"rl_loss", rl.value()},
                 {"ckl_loss", ckl.mean_ckl},
                 {"grad_norm", grads.norm()}};
    train_log_.line(line.dump());
    ckl_log_.line(fmt::format("{},{:.9g},{:.6f},{}", state_.step, ckl.mean_ckl, ckl.gated_fraction(),
                              items.empty() ? 0.0 : cfg_.ckl.alpha));
  }
}

void Trainer::save_resume_state() {
  save_checkpoint(files_.resume_params(), params_);
  json pending = json::array();
  for (const auto& p : pending_) pending.push_back(pending_json(p));
  json j = {{"step", state_.step},
            {"gen_batches", state_.gen_batches},
            {"stage", static_cast<int>(state_.stage)},
            {"stage_switch_gen_batch", state_.stage_switch_gen_batch},
            {"ckl_window", std::vector<double>(state_.ckl_window.begin(), state_.ckl_window.end())},
            {"opt_t", opt_.t},
            {"opt_m", opt_.m},
            {"opt_v", opt_.v},
            {"pending", pending},
            {"checkpoints", manifest_.checkpoints},
            {"initial_metrics", manifest_.initial_metrics ? metrics_json(*manifest_.initial_metrics) : json(nullptr)},
            {"final_metrics", manifest_.final_metrics ? metrics_json(*manifest_.final_metrics) : json(nullptr)},
            {"started_at", manifest_.started_at},
            {"sizes",
             {{"trajectory", file_size_or_zero(files_.trajectory())},
              {"train_log", file_size_or_zero(files_.train_log())},
              {"ckl", file_size_or_zero(files_.ckl_csv())}}}};
  write_atomic(files_.resume_state(), j.dump() + "\n");
}

bool Trainer::load_resume_state() {
  if (!fs::exists(files_.resume_state())) return false;
  std::ifstream in(files_.resume_state());
  json j;
  in >> j;
  params_ = load_checkpoint(files_.resume_params());
  params_.config.context_limit = cfg_.policy.context_limit;
  params_.config.eos = cfg_.policy.eos;
  state_.step = j.at("step").get<std::int64_t>();
  state_.gen_batches = j.at("gen_batches").get<int>();
  state_.stage = static_cast<Stage>(j.at("stage").get<int>());
  state_.stage_switch_gen_batch = j.at("stage_switch_gen_batch").get<int>();
  const auto window = j.at("ckl_window").get<std::vector<double>>();
  state_.ckl_window.assign(window.begin(), window.end());
  opt_.t = j.at("opt_t").get<std::int64_t>();
  opt_.m = j.at("opt_m").get<std::vector<double>>();
  opt_.v = j.at("opt_v").get<std::vector<double>>();
  for (const auto& p : j.at("pending")) pending_.push_back(pending_from_json(p));
  manifest_.checkpoints = j.at("checkpoints").get<std::vector<std::string>>();
  if (!j.at("initial_metrics").is_null()) manifest_.initial_metrics = metrics_from_json(j.at("initial_metrics"));
  if (!j.at("final_metrics").is_null()) manifest_.final_metrics = metrics_from_json(j.at("final_metrics"));
  manifest_.started_at = j.at("started_at").get<std::string>();
  const auto& sizes = j.at("sizes");
  fs::resize_file(files_.trajectory(), sizes.at("trajectory").get<std::uintmax_t>());
  fs::resize_file(files_.train_log(), sizes.at("train_log").get<std::uintmax_t>());
  fs::resize_file(files_.ckl_csv(), sizes.at("ckl").get<std::uintmax_t>());
  return true;
}

void Trainer::finish_manifest(const std::string& status) {
  manifest_.status = status;
  manifest_.finished_at = now_iso();
  manifest_.gen_batches = state_.gen_batches;
  manifest_.steps = state_.step;
  manifest_.stage_switch_gen_batch = state_.stage_switch_gen_batch;
  write_manifest(files_.manifest(), manifest_);
}

RunManifest Trainer::run() {
  fs::create_directories(files_.dir);
  manifest_.config_text = raw_.raw_text();
  manifest_.overrides = raw_.overrides();
  manifest_.code_version = std::string(kCodeVersion);
  manifest_.started_at = now_iso();
  manifest_.strategy = std::string(strategy_name(cfg_.strategy.kind));
  train_ = make_dataset({cfg_.data_seed, static_cast<std::size_t>(cfg_.train_size), cfg_.difficulty, Split::Train});
  test_ = make_dataset({cfg_.data_seed, static_cast<std::size_t>(cfg_.test_size), cfg_.difficulty, Split::Test});

  const bool resumed = cfg_.resume && load_resume_state();
  trajectory_ = Appender(files_.trajectory(), !resumed);
  train_log_ = Appender(files_.train_log(), !resumed);
  ckl_log_ = Appender(files_.ckl_csv(), !resumed);
  if (!resumed) {
    trajectory_.line("gen_batch,text_acc,vision_acc,gap");
    ckl_log_.line("step,mean_ckl,gated_fraction,alpha");
  }
  if (!resumed && should_stop(cfg_.strategy, state_)) {
    finish_manifest("completed");
    return manifest_;
  }
  try {
    if (!resumed) {
      params_ = load_or_train_base_model(cfg_, train_, log_);
      evaluate_and_checkpoint();
    }
    while (!should_stop(cfg_.strategy, state_)) {
      sample_gen_batch();
      maybe_update();
      finish_gen_batch(cfg_.strategy, state_);
      const bool done = should_stop(cfg_.strategy, state_);
      if (state_.gen_batches % cfg_.eval.every == 0 || done) {
        evaluate_and_checkpoint();
        save_resume_state();
      }
      if (!done && cfg_.stop_after > 0 && state_.gen_batches == cfg_.stop_after) {
        save_resume_state();
        finish_manifest("interrupted");
        return manifest_;
      }
    }
  } catch (const NonFiniteError& e) {
    manifest_.error = e.what();
    finish_manifest("failed");
    throw;
  }
  finish_manifest("completed");
  return manifest_;
}

}  // namespace

RunManifest run_train(const Config& config, std::ostream* log) {
  Trainer t(config, log);
  return t.run();
}

std::vector<MetricsRow> run_eval(const Config& config, std::ostream& out) {
  const auto cfg = experiment_from(config);
  const auto records = config.get_string("eval.records", "");
  const auto checkpoint = config.get_string("eval.checkpoint", "");
  if (records.empty() == checkpoint.empty()) {
    throw std::invalid_argument("eval needs exactly one of eval.records or eval.checkpoint");
  }
  std::vector<MetricsRow> rows;
  if (!records.empty()) {
    const auto recs = load_records(records);
    const auto w = parse_weighting(config.get_string("eval.weighting", "simple"));
    rows.emplace_back("records", aggregate_records(recs, w, MatchRule{MatchRule::Mode::RelativeError, cfg.eval.tol}));
  } else {
    auto params = load_checkpoint(checkpoint);
    params.config.context_limit = cfg.policy.context_limit;
    const auto test =
        make_dataset({cfg.data_seed, static_cast<std::size_t>(cfg.test_size), cfg.difficulty, Split::Test});
    rows.emplace_back("test", evaluate_gap(params, test, cfg.sampling(), cfg.eval.seed));
  }
  out << format_metrics_table(rows);
  fs::path csv = config.get_string("eval.output", "");
  if (csv.empty()) csv = cfg.output_dir / "metrics.csv";
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  write_metrics_csv(csv, rows);
  return rows;
}

std::vector<Config> expand_compare(const Config& config) {
  const auto list = config.get_string("compare.strategies", "");
  if (list.empty()) throw std::invalid_argument("compare needs compare.strategies or at least two configs");
  const auto base_dir = config.get_string("run.output_dir", "runs/compare");
  std::vector<Config> out;
  std::stringstream ss(list);
  std::string name;
  while (std::getline(ss, name, ',')) {
    if (name.empty()) continue;
    parse_strategy(name);
    Config c = config;
    c.apply_override("strategy=" + name);
    c.apply_override("run.output_dir=" + (fs::path(base_dir) / name).string());
    if (config.get_string("base.checkpoint", "").empty()) {
      c.apply_override("base.checkpoint=" + (fs::path(base_dir) / "base.mglb").string());
    }
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<MetricsRow> run_compare(std::span<const Config> configs, const fs::path& output_csv, std::ostream* log) {
  if (configs.size() < 2) throw std::invalid_argument("compare needs at least two configs");
  std::vector<MetricsRow> rows;
  for (const auto& c : configs) {
    const auto cfg = experiment_from(c);
    const auto manifest_path = cfg.output_dir / "manifest.json";
    std::optional<RunManifest> m;
    if (fs::exists(manifest_path)) {
      auto cached = read_manifest(manifest_path);
      if (cached.status == "completed" && cached.config_text == c.raw_text() && cached.overrides == c.overrides()) {
        m = std::move(cached);
        if (log) *log << fmt::format("[{}] using cached run in {}\n", m->strategy, cfg.output_dir.string());
      }
    }
    if (!m) m = run_train(c, log);
    if (!m->final_metrics) throw std::runtime_error(fmt::format("run in {} has no metrics", cfg.output_dir.string()));
    rows.emplace_back(std::string(strategy_name(cfg.strategy.kind)), *m->final_metrics);
  }
  if (output_csv.has_parent_path()) fs::create_directories(output_csv.parent_path());
  std::ofstream out(output_csv);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", output_csv.string()));
  out << "strategy,text_acc,vision_acc,overall,gap\n";
  for (const auto& [name, m] : rows) {
    out << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f}\n", name, m.text_acc, m.vision_acc, m.overall, m.gap);
  }
  return rows;
}

void run_gen_data(const Config& config, std::ostream* log) {
  const auto cfg = experiment_from(config);
  const fs::path dir = config.get_string("gen.output", (cfg.output_dir / "data").string());
  fs::create_directories(dir);
  const auto train =
      make_dataset({cfg.data_seed, static_cast<std::size_t>(cfg.train_size), cfg.difficulty, Split::Train});
  const auto test = make_dataset({cfg.data_seed, static_cast<std::size_t>(cfg.test_size), cfg.difficulty, Split::Test});
  save_dataset(dir / "train.jsonl", train);
  save_dataset(dir / "test.jsonl", test);
  if (log) *log << fmt::format("wrote {} train and {} test instances to {}\n", train.size(), test.size(), dir.string());
}

}  // namespace modgap
