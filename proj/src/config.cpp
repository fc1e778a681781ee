// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace modgap {

namespace {

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  const auto [end, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || end != last) {
    throw std::invalid_argument(fmt::format("config key '{}': cannot parse '{}'", key, text));
  }
  return v;
}

}  // namespace

Config Config::parse(std::string_view text, std::string_view source) {
  Config c;
  c.raw_ = std::string(text);
  std::size_t lineno = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = trim(text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos));
    ++lineno;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument(fmt::format("{}:{}: expected key = value", source, lineno));
    }
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument(fmt::format("{}:{}: empty key", source, lineno));
    c.values_[std::string(key)] = std::string(trim(line.substr(eq + 1)));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(fmt::format("cannot open config {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

void Config::set(const std::string& key, const std::string& value) { values_[key] = value; }

void Config::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw std::invalid_argument(fmt::format("override '{}' is not of the form key=value", assignment));
  }
  const auto key = trim(assignment.substr(0, eq));
  if (key.empty()) throw std::invalid_argument(fmt::format("override '{}' has an empty key", assignment));
  values_[std::string(key)] = std::string(trim(assignment.substr(eq + 1)));
  overrides_.emplace_back(assignment);
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::int64_t Config::get_int(const std::string& key, std::int64_t fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<std::int64_t>(key, it->second);
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  if (it->second.rfind("0x", 0) == 0) {
    std::uint64_t v = 0;
    const auto& s = it->second;
    const auto [end, ec] = std::from_chars(s.data() + 2, s.data() + s.size(), v, 16);
    if (ec != std::errc() || end != s.data() + s.size()) {
      throw std::invalid_argument(fmt::format("config key '{}': cannot parse '{}'", key, s));
    }
    return v;
  }
  return parse_number<std::uint64_t>(key, it->second);
}

double Config::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_number<double>(key, it->second);
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const auto& v = it->second;
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(fmt::format("config key '{}': expected a boolean, got '{}'", key, v));
}

void Config::check_known(std::span<const std::string_view> known) const {
  for (const auto& [key, value] : values_) {
    bool ok = false;
    for (auto k : known) ok = ok || k == key;
    if (!ok) throw std::invalid_argument(fmt::format("unknown config key '{}'", key));
  }
}

namespace {

constexpr std::string_view kKnownKeys[] = {
    "data.seed",
    "data.difficulty",
    "data.train_size",
    "data.test_size",
    "model.seed",
    "rollout.seed",
    "policy.dim",
    "policy.heads",
    "policy.context_limit",
    "dapo.eps_low",
    "dapo.eps_high",
    "dapo.dual_clip_c",
    "dapo.group_size",
    "dapo.batch_size",
    "dapo.mini_batch",
    "dapo.max_prompt_len",
    "dapo.max_resp_len",
    "dapo.overlong_buffer",
    "dapo.overlong_penalty_factor",
    "dapo.learning_rate",
    "dapo.gen_batch_budget",
    "dapo.temperature",
    "dapo.optimizer",
    "dapo.adam_beta1",
    "dapo.adam_beta2",
    "dapo.adam_eps",
    "ckl.alpha",
    "ckl.gate_on_correct",
    "ckl.apply_to_all_rollouts",
    "strategy",
    "schedule.mixed_d1",
    "schedule.mixed_d2",
    "schedule.stage1_budget",
    "schedule.stage2_budget",
    "schedule.kl_window",
    "schedule.kl_tolerance",
    "eval.every",
    "eval.k",
    "eval.temperature",
    "eval.tol",
    "eval.seed",
    "base.text_steps",
    "base.align_steps",
    "base.align_fraction",
    "base.lr",
    "base.batch",
    "base.seed",
    "base.checkpoint",
    "run.output_dir",
    "run.workers",
    "run.stop_after",
    "run.resume",
    "compare.strategies",
    "compare.output",
    "eval.checkpoint",
    "eval.records",
    "eval.weighting",
    "eval.output",
    "gen.output",
};

int to_int(std::int64_t v, const char* key) {
  if (v < INT32_MIN || v > INT32_MAX) throw std::invalid_argument(fmt::format("config key '{}' out of range", key));
  return static_cast<int>(v);
}

}  // namespace

std::span<const std::string_view> known_config_keys() { return kKnownKeys; }

void ExperimentConfig::validate() const {
  if (difficulty < kMinDifficulty || difficulty > kMaxDifficulty) {
    throw std::invalid_argument("data.difficulty must be in 2..6");
  }
  if (train_size < 1 || test_size < 1) throw std::invalid_argument("data sizes must be >= 1");
  policy.validate();
  dapo.validate();
  ckl.validate();
  strategy.validate();
  if (eval.every < 1) throw std::invalid_argument("eval.every must be >= 1");
  if (eval.k < 1) throw std::invalid_argument("eval.k must be >= 1");
  if (!(eval.temperature >= 0.0)) throw std::invalid_argument("eval.temperature must be >= 0");
  if (!(eval.tol > 0.0)) throw std::invalid_argument("eval.tol must be > 0");
  if (base.text_steps < 0 || base.align_steps < 0 || base.batch < 1) {
    throw std::invalid_argument("base.* step counts must be >= 0 and base.batch >= 1");
  }
  if (!(base.align_fraction >= 0.0 && base.align_fraction <= 1.0)) {
    throw std::invalid_argument("base.align_fraction must be in [0, 1]");
  }
  if (workers < 1) throw std::invalid_argument("run.workers must be >= 1");
  if (stop_after < 0) throw std::invalid_argument("run.stop_after must be >= 0");
  if (dapo.max_prompt_len + dapo.max_resp_len > policy.context_limit) {
    throw std::invalid_argument("dapo.max_prompt_len + dapo.max_resp_len exceeds policy.context_limit");
  }
}

SamplingConfig ExperimentConfig::sampling() const {
  SamplingConfig s;
  s.k = eval.k;
  s.temperature = eval.temperature;
  s.max_len = dapo.max_resp_len;
  s.rule = MatchRule{MatchRule::Mode::RelativeError, eval.tol};
  s.workers = workers;
  return s;
}

ExperimentConfig experiment_from(const Config& c) {
  c.check_known(known_config_keys());
  ExperimentConfig e;
  e.data_seed = c.get_u64("data.seed", e.data_seed);
  e.model_seed = c.get_u64("model.seed", e.model_seed);
  e.rollout_seed = c.get_u64("rollout.seed", e.rollout_seed);
  e.difficulty = to_int(c.get_int("data.difficulty", e.difficulty), "data.difficulty");
  e.train_size = to_int(c.get_int("data.train_size", e.train_size), "data.train_size");
  e.test_size = to_int(c.get_int("data.test_size", e.test_size), "data.test_size");

  e.policy.dim = to_int(c.get_int("policy.dim", e.policy.dim), "policy.dim");
  e.policy.heads = to_int(c.get_int("policy.heads", e.policy.heads), "policy.heads");
  e.policy.context_limit = to_int(c.get_int("policy.context_limit", e.policy.context_limit), "policy.context_limit");

  auto& d = e.dapo;
  d.eps_low = c.get_double("dapo.eps_low", d.eps_low);
  d.eps_high = c.get_double("dapo.eps_high", d.eps_high);
  d.dual_clip_c = c.get_double("dapo.dual_clip_c", d.dual_clip_c);
  d.group_size = to_int(c.get_int("dapo.group_size", d.group_size), "dapo.group_size");
  d.batch_size = to_int(c.get_int("dapo.batch_size", d.batch_size), "dapo.batch_size");
  d.mini_batch = to_int(c.get_int("dapo.mini_batch", d.mini_batch), "dapo.mini_batch");
  d.max_prompt_len = to_int(c.get_int("dapo.max_prompt_len", d.max_prompt_len), "dapo.max_prompt_len");
  d.max_resp_len = to_int(c.get_int("dapo.max_resp_len", d.max_resp_len), "dapo.max_resp_len");
  d.overlong_buffer = to_int(c.get_int("dapo.overlong_buffer", d.overlong_buffer), "dapo.overlong_buffer");
  d.overlong_penalty_factor = c.get_double("dapo.overlong_penalty_factor", d.overlong_penalty_factor);
  d.learning_rate = c.get_double("dapo.learning_rate", d.learning_rate);
  d.gen_batch_budget = to_int(c.get_int("dapo.gen_batch_budget", d.gen_batch_budget), "dapo.gen_batch_budget");
  d.temperature = c.get_double("dapo.temperature", d.temperature);
  const auto opt = c.get_string("dapo.optimizer", "sgd");
  if (opt == "sgd") {
    d.optimizer = OptimizerKind::Sgd;
  } else if (opt == "adam") {
    d.optimizer = OptimizerKind::Adam;
  } else {
    throw std::invalid_argument(fmt::format("dapo.optimizer must be sgd or adam, got '{}'", opt));
  }
  d.adam_beta1 = c.get_double("dapo.adam_beta1", d.adam_beta1);
  d.adam_beta2 = c.get_double("dapo.adam_beta2", d.adam_beta2);
  d.adam_eps = c.get_double("dapo.adam_eps", d.adam_eps);

  e.ckl.alpha = c.get_double("ckl.alpha", e.ckl.alpha);
  e.ckl.gate_on_correct = c.get_bool("ckl.gate_on_correct", e.ckl.gate_on_correct);
  e.ckl.apply_to_all_rollouts = c.get_bool("ckl.apply_to_all_rollouts", e.ckl.apply_to_all_rollouts);

  auto& s = e.strategy;
  s.kind = parse_strategy(c.get_string("strategy", "d1"));
  s.budget = d.gen_batch_budget;
  s.mixed_d1 = to_int(c.get_int("schedule.mixed_d1", s.mixed_d1), "schedule.mixed_d1");
  s.mixed_d2 = to_int(c.get_int("schedule.mixed_d2", s.mixed_d2), "schedule.mixed_d2");
  const int half = (d.gen_batch_budget + 1) / 2;
  s.stage1_budget = to_int(c.get_int("schedule.stage1_budget", half), "schedule.stage1_budget");
  s.stage2_budget =
      to_int(c.get_int("schedule.stage2_budget", d.gen_batch_budget - s.stage1_budget), "schedule.stage2_budget");
  s.kl_window = to_int(c.get_int("schedule.kl_window", s.kl_window), "schedule.kl_window");
  s.kl_tolerance = c.get_double("schedule.kl_tolerance", s.kl_tolerance);

  e.eval.every = to_int(c.get_int("eval.every", e.eval.every), "eval.every");
  e.eval.k = to_int(c.get_int("eval.k", e.eval.k), "eval.k");
  e.eval.temperature = c.get_double("eval.temperature", e.eval.temperature);
  e.eval.tol = c.get_double("eval.tol", e.eval.tol);
  e.eval.seed = c.get_u64("eval.seed", e.eval.seed);

  e.base.text_steps = to_int(c.get_int("base.text_steps", e.base.text_steps), "base.text_steps");
  e.base.align_steps = to_int(c.get_int("base.align_steps", e.base.align_steps), "base.align_steps");
  e.base.align_fraction = c.get_double("base.align_fraction", e.base.align_fraction);
  e.base.lr = c.get_double("base.lr", e.base.lr);
  e.base.batch = to_int(c.get_int("base.batch", e.base.batch), "base.batch");
  e.base.seed = c.get_u64("base.seed", e.base.seed);
  e.base.checkpoint = c.get_string("base.checkpoint", "");

  e.output_dir = c.get_string("run.output_dir", e.output_dir.string());
  e.workers = to_int(c.get_int("run.workers", e.workers), "run.workers");
  e.stop_after = to_int(c.get_int("run.stop_after", e.stop_after), "run.stop_after");
  e.resume = c.get_bool("run.resume", e.resume);
  e.validate();
  return e;
}

}  // namespace modgap
