// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/eval_harness.hpp"

#include <fmt/format.h>

#include <fstream>
#include <memory>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "modgap/parallel.hpp"
#include "modgap/rng.hpp"

namespace modgap {

std::string_view weighting_name(Weighting w) { return w == Weighting::SimplePair ? "simple" : "weighted"; }

Weighting parse_weighting(std::string_view name) {
  if (name == "simple") return Weighting::SimplePair;
  if (name == "weighted") return Weighting::Weighted;
  throw std::invalid_argument(fmt::format("unknown weighting '{}' (expected simple or weighted)", name));
}

double overall_accuracy(double text_acc, double vision_acc, Weighting w) {
  if (w == Weighting::SimplePair) return (text_acc + vision_acc) / 2.0;
  return (2.0 * text_acc + 3.0 * vision_acc) / 5.0;
}

GapMetrics make_metrics(double text_acc, double vision_acc, Weighting w, std::size_t n_text, std::size_t n_vision,
                        int k) {
  GapMetrics m;
  m.text_acc = text_acc;
  m.vision_acc = vision_acc;
  m.overall = overall_accuracy(text_acc, vision_acc, w);
  m.gap = text_acc - vision_acc;
  m.n_text = n_text;
  m.n_vision = n_vision;
  m.k = k;
  m.weighting = w;
  return m;
}

double pass_at_1(std::span<const bool> verdicts) {
  if (verdicts.empty()) throw std::invalid_argument("pass_at_1 needs k >= 1");
  std::size_t c = 0;
  for (bool v : verdicts) c += v ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(verdicts.size());
}

std::vector<double> evaluate_policy(const PolicyParams& params, std::span<const TaskInstance> dataset,
                                    PromptVariant variant, const SamplingConfig& cfg, std::uint64_t seed) {
  if (cfg.k < 1) throw std::invalid_argument("evaluation k must be >= 1");
  std::vector<double> scores(dataset.size());
  parallel_for(dataset.size(), cfg.workers, [&](std::size_t i) {
    const auto& inst = dataset[i];
    const auto enc = encode_prompt(params, render_prompt(inst, variant));
    const auto gold = Answer::numeric(static_cast<double>(inst.gold_answer));
    const auto k = static_cast<std::size_t>(cfg.k);
    auto verdicts = std::make_unique<bool[]>(k);
    for (std::size_t j = 0; j < k; ++j) {
      const auto s = derive_seed({seed, static_cast<std::uint64_t>(variant), i, j});
      const auto r = sample_sequence(params, enc, cfg.max_len, cfg.temperature, s);
      verdicts[j] = verify(detokenize(r.tokens), gold, cfg.rule).correct;
    }
    scores[i] = pass_at_1({verdicts.get(), k});
  });
  return scores;
}

GapMetrics evaluate_gap(const PolicyParams& params, std::span<const TaskInstance> dataset, const SamplingConfig& cfg,
                        std::uint64_t seed) {
  const auto text = evaluate_policy(params, dataset, PromptVariant::FullText, cfg, seed);
  const auto vision = evaluate_policy(params, dataset, PromptVariant::PartialText, cfg, seed);
  return aggregate(text, vision, Weighting::SimplePair, cfg.k);
}

GapMetrics aggregate(std::span<const double> text_scores, std::span<const double> vision_scores, Weighting w, int k) {
  if (text_scores.empty()) throw std::invalid_argument("no text-centric results to aggregate");
  if (vision_scores.empty()) throw std::invalid_argument("no vision-centric results to aggregate");
  double t = 0.0;
  for (double x : text_scores) t += x;
  double v = 0.0;
  for (double x : vision_scores) v += x;
  return make_metrics(t / static_cast<double>(text_scores.size()), v / static_cast<double>(vision_scores.size()), w,
                      text_scores.size(), vision_scores.size(), k);
}

Side variant_side(std::string_view tag) {
  static constexpr std::string_view kText[] = {"d1", "full_text", "text_centric", "text_dominant", "text_lite"};
  static constexpr std::string_view kVision[] = {"d2",           "partial_text",    "vision_centric",
                                                 "vision_intensive", "vision_dominant", "vision_only"};
  for (auto t : kText) {
    if (t == tag) return Side::Text;
  }
  for (auto t : kVision) {
    if (t == tag) return Side::Vision;
  }
  throw std::invalid_argument(fmt::format("unknown variant tag '{}'", tag));
}

namespace {

ResponseRecord parse_record(const nlohmann::json& j) {
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!j.contains(key)) throw std::invalid_argument(fmt::format("missing field '{}'", key));
    return j.at(key);
  };
  ResponseRecord r;
  r.id = require("id").get<std::string>();
  r.variant = require("variant").get<std::string>();
  variant_side(r.variant);
  for (const auto& x : require("responses")) r.responses.push_back(x.get<std::string>());
  if (r.responses.empty()) throw std::invalid_argument("'responses' must hold at least one response");
  const auto qtype = j.value("qtype", std::string("numeric"));
  if (qtype == "numeric") {
    r.qtype = ResponseRecord::QType::Numeric;
  } else if (qtype == "choice") {
    r.qtype = ResponseRecord::QType::Choice;
  } else {
    throw std::invalid_argument(fmt::format("unknown qtype '{}'", qtype));
  }
  const auto& gold = require("gold");
  if (r.qtype == ResponseRecord::QType::Choice) {
    const auto s = gold.get<std::string>();
    const auto a = parse_answer(s);
    if (!a || a->kind != Answer::Kind::Choice) throw std::invalid_argument("choice gold must be a letter A-E");
    r.gold = *a;
  } else if (gold.is_number()) {
    r.gold = Answer::numeric(gold.get<double>());
  } else {
    const auto a = parse_answer(gold.get<std::string>());
    if (!a || a->kind != Answer::Kind::Number) throw std::invalid_argument("numeric gold must be a number");
    r.gold = *a;
  }
  return r;
}

}  // namespace

std::vector<ResponseRecord> parse_records(std::istream& in) {
  std::vector<ResponseRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse_record(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("records line {}: {}", lineno, e.what()));
    }
  }
  return out;
}

std::vector<ResponseRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot open record file {}", path.string()));
  return parse_records(in);
}

double score_record(const ResponseRecord& record, const MatchRule& numeric_rule) {
  const auto rule = record.qtype == ResponseRecord::QType::Choice ? MatchRule::exact_choice() : numeric_rule;
  std::size_t c = 0;
  for (const auto& resp : record.responses) c += verify(resp, record.gold, rule).correct ? 1 : 0;
  return static_cast<double>(c) / static_cast<double>(record.responses.size());
}

GapMetrics aggregate_records(std::span<const ResponseRecord> records, Weighting w, const MatchRule& numeric_rule) {
  std::vector<double> text, vision;
  int k = 0;
  for (const auto& r : records) {
    (variant_side(r.variant) == Side::Text ? text : vision).push_back(score_record(r, numeric_rule));
    k = std::max(k, static_cast<int>(r.responses.size()));
  }
  return aggregate(text, vision, w, k);
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << "split,text_acc,vision_acc,overall,gap,n_text,n_vision,k\n";
  for (const auto& [split, m] : rows) {
    out << fmt::format("{},{:.6f},{:.6f},{:.6f},{:.6f},{},{},{}\n", split, m.text_acc, m.vision_acc, m.overall, m.gap,
                       m.n_text, m.n_vision, m.k);
  }
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  write_metrics_csv(out, rows);
}

std::string format_metrics_table(std::span<const MetricsRow> rows) {
  std::string s = fmt::format("{:<16} {:>8} {:>8} {:>8} {:>8} {:>7} {:>8} {:>3}\n", "split", "text", "vision",
                              "overall", "gap", "n_text", "n_vision", "k");
  for (const auto& [split, m] : rows) {
    s += fmt::format("{:<16} {:>8.4f} {:>8.4f} {:>8.4f} {:>8.4f} {:>7} {:>8} {:>3}\n", split, m.text_acc,
                     m.vision_acc, m.overall, m.gap, m.n_text, m.n_vision, m.k);
  }
  return s;
}

}  // namespace modgap
