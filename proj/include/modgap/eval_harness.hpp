// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "modgap/policy.hpp"
#include "modgap/task_world.hpp"
#include "modgap/verifier.hpp"

namespace modgap {

/// SimplePair: overall = (text + vision) / 2. Weighted: two text-centric and
/// three vision-centric subsets, overall = (2 text + 3 vision) / 5.
enum class Weighting : std::uint8_t { SimplePair, Weighted };

std::string_view weighting_name(Weighting w);
Weighting parse_weighting(std::string_view name);
double overall_accuracy(double text_acc, double vision_acc, Weighting w);

struct GapMetrics {
  double text_acc = 0.0;
  double vision_acc = 0.0;
  double overall = 0.0;
  double gap = 0.0;
  std::size_t n_text = 0;
  std::size_t n_vision = 0;
  int k = 0;
  Weighting weighting = Weighting::SimplePair;
};

GapMetrics make_metrics(double text_acc, double vision_acc, Weighting w, std::size_t n_text = 0,
                        std::size_t n_vision = 0, int k = 0);

double pass_at_1(std::span<const bool> verdicts);

struct SamplingConfig {
  int k = 4;
  double temperature = 1.0;
  int max_len = 32;
  MatchRule rule = MatchRule::in_distribution();
  int workers = 1;
};

/// Per-question Pass@1 over k sampled responses; deterministic in seed.
std::vector<double> evaluate_policy(const PolicyParams& params, std::span<const TaskInstance> dataset,
                                    PromptVariant variant, const SamplingConfig& cfg, std::uint64_t seed);

/// Text-centric (full-text) vs vision-centric (partial-text) metrics on one split.
GapMetrics evaluate_gap(const PolicyParams& params, std::span<const TaskInstance> dataset, const SamplingConfig& cfg,
                        std::uint64_t seed);

/// Means of per-question accuracies on each side. Throws if a side is empty.
GapMetrics aggregate(std::span<const double> text_scores, std::span<const double> vision_scores, Weighting w,
                     int k = 0);

enum class Side : std::uint8_t { Text, Vision };

/// Maps a variant tag to its side; throws on tags outside the taxonomy.
Side variant_side(std::string_view tag);

struct ResponseRecord {
  enum class QType : std::uint8_t { Numeric, Choice };
  std::string id;
  std::string variant;
  std::vector<std::string> responses;
  Answer gold;
  QType qtype = QType::Numeric;
};

std::vector<ResponseRecord> parse_records(std::istream& in);
std::vector<ResponseRecord> load_records(const std::filesystem::path& path);

/// Pass@1 of one record; numeric questions use `numeric_rule`, choice questions exact matching.
double score_record(const ResponseRecord& record, const MatchRule& numeric_rule);

GapMetrics aggregate_records(std::span<const ResponseRecord> records, Weighting w, const MatchRule& numeric_rule);

using MetricsRow = std::pair<std::string, GapMetrics>;

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);
void write_metrics_csv(const std::filesystem::path& path, std::span<const MetricsRow> rows);
std::string format_metrics_table(std::span<const MetricsRow> rows);

}  // namespace modgap
