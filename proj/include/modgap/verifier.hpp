// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "modgap/policy.hpp"
#include "modgap/task_world.hpp"

namespace modgap {

/// A final answer: either a number or a multiple-choice letter A-E.
struct Answer {
  enum class Kind : std::uint8_t { Number, Choice };
  Kind kind = Kind::Number;
  double number = 0.0;
  char choice = 0;

  static Answer numeric(double v) { return {Kind::Number, v, 0}; }
  static Answer letter(char c) { return {Kind::Choice, 0.0, c}; }
  bool operator==(const Answer&) const = default;
};

struct MatchRule {
  enum class Mode : std::uint8_t { RelativeError, ExactChoice };
  Mode mode = Mode::RelativeError;
  double tol = 1e-2;

  static MatchRule in_distribution() { return {Mode::RelativeError, 1e-2}; }
  static MatchRule out_of_distribution() { return {Mode::RelativeError, 5e-2}; }
  static MatchRule exact_choice() { return {Mode::ExactChoice, 0.0}; }
  void validate() const;
};

inline constexpr double kRelativeErrorFloor = 1e-9;

struct Verdict {
  enum class Reason : std::uint8_t { Match, NumericMismatch, NoAnswerFound, MalformedNumber };
  std::optional<Answer> extracted;
  bool correct = false;
  Reason reason = Reason::NoAnswerFound;
};

std::string_view reason_name(Verdict::Reason r);

/// Content of the last well-formed (brace-balanced) \boxed{...} span.
std::optional<std::string> last_boxed_content(std::string_view response);

/// Parses a boxed payload as a single choice letter A-E or a decimal number.
std::optional<Answer> parse_answer(std::string_view content);

std::optional<Answer> extract_answer(std::string_view response);
std::optional<Answer> extract_answer(std::span<const Token> response);

Verdict judge(const Answer& extracted, const Answer& gold, const MatchRule& rule);

/// Extraction followed by judging, with NoAnswerFound / MalformedNumber when
/// extraction fails.
Verdict verify(std::string_view response, const Answer& gold, const MatchRule& rule);

double reward(const Rollout& rollout, const TaskInstance& instance, const MatchRule& rule);

}  // namespace modgap
