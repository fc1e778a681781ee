// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/verifier.hpp"

#include <charconv>
#include <cmath>
#include <stdexcept>

namespace modgap {

void MatchRule::validate() const {
  if (mode == Mode::RelativeError && !(tol > 0.0)) throw std::invalid_argument("match tolerance must be > 0");
}

std::string_view reason_name(Verdict::Reason r) {
  switch (r) {
    case Verdict::Reason::Match:
      return "match";
    case Verdict::Reason::NumericMismatch:
      return "numeric_mismatch";
    case Verdict::Reason::NoAnswerFound:
      return "no_answer_found";
    case Verdict::Reason::MalformedNumber:
      return "malformed_number";
  }
  return "unknown";
}

std::optional<std::string> last_boxed_content(std::string_view s) {
  static constexpr std::string_view kOpen = "\\boxed{";
  std::optional<std::string> best;
  std::size_t pos = s.find(kOpen);
  while (pos != std::string_view::npos) {
    const std::size_t begin = pos + kOpen.size();
    int depth = 1;
    std::size_t i = begin;
    for (; i < s.size(); ++i) {
      if (s[i] == '{') {
        ++depth;
      } else if (s[i] == '}' && --depth == 0) {
        break;
      }
    }
    if (depth == 0) best = std::string(s.substr(begin, i - begin));
    pos = s.find(kOpen, pos + 1);
  }
  return best;
}

namespace {

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

}  // namespace

std::optional<Answer> parse_answer(std::string_view content) {
  auto s = trim(content);
  if (s.size() >= 3 && s.front() == '(' && s.back() == ')') s = trim(s.substr(1, s.size() - 2));
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'E') return Answer::letter(s[0]);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return Answer::numeric(v);
}

std::optional<Answer> extract_answer(std::string_view response) {
  const auto content = last_boxed_content(response);
  if (!content) return std::nullopt;
  return parse_answer(*content);
}

std::optional<Answer> extract_answer(std::span<const Token> response) { return extract_answer(detokenize(response)); }

Verdict judge(const Answer& extracted, const Answer& gold, const MatchRule& rule) {
  rule.validate();
  Verdict v;
  v.extracted = extracted;
  if (rule.mode == MatchRule::Mode::ExactChoice) {
    v.correct = extracted.kind == Answer::Kind::Choice && gold.kind == Answer::Kind::Choice &&
                extracted.choice == gold.choice;
    v.reason = v.correct ? Verdict::Reason::Match : Verdict::Reason::NumericMismatch;
    return v;
  }
  if (extracted.kind != Answer::Kind::Number || gold.kind != Answer::Kind::Number) {
    v.reason = Verdict::Reason::NumericMismatch;
    return v;
  }
  if (!std::isfinite(extracted.number)) {
    v.reason = Verdict::Reason::MalformedNumber;
    return v;
  }
  const double err = std::abs(extracted.number - gold.number) / std::max(std::abs(gold.number), kRelativeErrorFloor);
  v.correct = err <= rule.tol;
  v.reason = v.correct ? Verdict::Reason::Match : Verdict::Reason::NumericMismatch;
  return v;
}

Verdict verify(std::string_view response, const Answer& gold, const MatchRule& rule) {
  const auto content = last_boxed_content(response);
  if (!content) return Verdict{};
  const auto answer = parse_answer(*content);
  if (!answer) {
    Verdict v;
    v.reason = Verdict::Reason::MalformedNumber;
    return v;
  }
  return judge(*answer, gold, rule);
}

double reward(const Rollout& rollout, const TaskInstance& instance, const MatchRule& rule) {
  const auto v = verify(detokenize(rollout.tokens), Answer::numeric(static_cast<double>(instance.gold_answer)), rule);
  return v.correct ? 1.0 : 0.0;
}

}  // namespace modgap
