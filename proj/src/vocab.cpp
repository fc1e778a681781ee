// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/vocab.hpp"

#include <array>

namespace modgap {

namespace {
constexpr std::array<std::string_view, vocab::kSize> kSurface = {
    "0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
    "a", "b", "c", "d", "e", "f",
    "+", "-", "*", "=", ";", "find",
    "<think>", "</think>", "\\boxed{", "}", "<eos>",
};
}  // namespace

std::string_view token_text(Token t) {
  if (t < 0 || t >= vocab::kSize) return "<unk>";
  return kSurface[static_cast<std::size_t>(t)];
}

std::optional<Token> token_from_text(std::string_view text) {
  for (std::size_t i = 0; i < kSurface.size(); ++i) {
    if (kSurface[i] == text) return static_cast<Token>(i);
  }
  return std::nullopt;
}

std::string detokenize(std::span<const Token> tokens) {
  std::string out;
  for (Token t : tokens) out += token_text(t);
  return out;
}

std::string render_tokens(std::span<const Token> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += token_text(tokens[i]);
  }
  return out;
}

std::vector<Token> number_tokens(std::int64_t value) {
  std::vector<Token> out;
  if (value < 0) out.push_back(vocab::kMinus);
  for (char c : std::to_string(value < 0 ? -value : value)) out.push_back(vocab::digit(c - '0'));
  return out;
}

std::vector<Channel> PromptEncoding::channel_tags() const {
  std::vector<Channel> tags(scene_tokens.size(), Channel::Scene);
  tags.insert(tags.end(), text_tokens.size(), Channel::Text);
  return tags;
}

}  // namespace modgap
