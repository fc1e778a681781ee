// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace modgap {

using Token = std::int32_t;

// The global vocabulary shared by both prompt channels and the response.
namespace vocab {
inline constexpr Token kDigit0 = 0;  // digits occupy ids 0..9
inline constexpr Token kVarA = 10;   // variables a..f occupy ids 10..15
inline constexpr Token kPlus = 16;
inline constexpr Token kMinus = 17;
inline constexpr Token kTimes = 18;
inline constexpr Token kEquals = 19;
inline constexpr Token kSemicolon = 20;
inline constexpr Token kFind = 21;
inline constexpr Token kThinkOpen = 22;
inline constexpr Token kThinkClose = 23;
inline constexpr Token kBoxedOpen = 24;
inline constexpr Token kBoxedClose = 25;
inline constexpr Token kEos = 26;
inline constexpr int kSize = 27;
inline constexpr int kMaxVars = 6;

constexpr Token digit(int d) { return kDigit0 + d; }
constexpr Token var(int index) { return kVarA + index; }
constexpr bool is_digit(Token t) { return t >= kDigit0 && t < kDigit0 + 10; }
constexpr bool is_var(Token t) { return t >= kVarA && t < kVarA + kMaxVars; }
}  // namespace vocab

std::string_view token_text(Token t);
std::optional<Token> token_from_text(std::string_view text);

/// Concatenates token surface forms with no separator (the form the verifier reads).
std::string detokenize(std::span<const Token> tokens);
/// Space-separated rendering for logs and debugging.
std::string render_tokens(std::span<const Token> tokens);

/// Decimal rendering of an integer as digit tokens, with a leading minus token if negative.
std::vector<Token> number_tokens(std::int64_t value);

enum class Channel : std::uint8_t { Scene = 0, Text = 1, Response = 2 };

/// A two-channel prompt. The scene channel plays the role of the image.
struct PromptEncoding {
  std::vector<Token> scene_tokens;
  std::vector<Token> text_tokens;

  std::size_t size() const { return scene_tokens.size() + text_tokens.size(); }
  /// Per-token channel tags, scene tokens first.
  std::vector<Channel> channel_tags() const;

  bool operator==(const PromptEncoding&) const = default;
};

}  // namespace modgap
