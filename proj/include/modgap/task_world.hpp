// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "modgap/vocab.hpp"

namespace modgap {

// Synthetic bimodal task world. A scene is a straight-line integer program
// (the analog of a fully annotated figure). The text channel either repeats
// every fact (full text) or carries only the question (partial text).

enum class Op : char { Add = '+', Sub = '-', Mul = '*' };

struct Operand {
  bool is_var = false;
  int value = 0;  // variable index when is_var, otherwise a literal

  static Operand variable(int index) { return {true, index}; }
  static Operand literal(int v) { return {false, v}; }
  bool operator==(const Operand&) const = default;
};

struct Fact {
  enum class Kind : std::uint8_t { Literal, Relation };

  int var = 0;
  Kind kind = Kind::Literal;
  int literal = 0;
  Op op = Op::Add;
  Operand lhs;
  Operand rhs;

  bool operator==(const Fact&) const = default;
};

struct Scene {
  std::vector<Fact> facts;

  int num_vars() const { return static_cast<int>(facts.size()); }
  bool operator==(const Scene&) const = default;
};

inline constexpr int kMinDifficulty = 2;
inline constexpr int kMaxDifficulty = 6;
inline constexpr std::int64_t kValueBound = 999;
inline constexpr int kMaxLiteral = 9;

struct TaskInstance {
  std::string id;
  Scene scene;
  int question_var = 0;
  std::int64_t gold_answer = 0;
  std::vector<Token> full_text;
  std::vector<Token> partial_text;
  std::vector<Token> scene_tokens;

  bool operator==(const TaskInstance&) const = default;
};

enum class PromptVariant : std::uint8_t { FullText, PartialText };

std::string_view variant_name(PromptVariant v);

enum class Split : std::uint8_t { Train, Test };

struct DatasetSpec {
  std::uint64_t seed = 1;
  std::size_t size = 100;
  int difficulty = 3;
  Split split = Split::Train;
};

/// Values of every variable, in definition order. Throws on an invalid scene.
std::vector<std::int64_t> evaluate_scene(const Scene& scene);

/// Checks acyclicity, value range and non-emptiness.
void validate_scene(const Scene& scene);

/// Text-channel form of one fact, e.g. `b = a + 4 ;`.
std::vector<Token> fact_text_tokens(const Fact& fact);
/// Scene-channel form of one fact, expression first, e.g. `a + 4 = b ;`.
std::vector<Token> fact_scene_tokens(const Fact& fact);
std::vector<Token> question_tokens(int question_var);

/// Compact string form used in dataset files, e.g. "b=a+4".
std::string fact_to_string(const Fact& fact);
Fact fact_from_string(std::string_view s);

/// Builds an instance (token renderings and gold answer) from its defining fields.
TaskInstance make_instance(std::string id, Scene scene, int question_var);

TaskInstance generate_instance(std::uint64_t seed, int difficulty);

PromptEncoding render_prompt(const TaskInstance& instance, PromptVariant variant);

std::vector<TaskInstance> make_dataset(const DatasetSpec& spec);

/// JSONL with one {id, facts, question_var, gold_answer} object per line.
void save_dataset(const std::filesystem::path& path, std::span<const TaskInstance> data);
std::vector<TaskInstance> load_dataset(const std::filesystem::path& path);

}  // namespace modgap
