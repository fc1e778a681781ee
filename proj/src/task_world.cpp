// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/task_world.hpp"

#include <fmt/format.h>

#include <fstream>
#include <nlohmann/json.hpp>
#include <stdexcept>

#include "modgap/rng.hpp"

namespace modgap {

namespace {

constexpr int kResampleAttempts = 64;

char var_char(int index) { return static_cast<char>('a' + index); }

std::int64_t apply(Op op, std::int64_t a, std::int64_t b) {
  switch (op) {
    case Op::Add: return a + b;
    case Op::Sub: return a - b;
    case Op::Mul: return a * b;
  }
  return 0;
}

Token op_token(Op op) {
  switch (op) {
    case Op::Add: return vocab::kPlus;
    case Op::Sub: return vocab::kMinus;
    case Op::Mul: return vocab::kTimes;
  }
  return vocab::kPlus;
}

Token operand_token(const Operand& o) {
  return o.is_var ? vocab::var(o.value) : vocab::digit(o.value);
}

std::vector<Token> rhs_tokens(const Fact& f) {
  if (f.kind == Fact::Kind::Literal) return {vocab::digit(f.literal)};
  return {operand_token(f.lhs), op_token(f.op), operand_token(f.rhs)};
}

std::int64_t operand_value(const Operand& o, std::span<const std::int64_t> values) {
  return o.is_var ? values[static_cast<std::size_t>(o.value)] : o.value;
}

}  // namespace

std::string_view variant_name(PromptVariant v) {
  return v == PromptVariant::FullText ? "full_text" : "partial_text";
}

std::vector<std::int64_t> evaluate_scene(const Scene& scene) {
  std::vector<std::int64_t> values;
  values.reserve(scene.facts.size());
  for (std::size_t i = 0; i < scene.facts.size(); ++i) {
    const Fact& f = scene.facts[i];
    if (f.var != static_cast<int>(i)) throw std::invalid_argument("facts must define variables in order");
    if (f.kind == Fact::Kind::Literal) {
      values.push_back(f.literal);
      continue;
    }
    for (const Operand* o : {&f.lhs, &f.rhs}) {
      if (o->is_var && (o->value < 0 || o->value >= f.var))
        throw std::invalid_argument(fmt::format("fact {} references a later variable", i));
    }
    values.push_back(apply(f.op, operand_value(f.lhs, values), operand_value(f.rhs, values)));
  }
  return values;
}

void validate_scene(const Scene& scene) {
  if (scene.facts.empty()) throw std::invalid_argument("scene has no facts");
  if (scene.num_vars() > vocab::kMaxVars) throw std::invalid_argument("scene has too many variables");
  for (const Fact& f : scene.facts) {
    if (f.kind == Fact::Kind::Literal && (f.literal < 0 || f.literal > kMaxLiteral))
      throw std::invalid_argument("literal out of range");
    if (f.kind == Fact::Kind::Relation) {
      for (const Operand* o : {&f.lhs, &f.rhs}) {
        if (!o->is_var && (o->value < 0 || o->value > kMaxLiteral))
          throw std::invalid_argument("literal operand out of range");
      }
    }
  }
  for (std::int64_t v : evaluate_scene(scene)) {
    if (v < -kValueBound || v > kValueBound) throw std::invalid_argument("scene value out of range");
  }
}

std::vector<Token> fact_text_tokens(const Fact& f) {
  std::vector<Token> out{vocab::var(f.var), vocab::kEquals};
  for (Token t : rhs_tokens(f)) out.push_back(t);
  out.push_back(vocab::kSemicolon);
  return out;
}

std::vector<Token> fact_scene_tokens(const Fact& f) {
  std::vector<Token> out = rhs_tokens(f);
  out.push_back(vocab::kEquals);
  out.push_back(vocab::var(f.var));
  out.push_back(vocab::kSemicolon);
  return out;
}

std::vector<Token> question_tokens(int question_var) { return {vocab::kFind, vocab::var(question_var)}; }

std::string fact_to_string(const Fact& f) {
  auto operand = [](const Operand& o) {
    return o.is_var ? std::string(1, var_char(o.value)) : std::to_string(o.value);
  };
  if (f.kind == Fact::Kind::Literal) return fmt::format("{}={}", var_char(f.var), f.literal);
  return fmt::format("{}={}{}{}", var_char(f.var), operand(f.lhs), static_cast<char>(f.op), operand(f.rhs));
}

Fact fact_from_string(std::string_view s) {
  auto fail = [&] { return std::invalid_argument(fmt::format("malformed fact '{}'", s)); };
  if (s.size() < 3 || s[1] != '=' || s[0] < 'a' || s[0] >= 'a' + vocab::kMaxVars) throw fail();
  auto parse_operand = [&](char c) {
    if (c >= 'a' && c < 'a' + vocab::kMaxVars) return Operand::variable(c - 'a');
    if (c >= '0' && c <= '9') return Operand::literal(c - '0');
    throw fail();
  };
  Fact f;
  f.var = s[0] - 'a';
  const std::string_view rhs = s.substr(2);
  if (rhs.size() == 1) {
    if (rhs[0] < '0' || rhs[0] > '9') throw fail();
    f.kind = Fact::Kind::Literal;
    f.literal = rhs[0] - '0';
    return f;
  }
  if (rhs.size() != 3) throw fail();
  f.kind = Fact::Kind::Relation;
  f.lhs = parse_operand(rhs[0]);
  f.rhs = parse_operand(rhs[2]);
  switch (rhs[1]) {
    case '+': f.op = Op::Add; break;
    case '-': f.op = Op::Sub; break;
    case '*': f.op = Op::Mul; break;
    default: throw fail();
  }
  return f;
}

TaskInstance make_instance(std::string id, Scene scene, int question_var) {
  validate_scene(scene);
  if (question_var < 0 || question_var >= scene.num_vars())
    throw std::invalid_argument("question variable not defined by the scene");
  TaskInstance inst;
  inst.id = std::move(id);
  inst.question_var = question_var;
  inst.gold_answer = evaluate_scene(scene)[static_cast<std::size_t>(question_var)];
  for (const Fact& f : scene.facts) {
    const auto text = fact_text_tokens(f);
    inst.full_text.insert(inst.full_text.end(), text.begin(), text.end());
    const auto visual = fact_scene_tokens(f);
    inst.scene_tokens.insert(inst.scene_tokens.end(), visual.begin(), visual.end());
  }
  inst.partial_text = question_tokens(question_var);
  inst.full_text.insert(inst.full_text.end(), inst.partial_text.begin(), inst.partial_text.end());
  inst.scene = std::move(scene);
  return inst;
}

TaskInstance generate_instance(std::uint64_t seed, int difficulty) {
  if (difficulty < kMinDifficulty || difficulty > kMaxDifficulty)
    throw std::invalid_argument(fmt::format("difficulty {} outside [2, 6]", difficulty));
  Rng rng(seed);
  const int num_vars = kMinDifficulty + static_cast<int>(rng.below(static_cast<std::uint64_t>(difficulty - 1)));
  Scene scene;
  std::vector<std::int64_t> values;
  auto random_literal = [&] { return static_cast<int>(rng.below(kMaxLiteral + 1)); };
  for (int k = 0; k < num_vars; ++k) {
    Fact f;
    f.var = k;
    bool defined = false;
    if (k > 0 && rng.uniform() < 0.5) {
      for (int attempt = 0; attempt < kResampleAttempts && !defined; ++attempt) {
        f.kind = Fact::Kind::Relation;
        f.op = static_cast<Op>("+-*"[rng.below(3)]);
        f.lhs = Operand::variable(static_cast<int>(rng.below(static_cast<std::uint64_t>(k))));
        f.rhs = rng.uniform() < 0.5 ? Operand::variable(static_cast<int>(rng.below(static_cast<std::uint64_t>(k))))
                                    : Operand::literal(random_literal());
        if (rng.uniform() < 0.5) std::swap(f.lhs, f.rhs);
        const std::int64_t v = apply(f.op, operand_value(f.lhs, values), operand_value(f.rhs, values));
        if (v >= -kValueBound && v <= kValueBound) {
          values.push_back(v);
          defined = true;
        }
      }
    }
    if (!defined) {
      f.kind = Fact::Kind::Literal;
      f.literal = random_literal();
      f.lhs = f.rhs = Operand{};
      f.op = Op::Add;
      values.push_back(f.literal);
    }
    scene.facts.push_back(f);
  }
  const int question_var = static_cast<int>(rng.below(static_cast<std::uint64_t>(num_vars)));
  return make_instance(fmt::format("s{:016x}d{}", seed, difficulty), std::move(scene), question_var);
}

PromptEncoding render_prompt(const TaskInstance& instance, PromptVariant variant) {
  return {instance.scene_tokens,
          variant == PromptVariant::FullText ? instance.full_text : instance.partial_text};
}

std::vector<TaskInstance> make_dataset(const DatasetSpec& spec) {
  if (spec.size < 1) throw std::invalid_argument("dataset size must be >= 1");
  const bool train = spec.split == Split::Train;
  const std::uint64_t salt = train ? 0x7472ULL : 0x7465ULL;
  std::vector<TaskInstance> out;
  out.reserve(spec.size);
  for (std::size_t i = 0; i < spec.size; ++i) {
    TaskInstance inst = generate_instance(derive_seed({spec.seed, salt, i}), spec.difficulty);
    inst.id = fmt::format("{}-{:x}-{:06d}", train ? "train" : "test", spec.seed, i);
    out.push_back(std::move(inst));
  }
  return out;
}

void save_dataset(const std::filesystem::path& path, std::span<const TaskInstance> data) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write {}", path.string()));
  for (const TaskInstance& inst : data) {
    nlohmann::json facts = nlohmann::json::array();
    for (const Fact& f : inst.scene.facts) facts.push_back(fact_to_string(f));
    nlohmann::json line = {{"id", inst.id},
                           {"facts", facts},
                           {"question_var", std::string(1, var_char(inst.question_var))},
                           {"gold_answer", inst.gold_answer}};
    out << line.dump() << '\n';
  }
  if (!out) throw std::runtime_error(fmt::format("write failed for {}", path.string()));
}

std::vector<TaskInstance> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(fmt::format("cannot read {}", path.string()));
  std::vector<TaskInstance> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Scene scene;
      for (const auto& f : j.at("facts")) scene.facts.push_back(fact_from_string(f.get<std::string>()));
      const std::string q = j.at("question_var").get<std::string>();
      if (q.size() != 1) throw std::invalid_argument("question_var must be a single variable name");
      TaskInstance inst = make_instance(j.at("id").get<std::string>(), std::move(scene), q[0] - 'a');
      if (inst.gold_answer != j.at("gold_answer").get<std::int64_t>())
        throw std::invalid_argument("gold_answer disagrees with the scene");
      out.push_back(std::move(inst));
    } catch (const std::exception& e) {
      throw std::runtime_error(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

}  // namespace modgap
