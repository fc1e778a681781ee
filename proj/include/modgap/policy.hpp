// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "modgap/vocab.hpp"

namespace modgap {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class ContextOverflow : public std::length_error {
 public:
  using std::length_error::length_error;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PolicyConfig {
  int vocab_size = vocab::kSize;
  int dim = 48;
  int heads = 4;
  int context_limit = 128;
  Token eos = vocab::kEos;

  int head_dim() const { return dim / heads; }
  void validate() const;
  bool operator==(const PolicyConfig&) const = default;
};

struct TensorInfo {
  std::string name;
  std::vector<std::size_t> shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named tensors in storage order. Attention projections are stored per head
/// as [heads, head_dim, dim].
std::vector<TensorInfo> param_layout(const PolicyConfig& config);
std::size_t param_count(const PolicyConfig& config);

/// Parameters of the autoregressive categorical policy, one flat buffer.
struct PolicyParams {
  PolicyConfig config;
  std::vector<double> values;

  static PolicyParams zeros(const PolicyConfig& config);
  static PolicyParams random(const PolicyConfig& config, std::uint64_t seed);

  std::span<double> tensor(std::string_view name);
  std::span<const double> tensor(std::string_view name) const;
  std::size_t size() const { return values.size(); }
};

/// Same layout as the parameters they belong to.
struct Gradients {
  std::vector<double> values;

  double norm() const;
};

struct Rollout {
  PromptEncoding prompt;
  std::vector<Token> tokens;
  std::vector<double> step_logprobs;  // log pi_theta of each sampled token
  bool truncated = false;

  std::size_t length() const { return tokens.size(); }
};

/// Prompt-side activations, computed once and shared by every step and sample.
class EncodedPrompt {
 public:
  EncodedPrompt();
  ~EncodedPrompt();
  EncodedPrompt(EncodedPrompt&&) noexcept;
  EncodedPrompt& operator=(EncodedPrompt&&) noexcept;

  const PromptEncoding& prompt() const;

  struct Impl;
  const Impl& impl() const { return *impl_; }
  Impl& impl() { return *impl_; }

 private:
  std::unique_ptr<Impl> impl_;
};

EncodedPrompt encode_prompt(const PolicyParams& params, const PromptEncoding& prompt);

/// Probability of every vocabulary entry for the next token.
std::vector<double> next_token_dist(const PolicyParams& params, const PromptEncoding& prompt,
                                    std::span<const Token> prefix);

/// temperature == 0 selects argmax decoding (lowest id wins ties).
Rollout sample_sequence(const PolicyParams& params, const PromptEncoding& prompt, int max_len,
                        double temperature, std::uint64_t rng_seed);
Rollout sample_sequence(const PolicyParams& params, const EncodedPrompt& encoded, int max_len,
                        double temperature, std::uint64_t rng_seed);

double sequence_logprob(const PolicyParams& params, const PromptEncoding& prompt, std::span<const Token> tokens);
std::vector<double> token_logprobs(const PolicyParams& params, const PromptEncoding& prompt,
                                   std::span<const Token> tokens);

/// Teacher-forced next-token distributions along `tokens`: row t is the
/// distribution of token t given tokens[0..t). Flattened T x vocab_size.
std::vector<double> step_distributions(const PolicyParams& params, const PromptEncoding& prompt,
                                       std::span<const Token> tokens);

/// One differentiable sequence: the loss gradient with respect to the logits
/// of every teacher-forced step along `tokens` (T x vocab_size, row-major).
struct SequenceTerm {
  std::string term;
  PromptEncoding prompt;
  std::vector<Token> tokens;
  std::vector<double> dlogits;
};

/// A scalar loss assembled from named terms. Only sequence terms and the L2
/// term depend on the parameters; plain scalars are constants.
class LossGraph {
 public:
  void add_scalar(std::string name, double value);
  void add_sequence(SequenceTerm term);
  void add_l2(std::string name, const PolicyParams& params, double coeff);
  /// Adds `scale * other` to this graph.
  void merge(const LossGraph& other, double scale = 1.0);

  double value() const;
  double term_value(std::string_view name) const;
  std::span<const SequenceTerm> sequences() const { return sequences_; }
  double l2_coeff() const { return l2_coeff_; }

  struct Scalar {
    std::string name;
    double value;
  };
  std::span<const Scalar> scalars() const { return scalars_; }

 private:
  std::vector<Scalar> scalars_;
  std::vector<SequenceTerm> sequences_;
  double l2_coeff_ = 0.0;
};

/// Gradient of graph.value() with respect to every parameter. Sequences are
/// reduced in a fixed order, so the result does not depend on `workers`.
/// Throws NonFiniteError naming the first non-finite term.
Gradients backward(const PolicyParams& params, const LossGraph& graph, int workers = 1);

}  // namespace modgap
