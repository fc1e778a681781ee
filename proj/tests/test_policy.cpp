// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "modgap/checkpoint.hpp"
#include "modgap/policy.hpp"
#include "test_support.hpp"

namespace modgap {
namespace {

using testing::small_policy;

PromptEncoding sample_prompt() {
  const auto inst = testing::simple_instance();
  return render_prompt(inst, PromptVariant::FullText);
}

TEST(Policy, DefaultParameterCountWithinLimit) {
  const auto n = param_count(PolicyConfig{});
  EXPECT_LE(n, 100000u);
  EXPECT_GT(n, 10000u);
  EXPECT_LE(param_count(testing::small_config()), 5000u);
}

TEST(Policy, DistributionNormalizes) {
  const auto p = PolicyParams::random(PolicyConfig{}, 5);
  const auto prompt = sample_prompt();
  std::vector<Token> prefix;
  for (Token t : {22, 23, 24, 7}) {
    const auto dist = next_token_dist(p, prompt, prefix);
    double s = 0.0;
    for (double x : dist) {
      EXPECT_GE(x, 0.0);
      s += x;
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
    prefix.push_back(t);
  }
}

TEST(Policy, ZeroOutputProjectionGivesUniform) {
  auto p = PolicyParams::random(PolicyConfig{}, 6);
  for (auto& w : p.tensor("out_w")) w = 0.0;
  for (auto& b : p.tensor("out_b")) b = 0.0;
  const auto dist = next_token_dist(p, sample_prompt(), std::vector<Token>{1, 2});
  for (double x : dist) EXPECT_NEAR(x, 1.0 / vocab::kSize, 1e-15);
}

TEST(Policy, ThreeTokenSoftmaxMatchesClosedForm) {
  PolicyConfig c;
  c.vocab_size = 3;
  c.eos = 2;
  c.dim = 4;
  c.heads = 1;
  auto p = PolicyParams::random(c, 7);
  for (auto& w : p.tensor("out_w")) w = 0.0;
  auto b = p.tensor("out_b");
  b[0] = 1.0;
  b[1] = 2.0;
  b[2] = 3.0;
  PromptEncoding prompt{{0, 1}, {1}};
  const auto dist = next_token_dist(p, prompt, {});
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(dist[0], std::exp(1.0) / z, 1e-12);
  EXPECT_NEAR(dist[1], std::exp(2.0) / z, 1e-12);
  EXPECT_NEAR(dist[2], std::exp(3.0) / z, 1e-12);
  EXPECT_NEAR(dist[0], 0.09003, 5e-6);
  EXPECT_NEAR(dist[1], 0.24473, 5e-6);
  EXPECT_NEAR(dist[2], 0.66524, 5e-6);
}

TEST(Policy, ContextOverflowIsAnError) {
  auto c = PolicyConfig{};
  const auto prompt = sample_prompt();
  c.context_limit = static_cast<int>(prompt.size());
  const auto p = PolicyParams::random(c, 1);
  EXPECT_NO_THROW(next_token_dist(p, prompt, {}));
  EXPECT_THROW(next_token_dist(p, prompt, std::vector<Token>{1}), ContextOverflow);
  EXPECT_THROW(sample_sequence(p, prompt, 4, 1.0, 1), ContextOverflow);
}

TEST(Policy, SamplingIsDeterministicInSeed) {
  const auto p = PolicyParams::random(PolicyConfig{}, 8);
  const auto prompt = sample_prompt();
  const auto a = sample_sequence(p, prompt, 32, 1.0, 99);
  const auto b = sample_sequence(p, prompt, 32, 1.0, 99);
  EXPECT_EQ(a.tokens, b.tokens);
  EXPECT_EQ(a.step_logprobs, b.step_logprobs);
  EXPECT_EQ(a.truncated, b.truncated);
}

TEST(Policy, ArgmaxSamplingIgnoresSeed) {
  const auto p = PolicyParams::random(PolicyConfig{}, 9);
  const auto prompt = sample_prompt();
  const auto a = sample_sequence(p, prompt, 16, 0.0, 1);
  const auto b = sample_sequence(p, prompt, 16, 0.0, 2);
  EXPECT_EQ(a.tokens, b.tokens);
  std::vector<Token> prefix;
  for (Token t : a.tokens) {
    const auto dist = next_token_dist(p, prompt, prefix);
    const auto best = std::max_element(dist.begin(), dist.end()) - dist.begin();
    EXPECT_EQ(t, best);
    prefix.push_back(t);
  }
}

TEST(Policy, ArgmaxTieBreaksToLowestId) {
  auto p = PolicyParams::random(PolicyConfig{}, 10);
  for (auto& w : p.tensor("out_w")) w = 0.0;
  for (auto& b : p.tensor("out_b")) b = 0.0;
  p.tensor("out_b")[5] = 1.0;
  p.tensor("out_b")[9] = 1.0;
  const auto r = sample_sequence(p, sample_prompt(), 3, 0.0, 1);
  EXPECT_EQ(r.tokens, (std::vector<Token>{5, 5, 5}));
  EXPECT_TRUE(r.truncated);
}

TEST(Policy, NegativeTemperatureRejected) {
  const auto p = PolicyParams::random(PolicyConfig{}, 1);
  EXPECT_THROW(sample_sequence(p, sample_prompt(), 4, -1.0, 1), std::invalid_argument);
  EXPECT_THROW(sample_sequence(p, sample_prompt(), 0, 1.0, 1), std::invalid_argument);
}

TEST(Policy, RolloutInvariantsAndLogprobConsistency) {
  const auto p = PolicyParams::random(PolicyConfig{}, 11);
  const auto prompt = sample_prompt();
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = sample_sequence(p, prompt, 10, 1.0, seed);
    ASSERT_EQ(r.step_logprobs.size(), r.tokens.size());
    if (r.truncated) EXPECT_EQ(r.tokens.size(), 10u);
    if (r.tokens.back() != vocab::kEos) EXPECT_TRUE(r.truncated);
    double sum = 0.0;
    std::vector<Token> prefix;
    for (std::size_t t = 0; t < r.tokens.size(); ++t) {
      EXPECT_LE(r.step_logprobs[t], 0.0);
      const auto dist = next_token_dist(p, prompt, prefix);
      EXPECT_NEAR(r.step_logprobs[t], std::log(dist[r.tokens[t]]), 1e-9);
      sum += r.step_logprobs[t];
      prefix.push_back(r.tokens[t]);
    }
    EXPECT_NEAR(sum, sequence_logprob(p, prompt, r.tokens), 1e-9);
  }
}

TEST(Policy, EmptySequenceLogprobIsZero) {
  const auto p = PolicyParams::random(PolicyConfig{}, 12);
  EXPECT_EQ(sequence_logprob(p, sample_prompt(), {}), 0.0);
}

TEST(Policy, UniformSixtyFourSymbolPolicy) {
  PolicyConfig c;
  c.vocab_size = 64;
  c.eos = 63;
  c.dim = 8;
  c.heads = 2;
  auto p = PolicyParams::random(c, 13);
  for (auto& w : p.tensor("out_w")) w = 0.0;
  EXPECT_NEAR(sequence_logprob(p, PromptEncoding{{1, 2}, {3}}, std::vector<Token>{17}), std::log(1.0 / 64.0), 1e-12);
  EXPECT_NEAR(std::log(1.0 / 64.0), -4.1589, 1e-4);
}

// Exact enumeration of every sequence of length <= 2 under a 3-token policy
// against empirical frequencies.
TEST(Policy, SampleFrequenciesMatchEnumeration) {
  PolicyConfig c;
  c.vocab_size = 3;
  c.eos = 2;
  c.dim = 6;
  c.heads = 2;
  const auto p = PolicyParams::random(c, 14);
  const PromptEncoding prompt{{0, 1, 0}, {1, 1}};
  std::map<std::vector<Token>, double> exact;
  const auto d0 = next_token_dist(p, prompt, {});
  exact[{2}] = d0[2];
  for (Token a : {0, 1}) {
    const auto d1 = next_token_dist(p, prompt, std::vector<Token>{a});
    for (Token b : {0, 1, 2}) exact[{a, b}] = d0[a] * d1[b];
  }
  double total = 0.0;
  for (const auto& [k, v] : exact) total += v;
  ASSERT_NEAR(total, 1.0, 1e-12);

  const int n = 100000;
  const auto enc = encode_prompt(p, prompt);
  std::map<std::vector<Token>, int> counts;
  for (int i = 0; i < n; ++i) ++counts[sample_sequence(p, enc, 2, 1.0, derive_seed({77, static_cast<std::uint64_t>(i)})).tokens];
  for (const auto& [seq, prob] : exact) {
    const double sigma = std::sqrt(prob * (1.0 - prob) / n);
    const double freq = static_cast<double>(counts[seq]) / n;
    EXPECT_LE(std::abs(freq - prob), 3.0 * sigma + 1e-12) << "sequence of length " << seq.size();
  }
  for (const auto& [seq, cnt] : counts) EXPECT_TRUE(exact.count(seq)) << "unexpected sequence";
}

TEST(Backward, ConstantLossGivesZeroGradient) {
  const auto p = small_policy(1);
  LossGraph g;
  g.add_scalar("constant", 3.5);
  const auto grads = backward(p, g);
  for (double x : grads.values) EXPECT_EQ(x, 0.0);
}

TEST(Backward, SquaredNormGradientIsTwoTheta) {
  PolicyConfig c;
  c.vocab_size = 2;
  c.eos = 1;
  c.dim = 1;
  c.heads = 1;
  auto p = PolicyParams::random(c, 3);
  ASSERT_LE(p.size(), 30u);
  LossGraph g;
  g.add_l2("l2", p, 1.0);
  const auto grads = backward(p, g);
  double sq = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_EQ(grads.values[i], 2.0 * p.values[i]);
    sq += p.values[i] * p.values[i];
  }
  EXPECT_EQ(g.value(), sq);
}

TEST(Backward, NonFiniteTermIsNamed) {
  const auto p = small_policy(2);
  LossGraph g;
  g.add_scalar("broken_term", std::nan(""));
  try {
    backward(p, g);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("broken_term"), std::string::npos);
  }
}

// Loss = sum_t <w_t, logits_t> for fixed random weights: checks the whole
// forward/backward chain against central differences.
TEST(Backward, LinearLogitLossMatchesFiniteDifferences) {
  const auto p = small_policy(3);
  const auto inst = testing::simple_instance();
  const auto prompt = render_prompt(inst, PromptVariant::FullText);
  const std::vector<Token> tokens = {22, 23, 24, 7, 25, 26};
  const auto V = static_cast<std::size_t>(p.config.vocab_size);
  Rng rng(4);
  std::vector<double> w(tokens.size() * V);
  for (auto& x : w) x = rng.normal();
  auto loss = [&](const PolicyParams& q) {
    const auto dist = step_distributions(q, prompt, tokens);
    double s = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t) {
      double lse_max = -1e300;
      for (std::size_t v = 0; v < V; ++v) lse_max = std::max(lse_max, std::log(dist[t * V + v]));
      for (std::size_t v = 0; v < V; ++v) s += w[t * V + v] * std::log(dist[t * V + v]);
    }
    return s;
  };
  // d/dlogits of sum_v w_v log p_v = w - p * sum(w).
  const auto dist = step_distributions(p, prompt, tokens);
  SequenceTerm term{"probe", prompt, tokens, std::vector<double>(tokens.size() * V)};
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    double sw = 0.0;
    for (std::size_t v = 0; v < V; ++v) sw += w[t * V + v];
    for (std::size_t v = 0; v < V; ++v) term.dlogits[t * V + v] = w[t * V + v] - dist[t * V + v] * sw;
  }
  LossGraph g;
  g.add_sequence(term);
  const auto grads = backward(p, g);
  const auto r = testing::finite_difference_check(p, grads.values, loss, 200, 5);
  EXPECT_LE(r.worst, 1e-3) << "worst coordinate " << r.worst_index;
}

TEST(Backward, WorkerCountDoesNotChangeGradients) {
  const auto p = small_policy(4);
  const auto inst = testing::simple_instance();
  LossGraph g;
  const auto V = static_cast<std::size_t>(p.config.vocab_size);
  for (int i = 0; i < 19; ++i) {
    const auto r = sample_sequence(p, render_prompt(inst, PromptVariant::PartialText), 8, 1.0, i);
    SequenceTerm t{"x", r.prompt, r.tokens, std::vector<double>(r.tokens.size() * V, 0.01 * (i + 1))};
    t.dlogits[0] = -1.0;
    g.add_sequence(t);
  }
  const auto a = backward(p, g, 1);
  const auto b = backward(p, g, 4);
  EXPECT_EQ(a.values, b.values);
}

TEST(Checkpoint, RoundTripIsByteIdentical) {
  const auto p = PolicyParams::random(PolicyConfig{}, 15);
  const auto bytes = serialize_checkpoint(p);
  const auto q = deserialize_checkpoint(bytes);
  EXPECT_EQ(q.values, p.values);
  EXPECT_EQ(q.config, p.config);
  EXPECT_EQ(serialize_checkpoint(q), bytes);
  EXPECT_EQ(bytes.substr(0, 4), "MGLB");
}

TEST(Checkpoint, HeadCountRecoveredFromShapes) {
  const auto p = small_policy(16);
  const auto q = deserialize_checkpoint(serialize_checkpoint(p));
  EXPECT_EQ(q.config.heads, 2);
  EXPECT_EQ(q.config.dim, 12);
}

TEST(Checkpoint, CorruptHeadersNameTheField) {
  const auto bytes = serialize_checkpoint(small_policy(17));
  auto expect_field = [](const std::string& b, const std::string& field) {
    try {
      deserialize_checkpoint(b);
      ADD_FAILURE() << "expected failure on " << field;
    } catch (const CheckpointError& e) {
      EXPECT_EQ(e.field(), field);
    }
  };
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  expect_field(bad_magic, "magic");
  auto bad_version = bytes;
  bad_version[4] = 9;
  expect_field(bad_version, "version");
  auto bad_count = bytes;
  bad_count[8] ^= 1;
  expect_field(bad_count, "param_count");
  expect_field(bytes.substr(0, 6), "version");
  expect_field(bytes.substr(0, bytes.size() - 8), "values");
  expect_field("", "magic");
}

}  // namespace
}  // namespace modgap
