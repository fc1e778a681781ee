// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/policy.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "modgap/parallel.hpp"
#include "modgap/rng.hpp"

namespace modgap {

void PolicyConfig::validate() const {
  if (vocab_size < 2) throw std::invalid_argument("policy.vocab_size must be >= 2");
  if (dim < 1) throw std::invalid_argument("policy.dim must be >= 1");
  if (heads < 1 || dim % heads != 0) throw std::invalid_argument("policy.heads must divide policy.dim");
  if (context_limit < 1) throw std::invalid_argument("policy.context_limit must be >= 1");
  if (eos < 0 || eos >= vocab_size) throw std::invalid_argument("policy.eos outside vocabulary");
}

std::vector<TensorInfo> param_layout(const PolicyConfig& c) {
  const auto V = static_cast<std::size_t>(c.vocab_size);
  const auto d = static_cast<std::size_t>(c.dim);
  const auto h = static_cast<std::size_t>(c.heads);
  const auto dh = static_cast<std::size_t>(c.head_dim());
  std::vector<TensorInfo> t = {
      {"tok_emb", {V, d}},       {"chan_emb", {3, d}},      {"conv_w", {3, d, d}},    {"conv_b", {d}},
      {"state_w", {d, 2 * d}},   {"state_b", {d}},          {"attn_q", {h, dh, d}},   {"attn_k", {h, dh, d}},
      {"attn_v", {h, dh, d}},    {"mix_w", {d, 2 * d}},     {"mix_b", {d}},           {"out_w", {V, d}},
      {"out_b", {V}},
  };
  std::size_t offset = 0;
  for (auto& x : t) {
    x.size = std::accumulate(x.shape.begin(), x.shape.end(), std::size_t{1}, std::multiplies<>());
    x.offset = offset;
    offset += x.size;
  }
  return t;
}

std::size_t param_count(const PolicyConfig& config) {
  const auto layout = param_layout(config);
  return layout.back().offset + layout.back().size;
}

PolicyParams PolicyParams::zeros(const PolicyConfig& config) {
  config.validate();
  return PolicyParams{config, std::vector<double>(param_count(config), 0.0)};
}

PolicyParams PolicyParams::random(const PolicyConfig& config, std::uint64_t seed) {
  PolicyParams p = zeros(config);
  Rng rng(seed);
  for (const auto& t : param_layout(config)) {
    double scale = 0.0;
    if (t.name == "tok_emb" || t.name == "chan_emb") {
      scale = 0.5;
    } else if (t.shape.size() >= 2) {
      scale = 1.0 / std::sqrt(static_cast<double>(t.shape.back()));
    }
    if (scale == 0.0) continue;
    for (std::size_t i = 0; i < t.size; ++i) p.values[t.offset + i] = scale * rng.normal();
  }
  return p;
}

namespace {

const TensorInfo& find_tensor(const PolicyConfig& config, std::string_view name,
                              std::vector<TensorInfo>& storage) {
  storage = param_layout(config);
  for (const auto& t : storage) {
    if (t.name == name) return t;
  }
  throw std::out_of_range(fmt::format("unknown tensor '{}'", name));
}

}  // namespace

std::span<double> PolicyParams::tensor(std::string_view name) {
  std::vector<TensorInfo> storage;
  const auto& t = find_tensor(config, name, storage);
  return std::span<double>(values).subspan(t.offset, t.size);
}

std::span<const double> PolicyParams::tensor(std::string_view name) const {
  std::vector<TensorInfo> storage;
  const auto& t = find_tensor(config, name, storage);
  return std::span<const double>(values).subspan(t.offset, t.size);
}

double Gradients::norm() const {
  double s = 0.0;
  for (double g : values) s += g * g;
  return std::sqrt(s);
}

namespace {

template <class T>
struct Tensors {
  T* tok_emb;
  T* chan_emb;
  T* conv_w;
  T* conv_b;
  T* state_w;
  T* state_b;
  T* attn_q;
  T* attn_k;
  T* attn_v;
  T* mix_w;
  T* mix_b;
  T* out_w;
  T* out_b;
};

template <class T>
Tensors<T> bind(const PolicyConfig& c, T* base) {
  const auto l = param_layout(c);
  return {base + l[0].offset, base + l[1].offset, base + l[2].offset,  base + l[3].offset, base + l[4].offset,
          base + l[5].offset, base + l[6].offset, base + l[7].offset,  base + l[8].offset, base + l[9].offset,
          base + l[10].offset, base + l[11].offset, base + l[12].offset};
}

// y += W x for row-major W[rows, cols].
void matvec_add(const double* W, const double* x, double* y, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* w = W + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int k = 0; k < cols; ++k) acc += w[k] * x[k];
    y[r] += acc;
  }
}

// x += W^T y.
void matvec_t_add(const double* W, const double* y, double* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double* w = W + static_cast<std::size_t>(r) * cols;
    const double yr = y[r];
    if (yr == 0.0) continue;
    for (int k = 0; k < cols; ++k) x[k] += w[k] * yr;
  }
}

// G += y x^T.
void outer_add(double* G, const double* y, const double* x, int rows, int cols) {
  for (int r = 0; r < rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    double* g = G + static_cast<std::size_t>(r) * cols;
    for (int k = 0; k < cols; ++k) g[k] += yr * x[k];
  }
}

void softmax_inplace(double* x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    x[i] = std::exp(x[i] - m);
    s += x[i];
  }
  for (int i = 0; i < n; ++i) x[i] /= s;
}

// Embeds a segment and runs the causal width-3 convolution over it. e and h
// are written at rows [start, start + n).
void conv_segment(const Tensors<const double>& P, int d, std::span<const Token> tokens, Channel tag,
                  double* e, double* h) {
  const int n = static_cast<int>(tokens.size());
  for (int i = 0; i < n; ++i) {
    double* ei = e + static_cast<std::size_t>(i) * d;
    const double* te = P.tok_emb + static_cast<std::size_t>(tokens[i]) * d;
    const double* ce = P.chan_emb + static_cast<std::size_t>(tag) * d;
    for (int k = 0; k < d; ++k) ei[k] = te[k] + ce[k];
  }
  for (int i = 0; i < n; ++i) {
    double* hi = h + static_cast<std::size_t>(i) * d;
    std::copy(P.conv_b, P.conv_b + d, hi);
    for (int k = 0; k < 3 && i - k >= 0; ++k) {
      matvec_add(P.conv_w + static_cast<std::size_t>(k) * d * d, e + static_cast<std::size_t>(i - k) * d, hi, d, d);
    }
    for (int k = 0; k < d; ++k) hi[k] = std::tanh(hi[k]);
  }
}

void check_tokens(const PolicyConfig& c, std::span<const Token> tokens, std::string_view what) {
  for (Token t : tokens) {
    if (t < 0 || t >= c.vocab_size) throw std::out_of_range(fmt::format("{} token {} outside vocabulary", what, t));
  }
}

struct StepCache {
  std::vector<double> in, s, q, a, z, mix_in, o, logits;
};

}  // namespace

struct EncodedPrompt::Impl {
  PolicyConfig config;
  PromptEncoding prompt;
  int L = 0;
  int scene_len = 0;
  std::vector<Token> tokens;
  std::vector<double> e, h, K, V;

  const double* hq() const { return L > 0 ? h.data() + static_cast<std::size_t>(L - 1) * config.dim : nullptr; }
};

EncodedPrompt::EncodedPrompt() : impl_(std::make_unique<Impl>()) {}
EncodedPrompt::~EncodedPrompt() = default;
EncodedPrompt::EncodedPrompt(EncodedPrompt&&) noexcept = default;
EncodedPrompt& EncodedPrompt::operator=(EncodedPrompt&&) noexcept = default;
const PromptEncoding& EncodedPrompt::prompt() const { return impl_->prompt; }

EncodedPrompt encode_prompt(const PolicyParams& params, const PromptEncoding& prompt) {
  const auto& c = params.config;
  if (static_cast<int>(prompt.size()) > c.context_limit) {
    throw ContextOverflow(
        fmt::format("prompt length {} exceeds context limit {}", prompt.size(), c.context_limit));
  }
  check_tokens(c, prompt.scene_tokens, "scene");
  check_tokens(c, prompt.text_tokens, "text");
  const auto P = bind(c, params.values.data());
  const int d = c.dim;
  EncodedPrompt enc;
  auto& m = enc.impl();
  m.config = c;
  m.prompt = prompt;
  m.L = static_cast<int>(prompt.size());
  m.scene_len = static_cast<int>(prompt.scene_tokens.size());
  m.tokens = prompt.scene_tokens;
  m.tokens.insert(m.tokens.end(), prompt.text_tokens.begin(), prompt.text_tokens.end());
  const auto Ld = static_cast<std::size_t>(m.L) * d;
  m.e.assign(Ld, 0.0);
  m.h.assign(Ld, 0.0);
  m.K.assign(Ld, 0.0);
  m.V.assign(Ld, 0.0);
  conv_segment(P, d, prompt.scene_tokens, Channel::Scene, m.e.data(), m.h.data());
  const auto off = static_cast<std::size_t>(m.scene_len) * d;
  conv_segment(P, d, prompt.text_tokens, Channel::Text, m.e.data() + off, m.h.data() + off);
  for (int i = 0; i < m.L; ++i) {
    const auto o = static_cast<std::size_t>(i) * d;
    matvec_add(P.attn_k, m.h.data() + o, m.K.data() + o, d, d);
    matvec_add(P.attn_v, m.h.data() + o, m.V.data() + o, d, d);
  }
  return enc;
}

namespace {

// One decoding step given the prompt memory and the response context vector r
// (nullptr at the first step).
void step_forward(const Tensors<const double>& P, const EncodedPrompt::Impl& m, const double* r, StepCache& c) {
  const auto& cfg = m.config;
  const int d = cfg.dim;
  const int H = cfg.heads;
  const int dh = cfg.head_dim();
  const int V = cfg.vocab_size;
  const int L = m.L;
  c.in.assign(2 * d, 0.0);
  if (const double* hq = m.hq()) std::copy(hq, hq + d, c.in.begin());
  if (r) std::copy(r, r + d, c.in.begin() + d);
  c.s.assign(P.state_b, P.state_b + d);
  matvec_add(P.state_w, c.in.data(), c.s.data(), d, 2 * d);
  for (auto& x : c.s) x = std::tanh(x);
  c.q.assign(d, 0.0);
  matvec_add(P.attn_q, c.s.data(), c.q.data(), d, d);
  c.a.assign(static_cast<std::size_t>(H) * L, 0.0);
  c.z.assign(d, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  if (L > 0) {
    for (int hh = 0; hh < H; ++hh) {
      double* a = c.a.data() + static_cast<std::size_t>(hh) * L;
      const double* qh = c.q.data() + hh * dh;
      for (int j = 0; j < L; ++j) {
        const double* kj = m.K.data() + static_cast<std::size_t>(j) * d + hh * dh;
        double acc = 0.0;
        for (int k = 0; k < dh; ++k) acc += qh[k] * kj[k];
        a[j] = acc * scale;
      }
      softmax_inplace(a, L);
      double* zh = c.z.data() + hh * dh;
      for (int j = 0; j < L; ++j) {
        const double* vj = m.V.data() + static_cast<std::size_t>(j) * d + hh * dh;
        for (int k = 0; k < dh; ++k) zh[k] += a[j] * vj[k];
      }
    }
  }
  c.mix_in.assign(2 * d, 0.0);
  std::copy(c.s.begin(), c.s.end(), c.mix_in.begin());
  std::copy(c.z.begin(), c.z.end(), c.mix_in.begin() + d);
  c.o.assign(P.mix_b, P.mix_b + d);
  matvec_add(P.mix_w, c.mix_in.data(), c.o.data(), d, 2 * d);
  for (auto& x : c.o) x = std::tanh(x);
  c.logits.assign(P.out_b, P.out_b + V);
  matvec_add(P.out_w, c.o.data(), c.logits.data(), V, d);
}

// Convolution output of the response position `i` given the embedded response
// e (rows 0..i).
void response_conv_at(const Tensors<const double>& P, int d, const double* e, int i, double* h) {
  std::copy(P.conv_b, P.conv_b + d, h);
  for (int k = 0; k < 3 && i - k >= 0; ++k) {
    matvec_add(P.conv_w + static_cast<std::size_t>(k) * d * d, e + static_cast<std::size_t>(i - k) * d, h, d, d);
  }
  for (int k = 0; k < d; ++k) h[k] = std::tanh(h[k]);
}

void embed_response(const Tensors<const double>& P, int d, Token t, double* e) {
  const double* te = P.tok_emb + static_cast<std::size_t>(t) * d;
  const double* ce = P.chan_emb + static_cast<std::size_t>(Channel::Response) * d;
  for (int k = 0; k < d; ++k) e[k] = te[k] + ce[k];
}

// Teacher-forced forward pass along `tokens`; logits of all T steps are
// written row-major into `logits` and, when `caches` is non-null, the
// per-step activations are kept for backward.
struct ResponseForward {
  std::vector<double> e;   // T x d response embeddings
  std::vector<double> hr;  // T x d response conv outputs
  std::vector<double> logits;
  std::vector<StepCache> caches;
};

ResponseForward forward_response(const Tensors<const double>& P, const EncodedPrompt::Impl& m,
                                 std::span<const Token> tokens, bool keep_caches) {
  const int d = m.config.dim;
  const int V = m.config.vocab_size;
  const int T = static_cast<int>(tokens.size());
  ResponseForward f;
  f.e.assign(static_cast<std::size_t>(T) * d, 0.0);
  f.hr.assign(static_cast<std::size_t>(T) * d, 0.0);
  f.logits.assign(static_cast<std::size_t>(T) * V, 0.0);
  if (keep_caches) f.caches.resize(T);
  StepCache scratch;
  for (int t = 0; t < T; ++t) {
    StepCache& c = keep_caches ? f.caches[t] : scratch;
    const double* r = t > 0 ? f.hr.data() + static_cast<std::size_t>(t - 1) * d : nullptr;
    step_forward(P, m, r, c);
    std::copy(c.logits.begin(), c.logits.end(), f.logits.begin() + static_cast<std::ptrdiff_t>(t) * V);
    if (t + 1 < T) {
      embed_response(P, d, tokens[t], f.e.data() + static_cast<std::size_t>(t) * d);
      response_conv_at(P, d, f.e.data(), t, f.hr.data() + static_cast<std::size_t>(t) * d);
    }
  }
  return f;
}

void check_context(const PolicyConfig& c, std::size_t prompt_len, std::size_t response_len) {
  if (prompt_len + response_len > static_cast<std::size_t>(c.context_limit)) {
    throw ContextOverflow(fmt::format("prompt length {} + response length {} exceeds context limit {}", prompt_len,
                                      response_len, c.context_limit));
  }
}

}  // namespace

std::vector<double> next_token_dist(const PolicyParams& params, const PromptEncoding& prompt,
                                    std::span<const Token> prefix) {
  check_context(params.config, prompt.size(), prefix.size());
  check_tokens(params.config, prefix, "prefix");
  const auto enc = encode_prompt(params, prompt);
  const auto P = bind(params.config, static_cast<const double*>(params.values.data()));
  std::vector<Token> extended(prefix.begin(), prefix.end());
  extended.push_back(0);
  auto f = forward_response(P, enc.impl(), extended, false);
  const int V = params.config.vocab_size;
  std::vector<double> p(f.logits.end() - V, f.logits.end());
  softmax_inplace(p.data(), V);
  return p;
}

std::vector<double> step_distributions(const PolicyParams& params, const PromptEncoding& prompt,
                                       std::span<const Token> tokens) {
  check_context(params.config, prompt.size(), tokens.size() > 0 ? tokens.size() - 1 : 0);
  check_tokens(params.config, tokens, "response");
  const auto enc = encode_prompt(params, prompt);
  const auto P = bind(params.config, static_cast<const double*>(params.values.data()));
  auto f = forward_response(P, enc.impl(), tokens, false);
  const int V = params.config.vocab_size;
  for (std::size_t t = 0; t < tokens.size(); ++t) softmax_inplace(f.logits.data() + t * V, V);
  return std::move(f.logits);
}

std::vector<double> token_logprobs(const PolicyParams& params, const PromptEncoding& prompt,
                                   std::span<const Token> tokens) {
  const auto dist = step_distributions(params, prompt, tokens);
  const auto V = static_cast<std::size_t>(params.config.vocab_size);
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) out[t] = std::log(dist[t * V + tokens[t]]);
  return out;
}

double sequence_logprob(const PolicyParams& params, const PromptEncoding& prompt, std::span<const Token> tokens) {
  const auto lp = token_logprobs(params, prompt, tokens);
  double s = 0.0;
  for (double x : lp) s += x;
  return s;
}

Rollout sample_sequence(const PolicyParams& params, const PromptEncoding& prompt, int max_len, double temperature,
                        std::uint64_t rng_seed) {
  return sample_sequence(params, encode_prompt(params, prompt), max_len, temperature, rng_seed);
}

Rollout sample_sequence(const PolicyParams& params, const EncodedPrompt& encoded, int max_len, double temperature,
                        std::uint64_t rng_seed) {
  if (max_len < 1) throw std::invalid_argument("max_len must be >= 1");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) {
    throw std::invalid_argument("temperature must be finite and >= 0");
  }
  const auto& cfg = params.config;
  const auto& m = encoded.impl();
  if (!(m.config == cfg)) throw std::invalid_argument("encoded prompt belongs to a different policy config");
  check_context(cfg, m.prompt.size(), static_cast<std::size_t>(max_len) - 1);
  const auto P = bind(cfg, static_cast<const double*>(params.values.data()));
  const int d = cfg.dim;
  const int V = cfg.vocab_size;
  Rng rng(rng_seed);
  Rollout out;
  out.prompt = m.prompt;
  std::vector<double> e(static_cast<std::size_t>(max_len) * d, 0.0);
  std::vector<double> hr(d, 0.0);
  std::vector<double> probs(V), draw(V);
  StepCache c;
  for (int t = 0; t < max_len; ++t) {
    step_forward(P, m, t > 0 ? hr.data() : nullptr, c);
    std::copy(c.logits.begin(), c.logits.end(), probs.begin());
    softmax_inplace(probs.data(), V);
    Token next = 0;
    if (temperature == 0.0) {
      next = static_cast<Token>(std::max_element(c.logits.begin(), c.logits.end()) - c.logits.begin());
    } else {
      for (int v = 0; v < V; ++v) draw[v] = c.logits[v] / temperature;
      softmax_inplace(draw.data(), V);
      const double u = rng.uniform();
      double acc = 0.0;
      next = static_cast<Token>(V - 1);
      for (int v = 0; v < V; ++v) {
        acc += draw[v];
        if (u < acc) {
          next = static_cast<Token>(v);
          break;
        }
      }
      while (draw[next] == 0.0 && next > 0) --next;
    }
    out.tokens.push_back(next);
    out.step_logprobs.push_back(std::log(probs[next]));
    if (next == cfg.eos) break;
    if (t + 1 < max_len) {
      embed_response(P, d, next, e.data() + static_cast<std::size_t>(t) * d);
      response_conv_at(P, d, e.data(), t, hr.data());
    }
  }
  out.truncated = out.tokens.back() != cfg.eos && static_cast<int>(out.tokens.size()) == max_len;
  return out;
}

void LossGraph::add_scalar(std::string name, double value) { scalars_.push_back({std::move(name), value}); }

void LossGraph::add_sequence(SequenceTerm term) { sequences_.push_back(std::move(term)); }

void LossGraph::add_l2(std::string name, const PolicyParams& params, double coeff) {
  double s = 0.0;
  for (double x : params.values) s += x * x;
  scalars_.push_back({std::move(name), coeff * s});
  l2_coeff_ += coeff;
}

void LossGraph::merge(const LossGraph& other, double scale) {
  for (const auto& s : other.scalars_) scalars_.push_back({s.name, scale * s.value});
  for (const auto& q : other.sequences_) {
    SequenceTerm t = q;
    for (auto& g : t.dlogits) g *= scale;
    sequences_.push_back(std::move(t));
  }
  l2_coeff_ += scale * other.l2_coeff_;
}

double LossGraph::value() const {
  double v = 0.0;
  for (const auto& s : scalars_) v += s.value;
  return v;
}

double LossGraph::term_value(std::string_view name) const {
  double v = 0.0;
  for (const auto& s : scalars_) {
    if (s.name == name) v += s.value;
  }
  return v;
}

namespace {

// Accumulates the gradient of sum_t <dlogits_t, logits_t> into G.
void backward_sequence(const PolicyParams& params, const SequenceTerm& term, std::vector<double>& G) {
  const auto& cfg = params.config;
  const int d = cfg.dim;
  const int H = cfg.heads;
  const int dh = cfg.head_dim();
  const int V = cfg.vocab_size;
  const int T = static_cast<int>(term.tokens.size());
  if (T == 0) return;
  const auto P = bind(cfg, static_cast<const double*>(params.values.data()));
  const auto D = bind(cfg, G.data());
  const auto enc = encode_prompt(params, term.prompt);
  const auto& m = enc.impl();
  check_context(cfg, m.prompt.size(), static_cast<std::size_t>(T - 1));
  check_tokens(cfg, term.tokens, "response");
  const auto f = forward_response(P, m, term.tokens, true);
  const int L = m.L;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<double> dM(static_cast<std::size_t>(L) * d, 0.0);
  std::vector<double> dK(static_cast<std::size_t>(L) * d, 0.0);
  std::vector<double> dVm(static_cast<std::size_t>(L) * d, 0.0);
  std::vector<double> dhr(static_cast<std::size_t>(T) * d, 0.0);
  std::vector<double> dhq(d, 0.0);
  std::vector<double> d_o(d), dpo(d), dmix(2 * d), dq(d), dps(d), din(2 * d), da(L);

  for (int t = 0; t < T; ++t) {
    const double* g = term.dlogits.data() + static_cast<std::size_t>(t) * V;
    bool any = false;
    for (int v = 0; v < V; ++v) any = any || g[v] != 0.0;
    if (!any) continue;
    const auto& c = f.caches[t];
    outer_add(D.out_w, g, c.o.data(), V, d);
    for (int v = 0; v < V; ++v) D.out_b[v] += g[v];
    std::fill(d_o.begin(), d_o.end(), 0.0);
    matvec_t_add(P.out_w, g, d_o.data(), V, d);
    for (int k = 0; k < d; ++k) dpo[k] = d_o[k] * (1.0 - c.o[k] * c.o[k]);
    outer_add(D.mix_w, dpo.data(), c.mix_in.data(), d, 2 * d);
    for (int k = 0; k < d; ++k) D.mix_b[k] += dpo[k];
    std::fill(dmix.begin(), dmix.end(), 0.0);
    matvec_t_add(P.mix_w, dpo.data(), dmix.data(), d, 2 * d);
    const double* ds_mix = dmix.data();
    const double* dz = dmix.data() + d;

    std::fill(dq.begin(), dq.end(), 0.0);
    for (int hh = 0; hh < H && L > 0; ++hh) {
      const double* a = c.a.data() + static_cast<std::size_t>(hh) * L;
      const double* dzh = dz + hh * dh;
      const double* qh = c.q.data() + hh * dh;
      double sum = 0.0;
      for (int j = 0; j < L; ++j) {
        const double* vj = m.V.data() + static_cast<std::size_t>(j) * d + hh * dh;
        double* dvj = dVm.data() + static_cast<std::size_t>(j) * d + hh * dh;
        double acc = 0.0;
        for (int k = 0; k < dh; ++k) {
          acc += dzh[k] * vj[k];
          dvj[k] += a[j] * dzh[k];
        }
        da[j] = acc;
        sum += a[j] * acc;
      }
      for (int j = 0; j < L; ++j) {
        const double dscore = a[j] * (da[j] - sum) * scale;
        if (dscore == 0.0) continue;
        const double* kj = m.K.data() + static_cast<std::size_t>(j) * d + hh * dh;
        double* dkj = dK.data() + static_cast<std::size_t>(j) * d + hh * dh;
        for (int k = 0; k < dh; ++k) {
          dq[hh * dh + k] += dscore * kj[k];
          dkj[k] += dscore * qh[k];
        }
      }
    }
    outer_add(D.attn_q, dq.data(), c.s.data(), d, d);
    for (int k = 0; k < d; ++k) dps[k] = ds_mix[k];
    matvec_t_add(P.attn_q, dq.data(), dps.data(), d, d);
    for (int k = 0; k < d; ++k) dps[k] *= 1.0 - c.s[k] * c.s[k];
    outer_add(D.state_w, dps.data(), c.in.data(), d, 2 * d);
    for (int k = 0; k < d; ++k) D.state_b[k] += dps[k];
    std::fill(din.begin(), din.end(), 0.0);
    matvec_t_add(P.state_w, dps.data(), din.data(), d, 2 * d);
    for (int k = 0; k < d; ++k) dhq[k] += din[k];
    if (t > 0) {
      double* dr = dhr.data() + static_cast<std::size_t>(t - 1) * d;
      for (int k = 0; k < d; ++k) dr[k] += din[d + k];
    }
  }

  for (int j = 0; j < L; ++j) {
    const auto o = static_cast<std::size_t>(j) * d;
    outer_add(D.attn_k, dK.data() + o, m.h.data() + o, d, d);
    outer_add(D.attn_v, dVm.data() + o, m.h.data() + o, d, d);
    matvec_t_add(P.attn_k, dK.data() + o, dM.data() + o, d, d);
    matvec_t_add(P.attn_v, dVm.data() + o, dM.data() + o, d, d);
  }
  if (L > 0) {
    double* dlast = dM.data() + static_cast<std::size_t>(L - 1) * d;
    for (int k = 0; k < d; ++k) dlast[k] += dhq[k];
  }

  // Convolution and embedding backward for one segment.
  std::vector<double> dpre(d), de;
  auto conv_backward = [&](const double* e, const double* h, const double* dh_seg, std::span<const Token> tokens,
                           Channel tag, int n) {
    de.assign(static_cast<std::size_t>(n) * d, 0.0);
    for (int i = 0; i < n; ++i) {
      const double* hi = h + static_cast<std::size_t>(i) * d;
      const double* gi = dh_seg + static_cast<std::size_t>(i) * d;
      bool any = false;
      for (int k = 0; k < d; ++k) {
        dpre[k] = gi[k] * (1.0 - hi[k] * hi[k]);
        any = any || dpre[k] != 0.0;
      }
      if (!any) continue;
      for (int k = 0; k < d; ++k) D.conv_b[k] += dpre[k];
      for (int k = 0; k < 3 && i - k >= 0; ++k) {
        const auto wo = static_cast<std::size_t>(k) * d * d;
        outer_add(D.conv_w + wo, dpre.data(), e + static_cast<std::size_t>(i - k) * d, d, d);
        matvec_t_add(P.conv_w + wo, dpre.data(), de.data() + static_cast<std::size_t>(i - k) * d, d, d);
      }
    }
    for (int i = 0; i < n; ++i) {
      const double* dei = de.data() + static_cast<std::size_t>(i) * d;
      double* te = D.tok_emb + static_cast<std::size_t>(tokens[i]) * d;
      double* ce = D.chan_emb + static_cast<std::size_t>(tag) * d;
      for (int k = 0; k < d; ++k) {
        te[k] += dei[k];
        ce[k] += dei[k];
      }
    }
  };
  const auto off = static_cast<std::size_t>(m.scene_len) * d;
  conv_backward(m.e.data(), m.h.data(), dM.data(), m.prompt.scene_tokens, Channel::Scene, m.scene_len);
  conv_backward(m.e.data() + off, m.h.data() + off, dM.data() + off, m.prompt.text_tokens, Channel::Text,
                L - m.scene_len);
  if (T > 1) {
    conv_backward(f.e.data(), f.hr.data(), dhr.data(), std::span<const Token>(term.tokens).first(T - 1),
                  Channel::Response, T - 1);
  }
}

constexpr std::size_t kChunk = 8;

}  // namespace

Gradients backward(const PolicyParams& params, const LossGraph& graph, int workers) {
  for (const auto& s : graph.scalars()) {
    if (!std::isfinite(s.value)) throw NonFiniteError(fmt::format("non-finite loss term '{}'", s.name));
  }
  const auto V = static_cast<std::size_t>(params.config.vocab_size);
  for (const auto& q : graph.sequences()) {
    if (q.dlogits.size() != q.tokens.size() * V) {
      throw std::invalid_argument(fmt::format("loss term '{}': dlogits size mismatch", q.term));
    }
    for (double g : q.dlogits) {
      if (!std::isfinite(g)) throw NonFiniteError(fmt::format("non-finite gradient in loss term '{}'", q.term));
    }
  }
  const std::size_t n = params.values.size();
  const auto seqs = graph.sequences();
  const std::size_t chunks = (seqs.size() + kChunk - 1) / kChunk;
  std::vector<std::vector<double>> partial(chunks);
  parallel_for(chunks, workers, [&](std::size_t ci) {
    partial[ci].assign(n, 0.0);
    const std::size_t end = std::min(seqs.size(), (ci + 1) * kChunk);
    for (std::size_t i = ci * kChunk; i < end; ++i) backward_sequence(params, seqs[i], partial[ci]);
  });
  Gradients g;
  g.values.assign(n, 0.0);
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < n; ++i) g.values[i] += p[i];
  }
  if (graph.l2_coeff() != 0.0) {
    for (std::size_t i = 0; i < n; ++i) g.values[i] += 2.0 * graph.l2_coeff() * params.values[i];
  }
  for (double x : g.values) {
    if (!std::isfinite(x)) throw NonFiniteError("non-finite parameter gradient");
  }
  return g;
}

}  // namespace modgap
