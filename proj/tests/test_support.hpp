// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "modgap/policy.hpp"
#include "modgap/rng.hpp"
#include "modgap/task_world.hpp"

namespace modgap::testing {

/// About 2.2k parameters.
inline PolicyConfig small_config() {
  PolicyConfig c;
  c.dim = 12;
  c.heads = 2;
  return c;
}

inline PolicyParams small_policy(std::uint64_t seed) {
  auto p = PolicyParams::random(small_config(), seed);
  // Larger output weights make the distributions far from uniform.
  for (auto& w : p.tensor("out_w")) w *= 3.0;
  return p;
}

inline double fd_relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

struct FdResult {
  double worst = 0.0;
  std::size_t worst_index = 0;
};

/// Central differences with step h on `n` random coordinates.
inline FdResult finite_difference_check(PolicyParams params, const std::vector<double>& analytic,
                                        const std::function<double(const PolicyParams&)>& loss, int n,
                                        std::uint64_t seed, double h = 1e-4) {
  Rng rng(seed);
  FdResult r;
  for (int i = 0; i < n; ++i) {
    const auto idx = static_cast<std::size_t>(rng.below(params.values.size()));
    const double orig = params.values[idx];
    params.values[idx] = orig + h;
    const double up = loss(params);
    params.values[idx] = orig - h;
    const double down = loss(params);
    params.values[idx] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double err = fd_relative_error(analytic[idx], numeric);
    if (err > r.worst) {
      r.worst = err;
      r.worst_index = idx;
    }
  }
  return r;
}

inline TaskInstance simple_instance() {
  Scene s;
  Fact a;
  a.var = 0;
  a.kind = Fact::Kind::Literal;
  a.literal = 3;
  Fact b;
  b.var = 1;
  b.kind = Fact::Kind::Relation;
  b.op = Op::Add;
  b.lhs = Operand::variable(0);
  b.rhs = Operand::literal(4);
  s.facts = {a, b};
  return make_instance("simple", s, 1);
}

}  // namespace modgap::testing
