// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>

namespace modgap {

/// SplitMix64 finalizer. Used to derive independent seed streams.
std::uint64_t mix64(std::uint64_t x);

/// Folds a list of integers into one seed; order matters.
std::uint64_t derive_seed(std::initializer_list<std::uint64_t> parts);

// xoshiro256** with explicit, platform-independent uniform/normal draws. The
// std distributions are implementation-defined, so they are not used where
// results must be reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();

 private:
  std::uint64_t s_[4];
};

}  // namespace modgap
