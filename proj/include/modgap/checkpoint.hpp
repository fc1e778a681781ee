// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "modgap/policy.hpp"

namespace modgap {

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(const std::string& field, const std::string& message)
      : std::runtime_error("checkpoint field '" + field + "': " + message), field_(field) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Binary layout: "MGLB", u32 version, u64 parameter count, u32 tensor count,
/// then per tensor {u32 name length, name bytes, u32 rank, u64 dims...}, then
/// all values as little-endian f64 in table order.
std::string serialize_checkpoint(const PolicyParams& params);
PolicyParams deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params);
PolicyParams load_checkpoint(const std::filesystem::path& path);

}  // namespace modgap
