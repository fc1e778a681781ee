// Copyright 2026 The modgap Authors
// SPDX-License-Identifier: Apache-2.0

#include "modgap/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace modgap {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get(const std::string& field) {
    if (pos_ + sizeof(T) > bytes_.size()) throw CheckpointError(field, "truncated file");
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string get_bytes(std::size_t n, const std::string& field) {
    if (pos_ + n > bytes_.size()) throw CheckpointError(field, "truncated file");
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const PolicyParams& params) {
  const auto layout = param_layout(params.config);
  if (params.values.size() != param_count(params.config)) {
    throw std::invalid_argument("parameter buffer does not match its config");
  }
  std::string out = "MGLB";
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, params.values.size());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(layout.size()));
  for (const auto& t : layout) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (auto dim : t.shape) put<std::uint64_t>(out, dim);
  }
  for (double v : params.values) put<double>(out, v);
  return out;
}

PolicyParams deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.get_bytes(4, "magic") != "MGLB") throw CheckpointError("magic", "expected \"MGLB\"");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("version", fmt::format("unsupported version {}", version));
  }
  const auto count = r.get<std::uint64_t>("param_count");
  const auto n_tensors = r.get<std::uint32_t>("tensor_count");
  if (n_tensors > 64) throw CheckpointError("tensor_count", fmt::format("implausible value {}", n_tensors));
  std::vector<TensorInfo> table;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    TensorInfo t;
    const auto len = r.get<std::uint32_t>("tensor_table");
    if (len > 256) throw CheckpointError("tensor_table", "implausible tensor name length");
    t.name = r.get_bytes(len, "tensor_table");
    const auto rank = r.get<std::uint32_t>("tensor_table");
    if (rank > 8) throw CheckpointError("tensor_table", fmt::format("tensor '{}' has implausible rank", t.name));
    for (std::uint32_t k = 0; k < rank; ++k) t.shape.push_back(r.get<std::uint64_t>("tensor_table"));
    table.push_back(std::move(t));
  }
  auto shape_of = [&](std::string_view name) -> const std::vector<std::size_t>& {
    for (const auto& t : table) {
      if (t.name == name) return t.shape;
    }
    throw CheckpointError("tensor_table", fmt::format("missing tensor '{}'", name));
  };
  PolicyConfig c;
  const auto& emb = shape_of("tok_emb");
  const auto& q = shape_of("attn_q");
  if (emb.size() != 2 || q.size() != 3) throw CheckpointError("tensor_table", "unexpected tensor rank");
  c.vocab_size = static_cast<int>(emb[0]);
  c.dim = static_cast<int>(emb[1]);
  c.heads = static_cast<int>(q[0]);
  c.eos = c.vocab_size - 1;
  c.context_limit = PolicyConfig{}.context_limit;
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw CheckpointError("tensor_table", e.what());
  }
  const auto expected = param_layout(c);
  if (expected.size() != table.size()) throw CheckpointError("tensor_table", "unexpected tensor count");
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].name != expected[i].name || table[i].shape != expected[i].shape) {
      throw CheckpointError("tensor_table", fmt::format("tensor {} ('{}') does not match the layout", i, table[i].name));
    }
  }
  if (count != param_count(c)) {
    throw CheckpointError("param_count", fmt::format("header says {}, tensor table implies {}", count, param_count(c)));
  }
  if (r.remaining() != count * sizeof(double)) {
    throw CheckpointError("values", fmt::format("expected {} bytes of values, found {}", count * sizeof(double),
                                                r.remaining()));
  }
  PolicyParams p = PolicyParams::zeros(c);
  for (auto& v : p.values) {
    v = r.get<double>("values");
    if (!std::isfinite(v)) throw CheckpointError("values", "non-finite parameter");
  }
  return p;
}

void save_checkpoint(const std::filesystem::path& path, const PolicyParams& params) {
  const auto bytes = serialize_checkpoint(params);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp));
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(fmt::format("write failed: {}", tmp));
  }
  std::filesystem::rename(tmp, path);
}

PolicyParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("file", fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace modgap
