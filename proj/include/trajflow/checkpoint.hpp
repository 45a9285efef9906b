// Copyright 2026 The trajflow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Binary checkpoint container. All integers and floats little-endian.
//
//   magic        8 bytes  "TRJFLOW\0"
//   version      u32
//   metadata     u32 count, then (u32 len, key bytes, u32 len, value bytes)*
//   config       u64 dim, n_layers, k_bins, cond_dim, conditioner_hidden,
//                conditioner_depth; f64 support_b; f64 alpha
//   permutations u64 count, then (u64 len, u64 index * len)*
//   parameters   u64 count, then (u32 name len, name, u64 rows, u64 cols,
//                f64 * rows * cols in column-major order)*

#ifndef TRAJFLOW__CHECKPOINT_HPP_
#define TRAJFLOW__CHECKPOINT_HPP_

#include "trajflow/error.hpp"
#include "trajflow/flow.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

namespace trajflow
{

inline constexpr char kCheckpointMagic[8] = {'T', 'R', 'J', 'F', 'L', 'O', 'W', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail
{

class ByteWriter
{
public:
  template <class T>
  void put(T v)
  {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
    }
  }

  void put_string(std::string_view s)
  {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }

  void put_raw(const char * data, std::size_t n) { buf_.append(data, n); }

  std::string take() { return std::move(buf_); }

private:
  std::string buf_;
};

class ByteReader
{
public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <class T>
  T get()
  {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      bits |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }

  std::string get_string()
  {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  std::string_view get_raw(std::size_t n)
  {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == data_.size(); }

private:
  void need(std::size_t n) const
  {
    if (data_.size() - pos_ < n) {
      throw FormatError("checkpoint truncated");
    }
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize_checkpoint(const FlowModel & model)
{
  detail::ByteWriter w;
  w.put_raw(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(model.metadata.size()));
  for (const auto & [k, v] : model.metadata) {
    w.put_string(k);
    w.put_string(v);
  }
  const FlowConfig & cfg = model.config;
  for (std::size_t v :
    {cfg.dim, cfg.n_layers, cfg.k_bins, cfg.cond_dim, cfg.conditioner_hidden,
      cfg.conditioner_depth})
  {
    w.put(static_cast<std::uint64_t>(v));
  }
  w.put(cfg.support_b);
  w.put(model.alpha);
  w.put(static_cast<std::uint64_t>(model.layers.size()));
  for (const auto & layer : model.layers) {
    w.put(static_cast<std::uint64_t>(layer.permutation.size()));
    for (std::size_t p : layer.permutation) {
      w.put(static_cast<std::uint64_t>(p));
    }
  }
  const auto params = nn::params_of(model);
  w.put(static_cast<std::uint64_t>(params.size()));
  for (const auto & p : params) {
    w.put_string(p.name);
    w.put(static_cast<std::uint64_t>(p.rows));
    w.put(static_cast<std::uint64_t>(p.cols));
    for (double v : p.values()) {
      w.put(v);
    }
  }
  return w.take();
}

/// Parses a checkpoint. When `expected` is given, a differing stored config is an error.
inline FlowModel deserialize_checkpoint(
  std::string_view bytes, const std::optional<FlowConfig> & expected = std::nullopt)
{
  detail::ByteReader r(bytes);
  const auto magic = r.get_raw(sizeof(kCheckpointMagic));
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw FormatError("not a trajflow checkpoint (bad magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  std::map<std::string, std::string> metadata;
  const auto n_meta = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_meta; ++i) {
    auto k = r.get_string();
    metadata[std::move(k)] = r.get_string();
  }
  FlowConfig cfg;
  cfg.dim = r.get<std::uint64_t>();
  cfg.n_layers = r.get<std::uint64_t>();
  cfg.k_bins = r.get<std::uint64_t>();
  cfg.cond_dim = r.get<std::uint64_t>();
  cfg.conditioner_hidden = r.get<std::uint64_t>();
  cfg.conditioner_depth = r.get<std::uint64_t>();
  cfg.support_b = r.get<double>();
  const double alpha = r.get<double>();
  if (expected && !(*expected == cfg)) {
    throw ConfigError("checkpoint flow configuration does not match the requested one");
  }
  try {
    cfg.validate();
  } catch (const InvalidInputError & e) {
    throw FormatError(std::string("checkpoint holds an invalid configuration: ") + e.what());
  }
  if (cfg.dim > (1u << 20) || cfg.n_layers > (1u << 16) || cfg.k_bins > (1u << 16) ||
    cfg.cond_dim > (1u << 16) || cfg.conditioner_hidden > (1u << 16) ||
    cfg.conditioner_depth > (1u << 10))
  {
    throw FormatError("checkpoint configuration is implausibly large");
  }

  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw FormatError("checkpoint alpha must be positive");
  }
  FlowModel model = FlowModel::create(cfg, 0, alpha);
  model.metadata = std::move(metadata);

  const auto n_layers = r.get<std::uint64_t>();
  if (n_layers != cfg.n_layers) {
    throw FormatError("checkpoint permutation count does not match layer count");
  }
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto len = r.get<std::uint64_t>();
    const bool last = l + 1 == n_layers;
    if (len != (last ? 0 : cfg.dim)) {
      throw FormatError("checkpoint permutation " + std::to_string(l) + " has wrong length");
    }
    Permutation perm(len);
    for (auto & p : perm) {
      p = r.get<std::uint64_t>();
    }
    if (!last && !is_permutation_of_range(perm, cfg.dim)) {
      throw FormatError("checkpoint permutation " + std::to_string(l) + " is not a bijection");
    }
    model.layers[l].permutation = std::move(perm);
  }

  auto params = nn::params_of(model);
  const auto n_params = r.get<std::uint64_t>();
  if (n_params != params.size()) {
    throw FormatError("checkpoint parameter count does not match the configuration");
  }
  for (auto & p : params) {
    const auto name = r.get_string();
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (name != p.name || rows != static_cast<std::uint64_t>(p.rows) ||
      cols != static_cast<std::uint64_t>(p.cols))
    {
      throw FormatError("checkpoint parameter '" + name + "' does not match expected '" + p.name + "'");
    }
    for (double & v : p.values()) {
      v = r.get<double>();
    }
  }
  if (!r.done()) {
    throw FormatError("trailing bytes after checkpoint payload");
  }
  return model;
}

inline void save_checkpoint(const FlowModel & model, const std::string & path)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot open '" + path + "' for writing");
  }
  const std::string bytes = serialize_checkpoint(model);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DataError("failed writing checkpoint '" + path + "'");
  }
}

inline FlowModel load_checkpoint(
  const std::string & path, const std::optional<FlowConfig> & expected = std::nullopt)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open checkpoint '" + path + "'");
  }
  const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize_checkpoint(bytes, expected);
}

}  // namespace trajflow

#endif  // TRAJFLOW__CHECKPOINT_HPP_
