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

#ifndef TRAJFLOW__CONFIG_HPP_
#define TRAJFLOW__CONFIG_HPP_

#include "trajflow/data.hpp"
#include "trajflow/error.hpp"
#include "trajflow/evaluation.hpp"
#include "trajflow/flow.hpp"
#include "trajflow/format.hpp"
#include "trajflow/training.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>

namespace trajflow
{

/// Everything a train/evaluate run needs, read from an INI file.
struct RunConfig
{
  // [data]
  std::string train_path;
  std::string val_path;   // empty: split off validation_fraction of the training windows
  std::string test_path;
  DatasetFormat format = DatasetFormat::kEthUcyText;
  std::optional<double> scale;  // unset: format default
  WindowSpec window;

  // [flow]
  std::size_t n_layers = 10;
  std::size_t k_bins = 8;
  double support_b = 15.0;
  std::size_t conditioner_hidden = 32;
  std::size_t conditioner_depth = 5;

  // [noise]
  bool noise_enabled = true;
  NoiseConfig noise;

  // [augment]
  bool augment_enabled = true;
  AugmentConfig augment;

  // [train]
  TrainConfig train;

  // [eval]
  EvaluationOptions eval;

  // [output]
  std::string output_dir = "run";

  FlowConfig flow_config() const
  {
    FlowConfig f;
    f.dim = 2 * window.t_pred;
    f.n_layers = n_layers;
    f.k_bins = k_bins;
    f.support_b = support_b;
    f.cond_dim = static_cast<std::size_t>(kEncoderHidden);
    f.conditioner_hidden = conditioner_hidden;
    f.conditioner_depth = conditioner_depth;
    return f;
  }

  NoiseConfig effective_noise() const
  {
    if (noise_enabled) {
      return noise;
    }
    NoiseConfig off = NoiseConfig::disabled();
    off.alpha = noise.alpha;
    return off;
  }

  std::optional<AugmentConfig> effective_augment() const
  {
    return augment_enabled ? std::optional<AugmentConfig>(augment) : std::nullopt;
  }
};

namespace detail
{

inline std::string selection_name(OracleSelection s)
{
  return s == OracleSelection::kPerStep ? "per-step" : "whole-track";
}

inline std::string join_doubles(const std::vector<double> & v)
{
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? "," : "") + format_double(v[i]);
  }
  return out;
}

// One named key: how to print it and how to set it from text.
struct ConfigKey
{
  std::string section;
  std::string name;
  std::function<std::string(const RunConfig &)> get;
  std::function<void(RunConfig &, const std::string &)> set;
};

template <class T>
T parse_number(const std::string & text, const std::string & key)
{
  T v{};
  const char * first = text.data();
  const char * last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) {
    throw ConfigError("invalid value '" + text + "' for key", key);
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) {
      throw ConfigError("non-finite value for key", key);
    }
  }
  return v;
}

inline bool parse_bool(const std::string & text, const std::string & key)
{
  if (text == "true" || text == "1" || text == "yes") {
    return true;
  }
  if (text == "false" || text == "0" || text == "no") {
    return false;
  }
  throw ConfigError("invalid boolean '" + text + "' for key", key);
}

inline std::vector<double> parse_double_list(const std::string & text, const std::string & key)
{
  std::vector<double> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) {
      throw ConfigError("empty list entry for key", key);
    }
    out.push_back(parse_number<double>(item.substr(b, e - b + 1), key));
  }
  return out;
}

template <class Member>
ConfigKey size_key(std::string section, std::string name, Member member)
{
  const std::string key = section + "." + name;
  return {
    std::move(section), std::move(name),
    [member](const RunConfig & c) { return std::to_string(std::invoke(member, c)); },
    [member, key](RunConfig & c, const std::string & v) {
      std::invoke(member, c) = parse_number<std::size_t>(v, key);
    }};
}

template <class Member>
ConfigKey real_key(std::string section, std::string name, Member member)
{
  const std::string key = section + "." + name;
  return {
    std::move(section), std::move(name),
    [member](const RunConfig & c) { return format_double(std::invoke(member, c)); },
    [member, key](RunConfig & c, const std::string & v) {
      std::invoke(member, c) = parse_number<double>(v, key);
    }};
}

template <class Member>
ConfigKey bool_key(std::string section, std::string name, Member member)
{
  const std::string key = section + "." + name;
  return {
    std::move(section), std::move(name),
    [member](const RunConfig & c) { return std::string(std::invoke(member, c) ? "true" : "false"); },
    [member, key](RunConfig & c, const std::string & v) { std::invoke(member, c) = parse_bool(v, key); }};
}

template <class Member>
ConfigKey string_key(std::string section, std::string name, Member member)
{
  return {
    std::move(section), std::move(name),
    [member](const RunConfig & c) { return std::invoke(member, c); },
    [member](RunConfig & c, const std::string & v) { std::invoke(member, c) = v; }};
}

inline const std::vector<ConfigKey> & config_keys()
{
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    k.push_back(string_key("data", "train", [](auto & c) -> auto & { return c.train_path; }));
    k.push_back(string_key("data", "val", [](auto & c) -> auto & { return c.val_path; }));
    k.push_back(string_key("data", "test", [](auto & c) -> auto & { return c.test_path; }));
    k.push_back({
      "data", "format", [](const RunConfig & c) { return std::string(to_string(c.format)); },
      [](RunConfig & c, const std::string & v) {
        try {
          c.format = parse_dataset_format(v);
        } catch (const InvalidInputError &) {
          throw ConfigError("unknown dataset format '" + v + "' for key", "data.format");
        }
      }});
    k.push_back({
      "data", "scale",
      [](const RunConfig & c) { return c.scale ? format_double(*c.scale) : std::string("default"); },
      [](RunConfig & c, const std::string & v) {
        if (v == "default") {
          c.scale.reset();
        } else {
          c.scale = parse_number<double>(v, "data.scale");
        }
      }});
    k.push_back(size_key("data", "t_obs", [](auto & c) -> auto & { return c.window.t_obs; }));
    k.push_back(size_key("data", "t_pred", [](auto & c) -> auto & { return c.window.t_pred; }));
    k.push_back(size_key("data", "step", [](auto & c) -> auto & { return c.window.step; }));
    k.push_back(size_key("data", "min_future", [](auto & c) -> auto & { return c.window.min_future; }));

    k.push_back(size_key("flow", "n_layers", [](auto & c) -> auto & { return c.n_layers; }));
    k.push_back(size_key("flow", "k_bins", [](auto & c) -> auto & { return c.k_bins; }));
    k.push_back(real_key("flow", "support_b", [](auto & c) -> auto & { return c.support_b; }));
    k.push_back(size_key("flow", "conditioner_hidden", [](auto & c) -> auto & { return c.conditioner_hidden; }));
    k.push_back(size_key("flow", "conditioner_depth", [](auto & c) -> auto & { return c.conditioner_depth; }));

    k.push_back(bool_key("noise", "enabled", [](auto & c) -> auto & { return c.noise_enabled; }));
    k.push_back(real_key("noise", "alpha", [](auto & c) -> auto & { return c.noise.alpha; }));
    k.push_back(real_key("noise", "beta", [](auto & c) -> auto & { return c.noise.beta; }));
    k.push_back(real_key("noise", "gamma", [](auto & c) -> auto & { return c.noise.gamma; }));
    k.push_back(real_key("noise", "zero_epsilon", [](auto & c) -> auto & { return c.noise.zero_epsilon; }));

    k.push_back(bool_key("augment", "enabled", [](auto & c) -> auto & { return c.augment_enabled; }));
    k.push_back(real_key("augment", "mu", [](auto & c) -> auto & { return c.augment.mu; }));
    k.push_back(real_key("augment", "sigma", [](auto & c) -> auto & { return c.augment.sigma; }));
    k.push_back(real_key("augment", "s_min", [](auto & c) -> auto & { return c.augment.s_min; }));
    k.push_back(real_key("augment", "s_max", [](auto & c) -> auto & { return c.augment.s_max; }));

    k.push_back(real_key("train", "learning_rate", [](auto & c) -> auto & { return c.train.learning_rate; }));
    k.push_back(size_key("train", "batch_size", [](auto & c) -> auto & { return c.train.batch_size; }));
    k.push_back(size_key("train", "epochs", [](auto & c) -> auto & { return c.train.epochs; }));
    k.push_back({
      "train", "seed", [](const RunConfig & c) { return std::to_string(c.train.seed); },
      [](RunConfig & c, const std::string & v) { c.train.seed = parse_number<std::uint64_t>(v, "train.seed"); }});
    k.push_back(real_key("train", "adam_beta1", [](auto & c) -> auto & { return c.train.adam_beta1; }));
    k.push_back(real_key("train", "adam_beta2", [](auto & c) -> auto & { return c.train.adam_beta2; }));
    k.push_back(real_key("train", "adam_epsilon", [](auto & c) -> auto & { return c.train.adam_epsilon; }));
    k.push_back(real_key("train", "validation_fraction", [](auto & c) -> auto & { return c.train.validation_fraction; }));
    k.push_back(real_key("train", "grad_clip", [](auto & c) -> auto & { return c.train.grad_clip; }));
    k.push_back(bool_key("train", "validation_noise", [](auto & c) -> auto & { return c.train.validation_noise; }));

    k.push_back(size_key("eval", "samples", [](auto & c) -> auto & { return c.eval.n_samples; }));
    k.push_back(size_key("eval", "candidates", [](auto & c) -> auto & { return c.eval.n_candidates; }));
    k.push_back(real_key("eval", "oracle_fraction", [](auto & c) -> auto & { return c.eval.oracle_fraction; }));
    k.push_back(real_key("eval", "seconds_per_step", [](auto & c) -> auto & { return c.eval.seconds_per_step; }));
    k.push_back({
      "eval", "oracle_seconds", [](const RunConfig & c) { return join_doubles(c.eval.oracle_seconds); },
      [](RunConfig & c, const std::string & v) { c.eval.oracle_seconds = parse_double_list(v, "eval.oracle_seconds"); }});
    k.push_back({
      "eval", "oracle_selection", [](const RunConfig & c) { return selection_name(c.eval.oracle_selection); },
      [](RunConfig & c, const std::string & v) {
        if (v == "per-step") {
          c.eval.oracle_selection = OracleSelection::kPerStep;
        } else if (v == "whole-track") {
          c.eval.oracle_selection = OracleSelection::kWholeTrack;
        } else {
          throw ConfigError("invalid value '" + v + "' for key", "eval.oracle_selection");
        }
      }});

    k.push_back(string_key("output", "dir", [](auto & c) -> auto & { return c.output_dir; }));
    return k;
  }();
  return keys;
}

}  // namespace detail

/// Checks cross-field constraints; throws ConfigError naming the first bad key.
inline void validate(const RunConfig & c)
{
  auto require = [](bool ok, const char * key, const std::string & what) {
    if (!ok) {
      throw ConfigError(what + "; key", key);
    }
  };
  require(c.window.t_obs >= 2, "data.t_obs", "must be at least 2");
  require(c.window.t_pred >= 1, "data.t_pred", "must be at least 1");
  require(c.window.step >= 1, "data.step", "must be at least 1");
  require(!c.scale || *c.scale > 0.0, "data.scale", "must be positive");
  require(c.n_layers >= 1, "flow.n_layers", "must be at least 1");
  require(c.k_bins >= 2, "flow.k_bins", "must be at least 2");
  require(c.support_b > 0.0, "flow.support_b", "must be positive");
  require(c.conditioner_hidden >= 1, "flow.conditioner_hidden", "must be at least 1");
  require(c.noise.alpha > 0.0, "noise.alpha", "must be positive");
  require(c.noise.beta >= 0.0, "noise.beta", "must be non-negative");
  require(c.noise.gamma >= 0.0, "noise.gamma", "must be non-negative");
  require(c.noise.zero_epsilon >= 0.0, "noise.zero_epsilon", "must be non-negative");
  require(c.augment.sigma >= 0.0, "augment.sigma", "must be non-negative");
  require(
    c.augment.s_min <= c.augment.mu && c.augment.mu <= c.augment.s_max, "augment.mu",
    "must lie in [s_min, s_max]");
  require(c.augment.s_min > 0.0, "augment.s_min", "must be positive");
  require(c.train.learning_rate >= 0.0, "train.learning_rate", "must be non-negative");
  require(c.train.batch_size >= 1, "train.batch_size", "must be at least 1");
  require(
    c.train.validation_fraction >= 0.0 && c.train.validation_fraction < 1.0, "train.validation_fraction",
    "must be in [0, 1)");
  require(c.train.grad_clip >= 0.0, "train.grad_clip", "must be non-negative");
  require(c.eval.n_samples >= 1, "eval.samples", "must be at least 1");
  require(
    c.eval.n_candidates == 0 || c.eval.n_candidates >= c.eval.n_samples, "eval.candidates",
    "must be 0 or at least eval.samples");
  require(
    c.eval.oracle_fraction > 0.0 && c.eval.oracle_fraction <= 1.0, "eval.oracle_fraction", "must be in (0, 1]");
  require(c.eval.seconds_per_step > 0.0, "eval.seconds_per_step", "must be positive");
}

/// Canonical INI text; parse_config(write_config(c)) == c field for field.
inline std::string write_config(const RunConfig & c)
{
  std::ostringstream out;
  std::string section;
  for (const auto & key : detail::config_keys()) {
    if (key.section != section) {
      out << (section.empty() ? "" : "\n") << '[' << key.section << "]\n";
      section = key.section;
    }
    out << key.name << " = " << key.get(c) << '\n';
  }
  return out.str();
}

/// Short stable digest of the canonical config text.
inline std::string config_hash(const RunConfig & c) { return fnv1a_hex(write_config(c)); }

/// Parses INI text. Keys missing from the text keep their defaults; unknown
/// sections or keys are errors naming the key.
inline RunConfig parse_config(std::istream & in)
{
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error & e) {
    throw ConfigError("line " + std::to_string(e.line()) + ": " + e.message());
  }
  std::map<std::string, const detail::ConfigKey *> lookup;
  for (const auto & key : detail::config_keys()) {
    lookup[key.section + "." + key.name] = &key;
  }
  RunConfig c;
  for (const auto & [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("entry outside any section", section);
    }
    const bool known = std::any_of(lookup.begin(), lookup.end(), [&](const auto & kv) {
      return kv.second->section == section;
    });
    if (!known) {
      throw ConfigError("unknown config section", section);
    }
    for (const auto & [name, value] : body) {
      const std::string full = section + "." + name;
      const auto it = lookup.find(full);
      if (it == lookup.end()) {
        throw ConfigError("unknown config key", full);
      }
      it->second->set(c, value.get_value<std::string>());
    }
  }
  validate(c);
  return c;
}

inline RunConfig parse_config(const std::string & text)
{
  std::istringstream in(text);
  return parse_config(in);
}

/// Loads a config file; relative data paths and the output directory are
/// resolved against the file's directory.
inline RunConfig load_config(const std::string & path)
{
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file '" + path + "'", "");
  }
  RunConfig c = parse_config(in);
  const auto base = std::filesystem::absolute(path).parent_path();
  for (std::string * p : {&c.train_path, &c.val_path, &c.test_path, &c.output_dir}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) {
      *p = (base / *p).lexically_normal().string();
    }
  }
  return c;
}

}  // namespace trajflow

#endif  // TRAJFLOW__CONFIG_HPP_
