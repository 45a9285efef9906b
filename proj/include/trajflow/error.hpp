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

#ifndef TRAJFLOW__ERROR_HPP_
#define TRAJFLOW__ERROR_HPP_

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace trajflow
{

enum class ErrorKind {
  kInvalidInput,
  kNumeric,
  kParse,
  kFormat,
  kConfig,
  kData,
};

inline const char * to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::kInvalidInput:
      return "invalid input";
    case ErrorKind::kNumeric:
      return "numeric error";
    case ErrorKind::kParse:
      return "parse error";
    case ErrorKind::kFormat:
      return "format error";
    case ErrorKind::kConfig:
      return "config error";
    case ErrorKind::kData:
      return "data error";
  }
  return "error";
}

/// Base of every exception thrown by the library.
class Error : public std::runtime_error
{
public:
  Error(ErrorKind kind, const std::string & what)
  : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind)
  {
  }

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

class InvalidInputError : public Error
{
public:
  explicit InvalidInputError(const std::string & what) : Error(ErrorKind::kInvalidInput, what) {}
};

/// Non-finite or otherwise impossible intermediate value. Carries the flow layer
/// and/or batch sample where it surfaced, when known.
class NumericError : public Error
{
public:
  explicit NumericError(
    const std::string & what, std::optional<std::size_t> layer = std::nullopt,
    std::optional<std::size_t> sample = std::nullopt)
  : Error(ErrorKind::kNumeric, decorate(what, layer, sample)), layer_(layer), sample_(sample)
  {
  }

  std::optional<std::size_t> layer() const noexcept { return layer_; }
  std::optional<std::size_t> sample() const noexcept { return sample_; }

private:
  static std::string decorate(
    const std::string & what, std::optional<std::size_t> layer,
    std::optional<std::size_t> sample)
  {
    std::string out = what;
    if (layer) {
      out += " (layer " + std::to_string(*layer) + ")";
    }
    if (sample) {
      out += " (sample " + std::to_string(*sample) + ")";
    }
    return out;
  }

  std::optional<std::size_t> layer_;
  std::optional<std::size_t> sample_;
};

class ParseError : public Error
{
public:
  ParseError(const std::string & what, std::size_t line)
  : Error(ErrorKind::kParse, "line " + std::to_string(line) + ": " + what), line_(line)
  {
  }

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

class FormatError : public Error
{
public:
  explicit FormatError(const std::string & what) : Error(ErrorKind::kFormat, what) {}
};

class ConfigError : public Error
{
public:
  ConfigError(const std::string & what, std::string key = {})
  : Error(ErrorKind::kConfig, key.empty() ? what : what + " '" + key + "'"), key_(std::move(key))
  {
  }

  const std::string & key() const noexcept { return key_; }

private:
  std::string key_;
};

class DataError : public Error
{
public:
  explicit DataError(const std::string & what) : Error(ErrorKind::kData, what) {}
};

}  // namespace trajflow

#endif  // TRAJFLOW__ERROR_HPP_
