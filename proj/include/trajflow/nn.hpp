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

#ifndef TRAJFLOW__NN_HPP_
#define TRAJFLOW__NN_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace trajflow::nn
{

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Named view of one parameter array. Storage is column-major.
template <class T>
struct BasicParamRef
{
  std::string name;
  T * data;
  Index rows;
  Index cols;

  std::size_t size() const { return static_cast<std::size_t>(rows * cols); }
  std::span<T> values() const { return {data, size()}; }
};

using ParamRef = BasicParamRef<double>;
using ConstParamRef = BasicParamRef<const double>;

template <class Mat>
auto make_param_ref(std::string name, Mat & m)
{
  using T = std::remove_pointer_t<decltype(m.data())>;
  return BasicParamRef<T>{std::move(name), m.data(), m.rows(), m.cols()};
}

/// Parameters of any module that exposes collect(prefix, out).
template <class Module>
std::vector<ParamRef> params_of(Module & m, const std::string & prefix = {})
{
  std::vector<ParamRef> out;
  m.collect(prefix, out);
  return out;
}

template <class Module>
std::vector<ConstParamRef> params_of(const Module & m, const std::string & prefix = {})
{
  std::vector<ConstParamRef> out;
  m.collect(prefix, out);
  return out;
}

/// Same shapes, all parameters zero. Used as a gradient accumulator.
template <class Module>
Module zeros_like(const Module & m)
{
  Module z = m;
  for (auto & p : params_of(z)) {
    std::fill(p.values().begin(), p.values().end(), 0.0);
  }
  return z;
}

inline double elu(double v) { return v > 0.0 ? v : std::expm1(v); }
inline double elu_grad(double v) { return v > 0.0 ? 1.0 : std::exp(v); }

inline VectorXd elu(const VectorXd & v) { return v.unaryExpr([](double x) { return elu(x); }); }

inline double sigmoid(double v)
{
  if (v >= 0.0) {
    return 1.0 / (1.0 + std::exp(-v));
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

struct Dense
{
  MatrixXd weight;
  VectorXd bias;

  Dense() = default;
  Dense(Index in, Index out) : weight(MatrixXd::Zero(out, in)), bias(VectorXd::Zero(out)) {}

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }

  VectorXd forward(const VectorXd & x) const { return weight * x + bias; }

  /// Accumulates parameter gradients into grads and returns d(loss)/d(x).
  VectorXd backward(const VectorXd & x, const VectorXd & grad_out, Dense & grads) const
  {
    grads.weight.noalias() += grad_out * x.transpose();
    grads.bias += grad_out;
    return weight.transpose() * grad_out;
  }

  /// Uniform in +-1/sqrt(fan_in), scaled by gain.
  void init_uniform(Rng & rng, double gain = 1.0)
  {
    const double bound = gain / std::sqrt(static_cast<double>(std::max<Index>(1, in_dim())));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Index i = 0; i < weight.size(); ++i) {
      weight.data()[i] = dist(rng);
    }
    for (Index i = 0; i < bias.size(); ++i) {
      bias[i] = dist(rng);
    }
  }

  template <class Ref>
  void collect(const std::string & prefix, std::vector<Ref> & out)
  {
    out.push_back(make_param_ref(prefix + "weight", weight));
    out.push_back(make_param_ref(prefix + "bias", bias));
  }

  template <class Ref>
  void collect(const std::string & prefix, std::vector<Ref> & out) const
  {
    out.push_back(make_param_ref(prefix + "weight", weight));
    out.push_back(make_param_ref(prefix + "bias", bias));
  }
};

/// Feed-forward network: `depth` hidden layers of width `hidden` with ELU, linear output.
struct Mlp
{
  std::vector<Dense> layers;

  struct Cache
  {
    std::vector<VectorXd> inputs;
    std::vector<VectorXd> pre_activations;
  };

  Mlp() = default;
  Mlp(Index in, Index hidden, std::size_t depth, Index out)
  {
    Index width = in;
    for (std::size_t i = 0; i < depth; ++i) {
      layers.emplace_back(width, hidden);
      width = hidden;
    }
    layers.emplace_back(width, out);
  }

  Index in_dim() const { return layers.front().in_dim(); }
  Index out_dim() const { return layers.back().out_dim(); }

  VectorXd forward(const VectorXd & x, Cache * cache = nullptr) const
  {
    if (cache) {
      cache->inputs.clear();
      cache->pre_activations.clear();
    }
    VectorXd h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      VectorXd pre = layers[i].forward(h);
      const bool last = i + 1 == layers.size();
      if (cache) {
        cache->inputs.push_back(std::move(h));
        cache->pre_activations.push_back(pre);
      }
      h = last ? std::move(pre) : elu(pre);
    }
    return h;
  }

  VectorXd backward(const Cache & cache, const VectorXd & grad_out, Mlp & grads) const
  {
    VectorXd g = grad_out;
    for (std::size_t i = layers.size(); i-- > 0;) {
      if (i + 1 != layers.size()) {
        const VectorXd & pre = cache.pre_activations[i];
        for (Index j = 0; j < g.size(); ++j) {
          g[j] *= elu_grad(pre[j]);
        }
      }
      g = layers[i].backward(cache.inputs[i], g, grads.layers[i]);
    }
    return g;
  }

  void init_uniform(Rng & rng, double output_gain = 1.0)
  {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].init_uniform(rng, i + 1 == layers.size() ? output_gain : 1.0);
    }
  }

  template <class Ref>
  void collect(const std::string & prefix, std::vector<Ref> & out)
  {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].collect(prefix + std::to_string(i) + ".", out);
    }
  }

  template <class Ref>
  void collect(const std::string & prefix, std::vector<Ref> & out) const
  {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      layers[i].collect(prefix + std::to_string(i) + ".", out);
    }
  }
};

}  // namespace trajflow::nn

#endif  // TRAJFLOW__NN_HPP_
