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

// Conditional spline coupling flow.
//
// Forward (sampling) direction for one module:
//   x[0:m]  = u[0:m]                        m = floor(dim / 2)
//   theta   = conditioner(u[0:m] ++ c)
//   x[m+i]  = rqs(u[m+i]; theta_i)
// followed by a fixed permutation on every module except the last. The base
// distribution is a standard normal, so
//   log p(z | c) = log N(f^-1(z); 0, I) + sum of inverse log-determinants.

#ifndef TRAJFLOW__FLOW_HPP_
#define TRAJFLOW__FLOW_HPP_

#include "trajflow/encoder.hpp"
#include "trajflow/error.hpp"
#include "trajflow/nn.hpp"
#include "trajflow/spline.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace trajflow
{

using Eigen::VectorXd;
using Permutation = std::vector<std::size_t>;

struct FlowConfig
{
  std::size_t dim = 24;
  std::size_t n_layers = 10;
  std::size_t k_bins = 8;
  double support_b = 15.0;
  std::size_t cond_dim = 16;
  std::size_t conditioner_hidden = 32;
  std::size_t conditioner_depth = 5;

  std::size_t identity_dim() const { return dim / 2; }
  std::size_t transformed_dim() const { return dim - dim / 2; }
  std::size_t params_per_element() const { return spline::raw_param_count(k_bins); }
  std::size_t conditioner_input() const { return identity_dim() + cond_dim; }
  std::size_t conditioner_output() const { return transformed_dim() * params_per_element(); }

  void validate() const
  {
    if (dim < 2 || dim % 2 != 0) {
      throw InvalidInputError("flow dimension must be even and at least 2");
    }
    if (n_layers < 1) {
      throw InvalidInputError("flow needs at least one layer");
    }
    if (k_bins < 2) {
      throw InvalidInputError("spline needs at least 2 bins");
    }
    if (!(support_b > 0.0) || !std::isfinite(support_b)) {
      throw InvalidInputError("spline support must be positive");
    }
    if (cond_dim < 1 || conditioner_hidden < 1) {
      throw InvalidInputError("conditioning and hidden widths must be positive");
    }
  }

  bool operator==(const FlowConfig &) const = default;
};

struct CouplingLayer
{
  nn::Mlp conditioner;
  Permutation permutation;  // empty on the last module

  template <class Ref>
  void collect(const std::string & prefix, std::vector<Ref> & out)
  {
    conditioner.collect(prefix + "conditioner.", out);
  }

  template <class Ref>
  void collect(const std::string & prefix, std::vector<Ref> & out) const
  {
    conditioner.collect(prefix + "conditioner.", out);
  }
};

struct InitOptions
{
  /// Gain of the conditioner output layers. Zero starts the flow at the identity.
  double output_gain = 0.0;
  bool identity_permutations = false;
};

/// Random permutation that moves the transformed half into the identity half
/// and back, shuffling within each half, so every coordinate is transformed in
/// every other module.
inline Permutation random_half_exchange(std::size_t dim, nn::Rng & rng)
{
  const std::size_t half = dim / 2;
  Permutation perm(dim);
  std::iota(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(half), half);
  std::iota(perm.begin() + static_cast<std::ptrdiff_t>(half), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(half), rng);
  std::shuffle(perm.begin() + static_cast<std::ptrdiff_t>(half), perm.end(), rng);
  return perm;
}

/// Motion encoder + coupling stack + the output scale used to undo noise-injection scaling.
struct FlowModel
{
  FlowConfig config;
  double alpha = 1.0;
  EncoderParams encoder;
  std::vector<CouplingLayer> layers;
  std::map<std::string, std::string> metadata;

  static FlowModel create(
    const FlowConfig & cfg, std::uint64_t seed, double alpha = 1.0, InitOptions opts = {})
  {
    cfg.validate();
    if (!(alpha > 0.0)) {
      throw InvalidInputError("alpha must be positive");
    }
    FlowModel m;
    m.config = cfg;
    m.alpha = alpha;
    nn::Rng rng(seed);
    m.encoder = EncoderParams(static_cast<Eigen::Index>(cfg.cond_dim), kEncoderLayers);
    m.encoder.init_uniform(rng);
    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
      CouplingLayer layer;
      layer.conditioner = nn::Mlp(
        static_cast<Eigen::Index>(cfg.conditioner_input()),
        static_cast<Eigen::Index>(cfg.conditioner_hidden), cfg.conditioner_depth,
        static_cast<Eigen::Index>(cfg.conditioner_output()));
      layer.conditioner.init_uniform(rng, opts.output_gain);
      if (l + 1 < cfg.n_layers) {
        layer.permutation.resize(cfg.dim);
        std::iota(layer.permutation.begin(), layer.permutation.end(), std::size_t{0});
        if (!opts.identity_permutations) {
          layer.permutation = random_half_exchange(cfg.dim, rng);
        }
      }
      m.layers.push_back(std::move(layer));
    }
    return m;
  }

  /// Zeroes every conditioner output layer and resets permutations, making the
  /// flow the identity map for any conditioning.
  void set_identity()
  {
    for (auto & layer : layers) {
      auto & out = layer.conditioner.layers.back();
      out.weight.setZero();
      out.bias.setZero();
      std::iota(layer.permutation.begin(), layer.permutation.end(), std::size_t{0});
    }
  }

  template <class Ref>
  void collect(const std::string & prefix, std::vector<Ref> & out)
  {
    collect_impl(*this, prefix, out);
  }

  template <class Ref>
  void collect(const std::string & prefix, std::vector<Ref> & out) const
  {
    collect_impl(*this, prefix, out);
  }

private:
  template <class Self, class Ref>
  static void collect_impl(Self & self, const std::string & prefix, std::vector<Ref> & out)
  {
    self.encoder.collect(prefix + "encoder.", out);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      self.layers[l].collect(prefix + "flow" + std::to_string(l) + ".", out);
    }
  }
};

// ---------------------------------------------------------------------------
// Permutations

inline bool is_permutation_of_range(const Permutation & perm, std::size_t n)
{
  if (perm.size() != n) {
    return false;
  }
  std::vector<bool> seen(n, false);
  for (std::size_t p : perm) {
    if (p >= n || seen[p]) {
      return false;
    }
    seen[p] = true;
  }
  return true;
}

/// out[i] = v[perm[i]]. Volume preserving: contributes 0 to the log-determinant.
inline VectorXd apply_permutation(const VectorXd & v, const Permutation & perm)
{
  if (perm.empty()) {
    return v;
  }
  VectorXd out(v.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = v[static_cast<Eigen::Index>(perm[i])];
  }
  return out;
}

inline VectorXd invert_permutation(const VectorXd & v, const Permutation & perm)
{
  if (perm.empty()) {
    return v;
  }
  VectorXd out(v.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    out[static_cast<Eigen::Index>(perm[i])] = v[static_cast<Eigen::Index>(i)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Coupling layers

struct CouplingResult
{
  VectorXd out;
  double logdet;
};

namespace detail
{

inline VectorXd conditioner_input(
  const VectorXd & v, std::size_t identity_dim, const VectorXd & c)
{
  VectorXd in(static_cast<Eigen::Index>(identity_dim) + c.size());
  in << v.head(static_cast<Eigen::Index>(identity_dim)), c;
  return in;
}

inline void check_inputs(const FlowConfig & cfg, const VectorXd & v, const VectorXd & c)
{
  if (static_cast<std::size_t>(v.size()) != cfg.dim) {
    throw InvalidInputError(
      "flow input has " + std::to_string(v.size()) + " entries, expected " +
      std::to_string(cfg.dim));
  }
  if (static_cast<std::size_t>(c.size()) != cfg.cond_dim) {
    throw InvalidInputError("conditioning vector has wrong length");
  }
}

inline std::span<const double> element_params(const VectorXd & theta, std::size_t i, std::size_t per)
{
  return {theta.data() + i * per, per};
}

template <bool kInverse>
CouplingResult coupling_apply(
  const VectorXd & v, const VectorXd & c, const CouplingLayer & layer, const FlowConfig & cfg,
  std::size_t layer_index)
{
  check_inputs(cfg, v, c);
  const std::size_t m = cfg.identity_dim();
  const std::size_t per = cfg.params_per_element();
  const VectorXd theta = layer.conditioner.forward(conditioner_input(v, m, c));
  if (!theta.allFinite()) {
    throw NumericError("non-finite conditioner output", layer_index);
  }
  CouplingResult r{v, 0.0};
  for (std::size_t i = 0; i < cfg.transformed_dim(); ++i) {
    const auto idx = static_cast<Eigen::Index>(m + i);
    const auto params = spline::build_spline_params(element_params(theta, i, per), cfg.k_bins, cfg.support_b);
    const auto s = kInverse ? spline::rqs_inverse(v[idx], params) : spline::rqs_forward(v[idx], params);
    r.out[idx] = s.value;
    r.logdet += s.log_abs_deriv;
  }
  if (!r.out.allFinite() || !std::isfinite(r.logdet)) {
    throw NumericError("non-finite coupling output", layer_index);
  }
  return r;
}

}  // namespace detail

inline CouplingResult coupling_forward(
  const VectorXd & u, const VectorXd & c, const CouplingLayer & layer, const FlowConfig & cfg,
  std::size_t layer_index = 0)
{
  return detail::coupling_apply<false>(u, c, layer, cfg, layer_index);
}

/// Exact inverse of coupling_forward; logdet is that of the inverse map.
inline CouplingResult coupling_inverse(
  const VectorXd & x, const VectorXd & c, const CouplingLayer & layer, const FlowConfig & cfg,
  std::size_t layer_index = 0)
{
  return detail::coupling_apply<true>(x, c, layer, cfg, layer_index);
}

// ---------------------------------------------------------------------------
// Whole stack

inline double standard_normal_log_density(const VectorXd & u)
{
  const double n = static_cast<double>(u.size());
  return -0.5 * u.squaredNorm() - 0.5 * n * std::log(2.0 * std::numbers::pi);
}

/// u -> z through all modules; returns the summed forward log-determinant.
inline CouplingResult push_forward(const FlowModel & model, const VectorXd & u, const VectorXd & c)
{
  CouplingResult acc{u, 0.0};
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto r = coupling_forward(acc.out, c, model.layers[l], model.config, l);
    acc.out = apply_permutation(r.out, model.layers[l].permutation);
    acc.logdet += r.logdet;
  }
  return acc;
}

/// z -> u through all modules in reverse; returns the summed inverse log-determinant.
inline CouplingResult pull_back(const FlowModel & model, const VectorXd & z, const VectorXd & c)
{
  CouplingResult acc{z, 0.0};
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const VectorXd x = invert_permutation(acc.out, model.layers[l].permutation);
    auto r = coupling_inverse(x, c, model.layers[l], model.config, l);
    acc.out = std::move(r.out);
    acc.logdet += r.logdet;
  }
  return acc;
}

struct FlowSample
{
  VectorXd z;
  double log_likelihood;
};

/// Draws base noise and pushes it through the flow. z is in the model's scaled
/// displacement space; divide by alpha before decoding.
inline std::vector<FlowSample> sample(
  const FlowModel & model, const VectorXd & c, std::size_t n_samples, nn::Rng & rng)
{
  std::vector<FlowSample> out;
  out.reserve(n_samples);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t s = 0; s < n_samples; ++s) {
    VectorXd u(static_cast<Eigen::Index>(model.config.dim));
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      u[i] = normal(rng);
    }
    auto r = push_forward(model, u, c);
    out.push_back({std::move(r.out), standard_normal_log_density(u) - r.logdet});
  }
  return out;
}

inline double log_prob(const VectorXd & z, const VectorXd & c, const FlowModel & model)
{
  if (!z.allFinite()) {
    throw InvalidInputError("log_prob input must be finite");
  }
  const auto r = pull_back(model, z, c);
  const double lp = standard_normal_log_density(r.out) + r.logdet;
  if (!std::isfinite(lp)) {
    throw NumericError("non-finite log-likelihood");
  }
  return lp;
}

// ---------------------------------------------------------------------------
// Reverse pass of log_prob w.r.t. flow parameters and the conditioning vector.

struct FlowTape
{
  struct Layer
  {
    VectorXd input;  // after undoing the permutation
    VectorXd theta;
    nn::Mlp::Cache mlp;
    std::vector<spline::SplineParams> splines;
  };
  std::vector<Layer> layers;
  VectorXd base;
};

inline double log_prob_recorded(
  const VectorXd & z, const VectorXd & c, const FlowModel & model, FlowTape & tape)
{
  const FlowConfig & cfg = model.config;
  detail::check_inputs(cfg, z, c);
  const std::size_t m = cfg.identity_dim();
  const std::size_t per = cfg.params_per_element();
  tape.layers.resize(model.layers.size());
  VectorXd cur = z;
  double logdet = 0.0;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    auto & rec = tape.layers[l];
    rec.input = invert_permutation(cur, model.layers[l].permutation);
    rec.theta = model.layers[l].conditioner.forward(detail::conditioner_input(rec.input, m, c), &rec.mlp);
    if (!rec.theta.allFinite()) {
      throw NumericError("non-finite conditioner output", l);
    }
    rec.splines.clear();
    cur = rec.input;
    for (std::size_t i = 0; i < cfg.transformed_dim(); ++i) {
      const auto idx = static_cast<Eigen::Index>(m + i);
      rec.splines.push_back(
        spline::build_spline_params(detail::element_params(rec.theta, i, per), cfg.k_bins, cfg.support_b));
      const auto s = spline::rqs_inverse(rec.input[idx], rec.splines.back());
      cur[idx] = s.value;
      logdet += s.log_abs_deriv;
    }
  }
  tape.base = cur;
  const double lp = standard_normal_log_density(cur) + logdet;
  if (!std::isfinite(lp)) {
    throw NumericError("non-finite log-likelihood");
  }
  return lp;
}

/// Accumulates weight * d(log_prob)/d(params) into grads (flow layers only) and
/// weight * d(log_prob)/dc into grad_c.
inline void log_prob_backward(
  const FlowModel & model, const FlowTape & tape, const VectorXd & c, double weight,
  FlowModel & grads, VectorXd & grad_c)
{
  const FlowConfig & cfg = model.config;
  const std::size_t m = cfg.identity_dim();
  const std::size_t per = cfg.params_per_element();
  const auto mi = static_cast<Eigen::Index>(m);
  if (grad_c.size() != c.size()) {
    grad_c = VectorXd::Zero(c.size());
  }
  VectorXd g = -weight * tape.base;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto & rec = tape.layers[l];
    VectorXd grad_theta = VectorXd::Zero(rec.theta.size());
    VectorXd grad_in(g.size());
    grad_in.head(mi) = g.head(mi);
    for (std::size_t i = 0; i < cfg.transformed_dim(); ++i) {
      const auto idx = static_cast<Eigen::Index>(m + i);
      std::span<double> grad_raw(grad_theta.data() + i * per, per);
      grad_in[idx] = spline::rqs_inverse_backward(
        rec.input[idx], detail::element_params(rec.theta, i, per), rec.splines[i], g[idx], weight,
        grad_raw);
    }
    const VectorXd grad_cond =
      model.layers[l].conditioner.backward(rec.mlp, grad_theta, grads.layers[l].conditioner);
    grad_in.head(mi) += grad_cond.head(mi);
    grad_c += grad_cond.tail(c.size());
    g = apply_permutation(grad_in, model.layers[l].permutation);
  }
}

}  // namespace trajflow

#endif  // TRAJFLOW__FLOW_HPP_
