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

// Recurrent motion encoder: observed displacements -> conditioning vector.
//
//   e_t = W_e d_t + b_e                     (linear 2 -> H embedding)
//   h^l_t = GRU_l(h^{l-1}_t, h^l_{t-1})      (3 stacked cells, h^l_0 = 0)
//   c = W_o ELU(h^L_T) + b_o                (linear H -> H head)
//
// Cell equations (gate order r, z, n in the stacked weight blocks):
//   r = sigmoid(W_ir x + b_ir + W_hr h + b_hr)
//   z = sigmoid(W_iz x + b_iz + W_hz h + b_hz)
//   n = tanh(W_in x + b_in + r * (W_hn h + b_hn))
//   h' = (1 - z) * n + z * h

#ifndef TRAJFLOW__ENCODER_HPP_
#define TRAJFLOW__ENCODER_HPP_

#include "trajflow/error.hpp"
#include "trajflow/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace trajflow
{

using Vec2 = Eigen::Vector2d;

/// out[t] = positions[t + 1] - positions[t].
inline std::vector<Vec2> to_displacements(std::span<const Vec2> positions)
{
  if (positions.size() < 2) {
    throw InvalidInputError("need at least two positions to form displacements");
  }
  std::vector<Vec2> out;
  out.reserve(positions.size() - 1);
  for (std::size_t t = 1; t < positions.size(); ++t) {
    out.push_back(positions[t] - positions[t - 1]);
  }
  return out;
}

/// Inverse of to_displacements given the first position.
inline std::vector<Vec2> accumulate_displacements(const Vec2 & start, std::span<const Vec2> steps)
{
  std::vector<Vec2> out;
  out.reserve(steps.size() + 1);
  out.push_back(start);
  for (const Vec2 & d : steps) {
    out.push_back(out.back() + d);
  }
  return out;
}

namespace nn
{

struct GruCell
{
  MatrixXd weight_ih;  // 3H x in
  MatrixXd weight_hh;  // 3H x H
  VectorXd bias_ih;
  VectorXd bias_hh;

  struct Step
  {
    VectorXd x;
    VectorXd h_prev;
    VectorXd r;
    VectorXd z;
    VectorXd n;
    VectorXd hh_n;  // W_hn h + b_hn
  };

  GruCell() = default;
  GruCell(Index in, Index hidden)
  : weight_ih(MatrixXd::Zero(3 * hidden, in)),
    weight_hh(MatrixXd::Zero(3 * hidden, hidden)),
    bias_ih(VectorXd::Zero(3 * hidden)),
    bias_hh(VectorXd::Zero(3 * hidden))
  {
  }

  Index hidden() const { return weight_hh.cols(); }

  VectorXd forward(const VectorXd & x, const VectorXd & h, Step * step = nullptr) const
  {
    const Index hs = hidden();
    const VectorXd gi = weight_ih * x + bias_ih;
    const VectorXd gh = weight_hh * h + bias_hh;
    VectorXd r(hs);
    VectorXd z(hs);
    VectorXd n(hs);
    VectorXd out(hs);
    for (Index j = 0; j < hs; ++j) {
      r[j] = sigmoid(gi[j] + gh[j]);
      z[j] = sigmoid(gi[hs + j] + gh[hs + j]);
      n[j] = std::tanh(gi[2 * hs + j] + r[j] * gh[2 * hs + j]);
      out[j] = (1.0 - z[j]) * n[j] + z[j] * h[j];
    }
    if (step) {
      step->x = x;
      step->h_prev = h;
      step->r = r;
      step->z = z;
      step->n = n;
      step->hh_n = gh.segment(2 * hs, hs);
    }
    return out;
  }

  /// Given d(loss)/d(h'), accumulates parameter gradients and writes d/dx and d/dh.
  void backward(
    const Step & s, const VectorXd & grad_h_out, GruCell & grads, VectorXd & grad_x,
    VectorXd & grad_h_prev) const
  {
    const Index hs = hidden();
    VectorXd dgi(3 * hs);
    VectorXd dgh(3 * hs);
    grad_h_prev.resize(hs);
    for (Index j = 0; j < hs; ++j) {
      const double g = grad_h_out[j];
      const double dn = g * (1.0 - s.z[j]) * (1.0 - s.n[j] * s.n[j]);
      const double dz = g * (s.h_prev[j] - s.n[j]) * s.z[j] * (1.0 - s.z[j]);
      const double dr = dn * s.hh_n[j] * s.r[j] * (1.0 - s.r[j]);
      dgi[j] = dr;
      dgi[hs + j] = dz;
      dgi[2 * hs + j] = dn;
      dgh[j] = dr;
      dgh[hs + j] = dz;
      dgh[2 * hs + j] = dn * s.r[j];
      grad_h_prev[j] = g * s.z[j];
    }
    grads.weight_ih.noalias() += dgi * s.x.transpose();
    grads.bias_ih += dgi;
    grads.weight_hh.noalias() += dgh * s.h_prev.transpose();
    grads.bias_hh += dgh;
    grad_x = weight_ih.transpose() * dgi;
    grad_h_prev.noalias() += weight_hh.transpose() * dgh;
  }

  void init_uniform(Rng & rng)
  {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (MatrixXd * m : {&weight_ih, &weight_hh}) {
      for (Index i = 0; i < m->size(); ++i) {
        m->data()[i] = dist(rng);
      }
    }
    for (VectorXd * v : {&bias_ih, &bias_hh}) {
      for (Index i = 0; i < v->size(); ++i) {
        (*v)[i] = dist(rng);
      }
    }
  }

  template <class Ref>
  void collect(const std::string & prefix, std::vector<Ref> & out)
  {
    out.push_back(make_param_ref(prefix + "weight_ih", weight_ih));
    out.push_back(make_param_ref(prefix + "weight_hh", weight_hh));
    out.push_back(make_param_ref(prefix + "bias_ih", bias_ih));
    out.push_back(make_param_ref(prefix + "bias_hh", bias_hh));
  }

  template <class Ref>
  void collect(const std::string & prefix, std::vector<Ref> & out) const
  {
    out.push_back(make_param_ref(prefix + "weight_ih", weight_ih));
    out.push_back(make_param_ref(prefix + "weight_hh", weight_hh));
    out.push_back(make_param_ref(prefix + "bias_ih", bias_ih));
    out.push_back(make_param_ref(prefix + "bias_hh", bias_hh));
  }
};

}  // namespace nn

inline constexpr Eigen::Index kEncoderHidden = 16;
inline constexpr std::size_t kEncoderLayers = 3;

struct EncoderParams
{
  nn::Dense embed;
  std::vector<nn::GruCell> gru_stack;
  nn::Dense head;

  struct Cache
  {
    std::vector<Eigen::VectorXd> inputs;
    std::vector<std::vector<nn::GruCell::Step>> steps;  // [layer][t]
    Eigen::VectorXd top;
  };

  EncoderParams() : EncoderParams(kEncoderHidden, kEncoderLayers) {}
  EncoderParams(Eigen::Index hidden, std::size_t layers) : embed(2, hidden), head(hidden, hidden)
  {
    for (std::size_t l = 0; l < layers; ++l) {
      gru_stack.emplace_back(hidden, hidden);
    }
  }

  Eigen::Index hidden() const { return embed.out_dim(); }
  Eigen::Index output_dim() const { return head.out_dim(); }

  void init_uniform(nn::Rng & rng)
  {
    embed.init_uniform(rng);
    for (auto & cell : gru_stack) {
      cell.init_uniform(rng);
    }
    head.init_uniform(rng);
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
    self.embed.collect(prefix + "embed.", out);
    for (std::size_t l = 0; l < self.gru_stack.size(); ++l) {
      self.gru_stack[l].collect(prefix + "gru" + std::to_string(l) + ".", out);
    }
    self.head.collect(prefix + "head.", out);
  }
};

/// Encodes observed displacements into the conditioning vector.
inline Eigen::VectorXd encode(
  std::span<const Vec2> displacements, const EncoderParams & p,
  EncoderParams::Cache * cache = nullptr)
{
  if (displacements.empty()) {
    throw InvalidInputError("encoder needs at least one displacement");
  }
  const Eigen::Index hs = p.hidden();
  const std::size_t steps = displacements.size();
  const std::size_t layers = p.gru_stack.size();
  if (cache) {
    cache->inputs.assign(steps, Eigen::VectorXd());
    cache->steps.assign(layers, std::vector<nn::GruCell::Step>(steps));
  }
  std::vector<Eigen::VectorXd> hidden(layers, Eigen::VectorXd::Zero(hs));
  for (std::size_t t = 0; t < steps; ++t) {
    const Eigen::VectorXd d = displacements[t];
    Eigen::VectorXd x = p.embed.forward(d);
    if (cache) {
      cache->inputs[t] = d;
    }
    for (std::size_t l = 0; l < layers; ++l) {
      hidden[l] = p.gru_stack[l].forward(x, hidden[l], cache ? &cache->steps[l][t] : nullptr);
      x = hidden[l];
    }
  }
  if (cache) {
    cache->top = hidden.back();
  }
  return p.head.forward(nn::elu(hidden.back()));
}

/// Reverse pass of encode(); accumulates into grads.
inline void encode_backward(
  const EncoderParams & p, const EncoderParams::Cache & cache, const Eigen::VectorXd & grad_c,
  EncoderParams & grads)
{
  const Eigen::Index hs = p.hidden();
  const std::size_t layers = p.gru_stack.size();
  const std::size_t steps = cache.inputs.size();

  const Eigen::VectorXd activated = nn::elu(cache.top);
  Eigen::VectorXd grad_top = p.head.backward(activated, grad_c, grads.head);
  for (Eigen::Index j = 0; j < hs; ++j) {
    grad_top[j] *= nn::elu_grad(cache.top[j]);
  }

  // grad_out[t]: gradient on the current layer's output at step t.
  std::vector<Eigen::VectorXd> grad_out(steps, Eigen::VectorXd::Zero(hs));
  grad_out.back() = grad_top;
  Eigen::VectorXd grad_x;
  Eigen::VectorXd grad_h_prev;
  for (std::size_t l = layers; l-- > 0;) {
    std::vector<Eigen::VectorXd> grad_in(steps);
    Eigen::VectorXd carry = Eigen::VectorXd::Zero(hs);
    for (std::size_t t = steps; t-- > 0;) {
      const Eigen::VectorXd g = grad_out[t] + carry;
      p.gru_stack[l].backward(cache.steps[l][t], g, grads.gru_stack[l], grad_x, grad_h_prev);
      grad_in[t] = grad_x;
      carry = grad_h_prev;
    }
    grad_out = std::move(grad_in);
  }
  for (std::size_t t = 0; t < steps; ++t) {
    p.embed.backward(cache.inputs[t], grad_out[t], grads.embed);
  }
}

}  // namespace trajflow

#endif  // TRAJFLOW__ENCODER_HPP_
