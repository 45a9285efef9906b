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

#ifndef TRAJFLOW__TRAINING_HPP_
#define TRAJFLOW__TRAINING_HPP_

#include "trajflow/data.hpp"
#include "trajflow/encoder.hpp"
#include "trajflow/error.hpp"
#include "trajflow/flow.hpp"
#include "trajflow/format.hpp"
#include "trajflow/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace trajflow
{

/// Training-time scaling and noise. Entries equal to zero (within zero_epsilon)
/// get noise with std beta, all others std gamma.
struct NoiseConfig
{
  double alpha = 10.0;
  double beta = 0.2;
  double gamma = 0.02;
  double zero_epsilon = 0.0;

  static NoiseConfig disabled() { return {1.0, 0.0, 0.0, 0.0}; }

  void validate() const
  {
    if (!(alpha > 0.0) || !(beta >= 0.0) || !(gamma >= 0.0) || !(zero_epsilon >= 0.0)) {
      throw InvalidInputError("noise config needs alpha > 0 and beta, gamma >= 0");
    }
  }
};

struct TrainConfig
{
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  std::size_t epochs = 150;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double validation_fraction = 0.1;
  /// Global gradient-norm clip; 0 disables.
  double grad_clip = 0.0;
  /// Validation NLL is computed on noise-injected targets when true.
  bool validation_noise = true;

  void validate() const
  {
    if (!(learning_rate >= 0.0) || batch_size < 1) {
      throw InvalidInputError("train config needs learning_rate >= 0 and batch_size >= 1");
    }
  }
};

/// x'' = alpha * x' + eps, zero/non-zero classification done on x'.
inline Eigen::VectorXd inject_noise(const Eigen::VectorXd & x_rel, const NoiseConfig & cfg, nn::Rng & rng)
{
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd out(x_rel.size());
  for (Eigen::Index i = 0; i < x_rel.size(); ++i) {
    const bool zero = std::abs(x_rel[i]) <= cfg.zero_epsilon;
    const double std_dev = zero ? cfg.beta : cfg.gamma;
    const double eps = std_dev > 0.0 ? std_dev * normal(rng) : 0.0;
    out[i] = cfg.alpha * x_rel[i] + eps;
  }
  return out;
}

inline Eigen::VectorXd unscale(const Eigen::VectorXd & z, double alpha) { return z / alpha; }

/// Rotation-normalized window in the form the model consumes.
struct TrainingExample
{
  std::vector<Vec2> observed_rel;
  Eigen::VectorXd future_rel;
};

inline TrainingExample make_example(const TrajectoryWindow & w)
{
  const TrajectoryWindow n = rotation_normalize(w);
  return {n.observed_rel, flatten(n.future_rel)};
}

/// Mean of -log p(target | observed) over the batch; targets are already in model space.
inline double nll_of_targets(
  const FlowModel & model, std::span<const TrainingExample> batch,
  std::span<const Eigen::VectorXd> targets)
{
  if (batch.empty()) {
    throw InvalidInputError("empty batch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    double lp = 0.0;
    try {
      lp = log_prob(targets[i], encode(batch[i].observed_rel, model.encoder), model);
    } catch (const NumericError & e) {
      throw NumericError(e.what(), e.layer(), i);
    }
    total -= lp;
  }
  return total / static_cast<double>(batch.size());
}

/// nll_loss with noise injection drawn from rng. Pass nullptr to only apply the alpha scaling.
inline double nll_loss(
  std::span<const TrainingExample> batch, const FlowModel & model, const NoiseConfig * noise,
  nn::Rng & rng)
{
  NoiseConfig scale_only = NoiseConfig::disabled();
  scale_only.alpha = model.alpha;
  const NoiseConfig & cfg = noise ? *noise : scale_only;
  std::vector<Eigen::VectorXd> targets;
  targets.reserve(batch.size());
  for (const auto & ex : batch) {
    targets.push_back(inject_noise(ex.future_rel, cfg, rng));
  }
  return nll_of_targets(model, batch, targets);
}

struct LossAndGradient
{
  double loss;
  FlowModel gradient;
};

/// Mean NLL and its gradient w.r.t. every model parameter.
inline LossAndGradient loss_and_gradient(
  const FlowModel & model, std::span<const TrainingExample> batch,
  std::span<const Eigen::VectorXd> targets)
{
  if (batch.empty()) {
    throw InvalidInputError("empty batch");
  }
  LossAndGradient out{0.0, nn::zeros_like(model)};
  const double weight = -1.0 / static_cast<double>(batch.size());
  EncoderParams::Cache enc_cache;
  FlowTape tape;
  Eigen::VectorXd grad_c;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    try {
      const Eigen::VectorXd c = encode(batch[i].observed_rel, model.encoder, &enc_cache);
      const double lp = log_prob_recorded(targets[i], c, model, tape);
      out.loss -= lp / static_cast<double>(batch.size());
      grad_c = Eigen::VectorXd::Zero(c.size());
      log_prob_backward(model, tape, c, weight, out.gradient, grad_c);
      encode_backward(model.encoder, enc_cache, grad_c, out.gradient.encoder);
    } catch (const NumericError & e) {
      throw NumericError(e.what(), e.layer(), i);
    }
  }
  return out;
}

/// Adaptive-moment optimizer over every parameter array of a FlowModel.
class Adam
{
public:
  Adam(const FlowModel & model, double lr, double beta1, double beta2, double eps)
  : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps)
  {
    for (const auto & p : nn::params_of(model)) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  void step(FlowModel & model, const FlowModel & grads)
  {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    auto params = nn::params_of(model);
    const auto g = nn::params_of(grads);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto pv = params[k].values();
      auto gv = g[k].values();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * gv[i];
        v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * gv[i] * gv[i];
        const double m_hat = m_[k][i] / bc1;
        const double v_hat = v_[k][i] / bc2;
        pv[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
      }
    }
  }

private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

inline double gradient_norm(const FlowModel & grads)
{
  double sq = 0.0;
  for (const auto & p : nn::params_of(grads)) {
    for (double v : p.values()) {
      sq += v * v;
    }
  }
  return std::sqrt(sq);
}

inline void scale_gradient(FlowModel & grads, double factor)
{
  for (auto & p : nn::params_of(grads)) {
    for (double & v : p.values()) {
      v *= factor;
    }
  }
}

struct EpochRecord
{
  std::size_t epoch;
  double train_nll;
  double val_nll;
};

struct FitResult
{
  FlowModel best;
  FlowModel final_model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool diverged = false;
  std::string divergence_message;
};

/// Optional per-epoch scaling augmentation for fit().
struct FitOptions
{
  std::optional<AugmentConfig> augment;
  /// Called after every epoch; returning false stops training early.
  std::function<bool(const EpochRecord &)> on_epoch;
};

/// Mini-batch maximum-likelihood training with Adam.
///
/// Windows are in their original frame; each epoch they are (optionally) scaled
/// about their mean with a fresh factor, rotation-normalized and noise-injected.
/// The best checkpoint is the one with the lowest validation NLL (the final
/// model when there is no validation data).
inline FitResult fit(
  const std::vector<TrajectoryWindow> & train_set, const std::vector<TrajectoryWindow> & val_set,
  FlowModel model, const TrainConfig & train_cfg, const NoiseConfig & noise_cfg,
  const FitOptions & opts = {})
{
  if (train_set.empty()) {
    throw DataError("training set is empty");
  }
  train_cfg.validate();
  noise_cfg.validate();
  if (opts.augment) {
    opts.augment->validate();
  }
  model.alpha = noise_cfg.alpha;

  nn::Rng rng(train_cfg.seed);
  Adam adam(model, train_cfg.learning_rate, train_cfg.adam_beta1, train_cfg.adam_beta2, train_cfg.adam_epsilon);

  std::vector<TrainingExample> fixed_train;
  if (!opts.augment) {
    for (const auto & w : train_set) {
      fixed_train.push_back(make_example(w));
    }
  }
  std::vector<TrainingExample> val_examples;
  for (const auto & w : val_set) {
    val_examples.push_back(make_example(w));
  }

  auto validation_nll = [&](const FlowModel & m) {
    if (val_examples.empty()) {
      return std::numeric_limits<double>::quiet_NaN();
    }
    nn::Rng val_rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    return nll_loss(val_examples, m, train_cfg.validation_noise ? &noise_cfg : nullptr, val_rng);
  };

  FitResult result{model, model, {}, 0, false, {}};
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  for (std::size_t epoch = 1; epoch <= train_cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    const FlowModel epoch_start = model;
    try {
      for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
        const std::size_t end = std::min(order.size(), start + train_cfg.batch_size);
        std::vector<TrainingExample> batch;
        std::vector<Eigen::VectorXd> targets;
        for (std::size_t j = start; j < end; ++j) {
          if (opts.augment) {
            const double s = sample_scale(*opts.augment, rng);
            batch.push_back(make_example(scale_window(train_set[order[j]], s)));
          } else {
            batch.push_back(fixed_train[order[j]]);
          }
          targets.push_back(inject_noise(batch.back().future_rel, noise_cfg, rng));
        }
        auto lg = loss_and_gradient(model, batch, targets);
        if (!std::isfinite(lg.loss)) {
          throw NumericError("non-finite training loss");
        }
        if (train_cfg.grad_clip > 0.0) {
          const double norm = gradient_norm(lg.gradient);
          if (norm > train_cfg.grad_clip) {
            scale_gradient(lg.gradient, train_cfg.grad_clip / norm);
          }
        }
        adam.step(model, lg.gradient);
        epoch_loss += lg.loss * static_cast<double>(end - start);
      }
      const double val = validation_nll(model);
      if (!val_examples.empty() && !std::isfinite(val)) {
        throw NumericError("non-finite validation loss");
      }
      EpochRecord rec{epoch, epoch_loss / static_cast<double>(order.size()), val};
      result.history.push_back(rec);
      if (val_examples.empty() || val < best_val) {
        best_val = val;
        result.best = model;
        result.best_epoch = epoch;
      }
      if (opts.on_epoch && !opts.on_epoch(rec)) {
        break;
      }
    } catch (const NumericError & e) {
      result.diverged = true;
      result.divergence_message = e.what();
      model = epoch_start;
      break;
    }
  }
  if (result.history.empty() && !result.diverged) {
    result.best = model;
  }
  result.final_model = model;
  return result;
}

/// Rows of `epoch,train_nll,val_nll`, preceded by `#` provenance lines.
inline void write_history(
  std::ostream & out, const std::vector<EpochRecord> & history,
  const std::vector<std::string> & header_lines = {})
{
  for (const auto & h : header_lines) {
    out << "# " << h << '\n';
  }
  out << "epoch,train_nll,val_nll\n";
  for (const auto & r : history) {
    out << r.epoch << ',' << format_double(r.train_nll) << ',' << format_double(r.val_nll) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Gradient check

struct GradCheckGroup
{
  std::string name;
  std::size_t count;
  double max_rel_error;
  double max_abs_gradient;
};

struct GradCheckReport
{
  std::vector<GradCheckGroup> groups;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

/// |analytic - numeric| / max(|analytic|, |numeric|, floor).
inline double relative_error(double analytic, double numeric, double floor)
{
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares analytic gradients of the batch NLL (on fixed targets) with
/// fourth-order central differences, step 1e-3 * max(1, |p|), for every
/// parameter.
inline GradCheckReport grad_check(
  const FlowModel & model, std::span<const TrainingExample> batch,
  std::span<const Eigen::VectorXd> targets, double tolerance, double floor = 1e-6)
{
  const auto analytic = loss_and_gradient(model, batch, targets);
  const auto grads = nn::params_of(analytic.gradient);
  FlowModel probe = model;
  auto params = nn::params_of(probe);
  GradCheckReport report;
  report.tolerance = tolerance;
  for (std::size_t k = 0; k < params.size(); ++k) {
    GradCheckGroup group{params[k].name, params[k].size(), 0.0, 0.0};
    auto pv = params[k].values();
    auto gv = grads[k].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double orig = pv[i];
      const double h = 1e-3 * std::max(1.0, std::abs(orig));
      auto at = [&](double offset) {
        pv[i] = orig + offset;
        const double v = nll_of_targets(probe, batch, targets);
        pv[i] = orig;
        return v;
      };
      const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
      group.max_rel_error = std::max(group.max_rel_error, relative_error(gv[i], numeric, floor));
      group.max_abs_gradient = std::max(group.max_abs_gradient, std::abs(gv[i]));
    }
    report.max_rel_error = std::max(report.max_rel_error, group.max_rel_error);
    report.groups.push_back(std::move(group));
  }
  report.passed = report.max_rel_error < tolerance;
  return report;
}

}  // namespace trajflow

#endif  // TRAJFLOW__TRAINING_HPP_
