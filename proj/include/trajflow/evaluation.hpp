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

#ifndef TRAJFLOW__EVALUATION_HPP_
#define TRAJFLOW__EVALUATION_HPP_

#include "trajflow/data.hpp"
#include "trajflow/error.hpp"
#include "trajflow/flow.hpp"
#include "trajflow/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace trajflow
{

/// Sampled futures with their log-likelihoods and the (possibly shorter) ground truth.
struct PredictionSet
{
  std::vector<std::vector<Vec2>> samples;
  std::vector<double> log_likelihoods;
  std::vector<Vec2> ground_truth;

  void validate() const
  {
    if (samples.empty() || samples.size() != log_likelihoods.size()) {
      throw InvalidInputError("prediction set needs matching, non-empty samples and likelihoods");
    }
    const std::size_t len = samples.front().size();
    for (const auto & s : samples) {
      if (s.size() != len) {
        throw InvalidInputError("prediction samples differ in length");
      }
    }
    if (ground_truth.empty() || ground_truth.size() > len) {
      throw InvalidInputError("ground truth must be non-empty and no longer than the samples");
    }
  }
};

/// Mean Euclidean error over the ground-truth steps.
inline double average_displacement_error(const std::vector<Vec2> & track, const std::vector<Vec2> & truth)
{
  double sum = 0.0;
  for (std::size_t t = 0; t < truth.size(); ++t) {
    sum += (track[t] - truth[t]).norm();
  }
  return sum / static_cast<double>(truth.size());
}

/// Error at the last ground-truth step.
inline double final_displacement_error(const std::vector<Vec2> & track, const std::vector<Vec2> & truth)
{
  return (track[truth.size() - 1] - truth.back()).norm();
}

inline double min_ade(const PredictionSet & ps)
{
  ps.validate();
  double best = std::numeric_limits<double>::infinity();
  for (const auto & s : ps.samples) {
    best = std::min(best, average_displacement_error(s, ps.ground_truth));
  }
  return best;
}

inline double min_fde(const PredictionSet & ps)
{
  ps.validate();
  double best = std::numeric_limits<double>::infinity();
  for (const auto & s : ps.samples) {
    best = std::min(best, final_displacement_error(s, ps.ground_truth));
  }
  return best;
}

enum class OracleSelection {
  kPerStep,     // best samples chosen by their error at the evaluated step
  kWholeTrack,  // best samples chosen by ADE over the available ground truth
};

/// Mean error at `horizon_step` (1-based) of the best ceil(fraction * N) samples.
inline double oracle_top_fraction(
  const PredictionSet & ps, double fraction, std::size_t horizon_step,
  OracleSelection selection = OracleSelection::kPerStep)
{
  ps.validate();
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw InvalidInputError("oracle fraction must be in (0, 1]");
  }
  if (horizon_step < 1 || horizon_step > ps.ground_truth.size()) {
    throw InvalidInputError("horizon step outside the ground truth");
  }
  const std::size_t n = ps.samples.size();
  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-12));
  if (keep < 1) {
    throw InvalidInputError("oracle fraction keeps no samples");
  }
  const std::size_t t = horizon_step - 1;
  std::vector<double> step_error(n);
  std::vector<double> key(n);
  for (std::size_t i = 0; i < n; ++i) {
    step_error[i] = (ps.samples[i][t] - ps.ground_truth[t]).norm();
    key[i] = selection == OracleSelection::kPerStep ?
      step_error[i] :
      average_displacement_error(ps.samples[i], ps.ground_truth);
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  double sum = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    sum += step_error[idx[i]];
  }
  return sum / static_cast<double>(keep);
}

/// Sample indices by descending log-likelihood; ties keep their original order.
inline std::vector<std::size_t> rank_by_likelihood(const PredictionSet & ps)
{
  std::vector<std::size_t> idx(ps.log_likelihoods.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return ps.log_likelihoods[a] > ps.log_likelihoods[b];
  });
  return idx;
}

/// Samples n_candidates futures for the window and keeps the k most likely,
/// decoded to absolute coordinates in the window's original frame.
inline PredictionSet top_k_predict(
  const FlowModel & model, const TrajectoryWindow & window, std::size_t n_candidates,
  std::size_t k, nn::Rng & rng)
{
  if (k > n_candidates) {
    throw InvalidInputError("top-k needs k <= number of candidates");
  }
  const TrajectoryWindow norm = rotation_normalize(window);
  const Eigen::VectorXd c = encode(norm.observed_rel, model.encoder);
  const auto draws = sample(model, c, n_candidates, rng);
  PredictionSet all;
  for (const auto & d : draws) {
    all.samples.push_back(decode_prediction(unscale(d.z, model.alpha), norm.anchor, norm.rotation));
    all.log_likelihoods.push_back(d.log_likelihood);
  }
  const auto order = rank_by_likelihood(all);
  PredictionSet out;
  out.ground_truth = window.future_abs;
  for (std::size_t i = 0; i < k; ++i) {
    out.samples.push_back(std::move(all.samples[order[i]]));
    out.log_likelihoods.push_back(all.log_likelihoods[order[i]]);
  }
  return out;
}

/// Log-likelihood the model assigns to an absolute future for a window, in the
/// model's scaled displacement space (the same space sample() reports in).
inline double future_log_prob(
  const FlowModel & model, const TrajectoryWindow & window, const std::vector<Vec2> & future_abs)
{
  const TrajectoryWindow norm = rotation_normalize(make_window(window.observed_abs, future_abs));
  const Eigen::VectorXd c = encode(norm.observed_rel, model.encoder);
  return log_prob(model.alpha * flatten(norm.future_rel), c, model);
}

struct RankRow
{
  std::size_t rank;
  double mean_ade;
  double mean_fde;
};

/// Mean ADE/FDE of the rank-r most likely sample across all prediction sets.
inline std::vector<RankRow> likelihood_rank_curve(const std::vector<PredictionSet> & sets, std::size_t n_samples)
{
  std::vector<RankRow> rows(n_samples);
  for (std::size_t r = 0; r < n_samples; ++r) {
    rows[r] = {r + 1, 0.0, 0.0};
  }
  if (sets.empty()) {
    return rows;
  }
  for (const auto & ps : sets) {
    ps.validate();
    if (ps.samples.size() != n_samples) {
      throw InvalidInputError("prediction set size differs from the rank-curve sample count");
    }
    const auto order = rank_by_likelihood(ps);
    for (std::size_t r = 0; r < n_samples; ++r) {
      rows[r].mean_ade += average_displacement_error(ps.samples[order[r]], ps.ground_truth);
      rows[r].mean_fde += final_displacement_error(ps.samples[order[r]], ps.ground_truth);
    }
  }
  for (auto & row : rows) {
    row.mean_ade /= static_cast<double>(sets.size());
    row.mean_fde /= static_cast<double>(sets.size());
  }
  return rows;
}

struct OracleRow
{
  double seconds;
  std::size_t step;
  double error;
};

struct SceneMetrics
{
  std::string scene;
  std::size_t windows = 0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  std::vector<OracleRow> oracle;
  std::vector<RankRow> rank_curve;
};

struct EvaluationOptions
{
  std::size_t n_samples = 20;
  /// Candidates drawn before keeping the n_samples most likely; 0 means no top-k filtering.
  std::size_t n_candidates = 0;
  double oracle_fraction = 0.1;
  double seconds_per_step = 0.4;
  std::vector<double> oracle_seconds = {1.0, 2.0, 3.0, 4.0};
  OracleSelection oracle_selection = OracleSelection::kPerStep;
};

/// Predicts every window and aggregates the metrics. Oracle errors are averaged
/// per step over the windows whose ground truth reaches that step.
inline SceneMetrics evaluate_windows(
  const FlowModel & model, const std::vector<TrajectoryWindow> & windows, const EvaluationOptions & opts,
  nn::Rng & rng, std::string scene = "all")
{
  SceneMetrics m;
  m.scene = std::move(scene);
  if (windows.empty()) {
    throw DataError("no evaluation windows");
  }
  std::vector<PredictionSet> sets;
  std::vector<double> oracle_sum(opts.oracle_seconds.size(), 0.0);
  std::vector<std::size_t> oracle_n(opts.oracle_seconds.size(), 0);
  const std::size_t n_cand = std::max(opts.n_candidates, opts.n_samples);
  for (const auto & w : windows) {
    PredictionSet ps = top_k_predict(model, w, n_cand, opts.n_samples, rng);
    m.min_ade += min_ade(ps);
    m.min_fde += min_fde(ps);
    for (std::size_t j = 0; j < opts.oracle_seconds.size(); ++j) {
      const auto step = static_cast<std::size_t>(std::llround(opts.oracle_seconds[j] / opts.seconds_per_step));
      if (step >= 1 && step <= ps.ground_truth.size()) {
        oracle_sum[j] += oracle_top_fraction(ps, opts.oracle_fraction, step, opts.oracle_selection);
        ++oracle_n[j];
      }
    }
    sets.push_back(std::move(ps));
  }
  m.windows = windows.size();
  m.min_ade /= static_cast<double>(windows.size());
  m.min_fde /= static_cast<double>(windows.size());
  for (std::size_t j = 0; j < opts.oracle_seconds.size(); ++j) {
    const auto step = static_cast<std::size_t>(std::llround(opts.oracle_seconds[j] / opts.seconds_per_step));
    m.oracle.push_back(
      {opts.oracle_seconds[j], step,
        oracle_n[j] ? oracle_sum[j] / static_cast<double>(oracle_n[j]) : std::numeric_limits<double>::quiet_NaN()});
  }
  m.rank_curve = likelihood_rank_curve(sets, opts.n_samples);
  return m;
}

}  // namespace trajflow

#endif  // TRAJFLOW__EVALUATION_HPP_
