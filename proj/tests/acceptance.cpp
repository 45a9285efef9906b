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


// Property-based acceptance gates. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails. Pass criterion numbers to run a subset.

#include "trajflow/trajflow.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace trajflow;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace
{

struct Outcome
{
  bool passed;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0)
{
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4)
{
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

VectorXd random_vector(Eigen::Index n, double scale, nn::Rng & rng)
{
  std::normal_distribution<double> normal(0.0, scale);
  VectorXd v(n);
  for (auto & x : v) {
    x = normal(rng);
  }
  return v;
}

// ---------------------------------------------------------------------------
// 1. spline round trip

Outcome spline_invertibility()
{
  nn::Rng rng(1);
  std::uniform_int_distribution<std::size_t> bins(2, 16);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> raw_dist(0.0, 3.0);
  const std::size_t n = 100000;
  double max_err = 0.0;
  std::size_t inside = 0;
  const auto t0 = Clock::now();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = bins(rng);
    const double b = 0.5 + 20.0 * unit(rng);
    std::vector<double> raw(spline::raw_param_count(k));
    for (auto & r : raw) {
      r = raw_dist(rng);
    }
    const auto p = spline::build_spline_params(raw, k, b);
    const double x = (2.0 * unit(rng) - 1.0) * 1.1 * b;
    inside += std::abs(x) <= b;
    const auto fwd = spline::rqs_forward(x, p);
    const auto inv = spline::rqs_inverse(fwd.value, p);
    max_err = std::max({max_err, std::abs(inv.value - x), std::abs(inv.log_abs_deriv + fwd.log_abs_deriv)});
  }
  const double elapsed = seconds_since(t0);
  return {
    max_err < 1e-8 && elapsed < 10.0,
    "max error " + fmt(max_err) + " over " + std::to_string(n) + " pairs (" + std::to_string(inside) +
      " inside the support), " + fmt(elapsed, 3) + " s"};
}

// ---------------------------------------------------------------------------
// 2. logdet vs finite-difference Jacobian

Outcome logdet_correctness()
{
  FlowConfig cfg;
  cfg.dim = 4;
  cfg.n_layers = 2;
  cfg.k_bins = 8;
  cfg.support_b = 3.0;
  cfg.conditioner_hidden = 32;
  cfg.conditioner_depth = 2;
  const FlowModel model = FlowModel::create(cfg, 2, 1.0, {1.0, false});
  nn::Rng rng(3);
  double max_rel = 0.0;
  const std::size_t n = 1000;
  for (std::size_t s = 0; s < n; ++s) {
    const VectorXd c = random_vector(16, 1.0, rng);
    const VectorXd u = random_vector(4, 1.5, rng);
    const double logdet = push_forward(model, u, c).logdet;
    MatrixXd jac(4, 4);
    const double h = 1e-4;
    for (Eigen::Index j = 0; j < 4; ++j) {
      auto at = [&](double offset) {
        VectorXd v = u;
        v[j] += offset;
        return push_forward(model, v, c).out;
      };
      jac.col(j) = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
    }
    const double det_fd = std::abs(jac.determinant());
    max_rel = std::max(max_rel, std::abs(std::exp(logdet) - det_fd) / det_fd);
  }
  return {max_rel < 1e-4, "max relative error " + fmt(max_rel) + " on " + std::to_string(n) + " inputs"};
}

// ---------------------------------------------------------------------------
// 3. gradient check of the full tiny model

Outcome gradient_correctness()
{
  double worst = 0.0;
  std::size_t params = 0;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    FlowConfig cfg;
    cfg.dim = 4;
    cfg.n_layers = 2;
    cfg.k_bins = 8;
    cfg.support_b = 15.0;
    cfg.conditioner_hidden = 16;
    cfg.conditioner_depth = 2;
    const NoiseConfig noise;
    const FlowModel model = FlowModel::create(cfg, seed, noise.alpha, {1.0, false});
    nn::Rng rng(seed + 100);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<TrainingExample> batch;
    std::vector<VectorXd> targets;
    for (int i = 0; i < 4; ++i) {
      std::vector<Vec2> pts;
      Vec2 p(normal(rng), normal(rng));
      Vec2 v(0.4 + 0.1 * normal(rng), 0.1 * normal(rng));
      const double turn = 0.2 * normal(rng);
      for (int t = 0; t < 8; ++t) {
        pts.push_back(p);
        p += v;
        v = rotate(v, turn);
      }
      // 6 observed positions give a length-5 encoder input
      batch.push_back(make_example(make_window({pts.begin(), pts.begin() + 6}, {pts.begin() + 6, pts.end()})));
      targets.push_back(inject_noise(batch.back().future_rel, noise, rng));
    }
    const auto report = grad_check(model, batch, targets, 1e-3);
    worst = std::max(worst, report.max_rel_error);
    params = 0;
    for (const auto & g : report.groups) {
      params += g.count;
    }
  }
  return {worst < 1e-3, "max relative error " + fmt(worst) + " over " + std::to_string(params) + " parameters, 3 seeds"};
}

// ---------------------------------------------------------------------------
// 4 and 5. two-component Gaussian mixture in 2-D

struct Mixture
{
  std::vector<double> weights{0.45, 0.55};
  std::vector<Eigen::Vector2d> means{{-1.5, -1.0}, {1.5, 1.0}};
  std::vector<Eigen::Matrix2d> covs;

  Mixture()
  {
    Eigen::Matrix2d a;
    a << 0.5, 0.25, 0.25, 0.4;
    Eigen::Matrix2d b;
    b << 0.35, -0.1, -0.1, 0.6;
    covs = {a, b};
  }

  VectorXd draw(nn::Rng & rng) const
  {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    const std::size_t k = unit(rng) < weights[0] ? 0 : 1;
    const Eigen::Matrix2d l = covs[k].llt().matrixL();
    const Eigen::Vector2d e(normal(rng), normal(rng));
    return means[k] + l * e;
  }

  double log_density(const VectorXd & x) const
  {
    double p = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      const Eigen::Vector2d d = x - means[k];
      p += weights[k] * std::exp(-0.5 * d.dot(covs[k].inverse() * d)) /
        (2.0 * std::numbers::pi * std::sqrt(covs[k].determinant()));
    }
    return std::log(p);
  }
};

struct DensityFit
{
  FlowModel model;
  VectorXd condition;
  double train_seconds = 0.0;
};

// Trains a dim-2 flow on mixture samples with a fixed observation, so the
// conditioning vector is constant and the flow models an unconditional density.
const DensityFit & mixture_fit()
{
  static const DensityFit fit = [] {
    FlowConfig cfg;
    cfg.dim = 2;
    cfg.n_layers = 8;
    cfg.k_bins = 10;
    cfg.support_b = 6.0;
    cfg.conditioner_hidden = 32;
    cfg.conditioner_depth = 2;
    DensityFit out{FlowModel::create(cfg, 11), {}, 0.0};
    const Mixture mix;
    nn::Rng rng(12);
    std::vector<VectorXd> data;
    for (int i = 0; i < 20000; ++i) {
      data.push_back(mix.draw(rng));
    }
    const TrainingExample fixed{{Vec2(1.0, 0.0), Vec2(1.0, 0.0)}, VectorXd::Zero(2)};
    Adam adam(out.model, 3e-3, 0.9, 0.999, 1e-8);
    const std::size_t batch_size = 200;
    const std::size_t epochs = 40;
    std::vector<TrainingExample> batch(batch_size, fixed);
    const auto t0 = Clock::now();
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
      std::shuffle(data.begin(), data.end(), rng);
      for (std::size_t start = 0; start + batch_size <= data.size(); start += batch_size) {
        const std::span<const VectorXd> targets(data.data() + start, batch_size);
        const auto lg = loss_and_gradient(out.model, batch, targets);
        adam.step(out.model, lg.gradient);
      }
    }
    out.train_seconds = seconds_since(t0);
    out.condition = encode(fixed.observed_rel, out.model.encoder);
    return out;
  }();
  return fit;
}

Outcome normalization()
{
  const auto t0 = Clock::now();
  const DensityFit & fit = mixture_fit();
  // [-9, 9]^2 holds all but ~1e-12 of the mixture mass; midpoint rule on a 600^2 grid
  const double lo = -9.0;
  const double hi = 9.0;
  const int n = 600;
  const double h = (hi - lo) / n;
  double mass = 0.0;
  VectorXd z(2);
  for (int i = 0; i < n; ++i) {
    z[0] = lo + (i + 0.5) * h;
    for (int j = 0; j < n; ++j) {
      z[1] = lo + (j + 0.5) * h;
      mass += std::exp(log_prob(z, fit.condition, fit.model));
    }
  }
  mass *= h * h;
  const double elapsed = seconds_since(t0);
  return {
    mass >= 0.99 && mass <= 1.01 && elapsed < 600.0,
    "mass " + fmt(mass, 9) + " on [-9, 9]^2, training " + fmt(fit.train_seconds, 3) + " s, total " +
      fmt(elapsed, 3) + " s"};
}

Outcome density_recovery()
{
  const DensityFit & fit = mixture_fit();
  const Mixture mix;
  nn::Rng rng(13);
  double entropy = 0.0;
  const int n_mc = 1000000;
  for (int i = 0; i < n_mc; ++i) {
    entropy -= mix.log_density(mix.draw(rng));
  }
  entropy /= n_mc;
  double nll = 0.0;
  const int n_test = 100000;
  for (int i = 0; i < n_test; ++i) {
    nll -= log_prob(mix.draw(rng), fit.condition, fit.model);
  }
  nll /= n_test;
  return {
    std::abs(nll - entropy) < 0.1,
    "test NLL " + fmt(nll, 5) + ", Monte-Carlo entropy " + fmt(entropy, 5) + ", gap " + fmt(nll - entropy, 3)};
}

// ---------------------------------------------------------------------------
// synthetic trajectory tasks

struct Split
{
  std::vector<TrajectoryWindow> train;
  std::vector<TrajectoryWindow> val;
  std::vector<TrajectoryWindow> test;
};

FlowModel toy_model(std::size_t t_pred, std::uint64_t seed, double alpha)
{
  FlowConfig cfg;
  cfg.dim = 2 * t_pred;
  cfg.n_layers = 10;
  cfg.k_bins = 8;
  cfg.support_b = 15.0;
  cfg.conditioner_hidden = 32;
  cfg.conditioner_depth = 2;
  return FlowModel::create(cfg, seed, alpha);
}

// Rotates a straight observed segment and its future into a random heading
// around a random origin.
TrajectoryWindow place(const std::vector<Vec2> & obs, const std::vector<Vec2> & fut, nn::Rng & rng)
{
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double heading = 2.0 * std::numbers::pi * unit(rng);
  const Vec2 origin(20.0 * unit(rng) - 10.0, 20.0 * unit(rng) - 10.0);
  std::vector<Vec2> o;
  std::vector<Vec2> f;
  for (const auto & p : obs) {
    o.push_back(origin + rotate(p, heading));
  }
  for (const auto & p : fut) {
    f.push_back(origin + rotate(p, heading));
  }
  return make_window(o, f);
}

// ---------------------------------------------------------------------------
// 6. noise injection stabilizes training on constant-velocity data

std::vector<TrajectoryWindow> constant_velocity(std::size_t n, nn::Rng & rng)
{
  std::uniform_real_distribution<double> speed(0.2, 1.2);
  std::vector<TrajectoryWindow> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = speed(rng);
    std::vector<Vec2> obs;
    std::vector<Vec2> fut;
    for (int t = 0; t < 8; ++t) {
      obs.emplace_back(v * (t - 7), 0.0);
    }
    for (int t = 1; t <= 4; ++t) {
      fut.emplace_back(v * t, 0.0);
    }
    out.push_back(place(obs, fut, rng));
  }
  return out;
}

double tail_std(const std::vector<EpochRecord> & h, std::size_t last)
{
  const std::size_t from = h.size() - last;
  double mean = 0.0;
  for (std::size_t i = from; i < h.size(); ++i) {
    mean += h[i].val_nll;
  }
  mean /= static_cast<double>(last);
  double var = 0.0;
  for (std::size_t i = from; i < h.size(); ++i) {
    var += (h[i].val_nll - mean) * (h[i].val_nll - mean);
  }
  return std::sqrt(var / static_cast<double>(last - 1));
}

Outcome noise_stability()
{
  nn::Rng rng(21);
  const auto train = constant_velocity(400, rng);
  const auto val = constant_velocity(100, rng);
  TrainConfig tc;
  tc.epochs = 80;
  tc.batch_size = 32;
  tc.seed = 22;
  const NoiseConfig injected;
  NoiseConfig plain = NoiseConfig::disabled();
  plain.alpha = injected.alpha;

  const auto with = fit(train, val, toy_model(4, 23, injected.alpha), tc, injected);
  const auto without = fit(train, val, toy_model(4, 23, plain.alpha), tc, plain);
  const std::size_t window = 50;
  if (with.diverged || with.history.size() < window) {
    return {false, "injected run stopped after " + std::to_string(with.history.size()) + " epochs"};
  }
  const double std_with = tail_std(with.history, window);
  // a run that diverges has no stable tail; its spread is unbounded
  const bool without_complete = !without.diverged && without.history.size() >= window;
  const double std_without =
    without_complete ? tail_std(without.history, window) : std::numeric_limits<double>::infinity();
  double best = std::numeric_limits<double>::infinity();
  for (const auto & r : with.history) {
    best = std::min(best, r.val_nll);
  }
  const double first = with.history.front().val_nll;
  const bool bounded = std::abs(best) <= 10.0 * std::abs(first);
  std::string detail = "val NLL std over last 50 epochs " + fmt(std_with) + " with injection vs " +
    fmt(std_without) + " without";
  if (!without_complete) {
    detail += " (diverged after " + std::to_string(without.history.size()) + " epochs: " +
      without.divergence_message + ")";
  }
  detail += "; injected best " + fmt(best) + ", first epoch " + fmt(first);
  return {std_with < std_without && bounded, detail};
}

std::string fit_summary(const FitResult & r)
{
  std::string s = "best epoch " + std::to_string(r.best_epoch) + " of " + std::to_string(r.history.size());
  if (!r.history.empty()) {
    s += ", val NLL " + fmt(r.history[r.best_epoch - 1].val_nll);
  }
  if (r.diverged) {
    s += ", diverged: " + r.divergence_message;
  }
  return s;
}

// ---------------------------------------------------------------------------
// 7. likelihood rank vs error on a 3-mode task

// Straight, left and right continuations with unequal prior weight.
std::vector<TrajectoryWindow> three_modes(std::size_t n, nn::Rng & rng)
{
  std::uniform_real_distribution<double> speed(0.4, 0.8);
  std::discrete_distribution<int> mode({0.1, 0.6, 0.3});
  std::normal_distribution<double> jitter(0.0, 0.02);
  std::vector<TrajectoryWindow> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = speed(rng);
    const double turn = 0.25 * (mode(rng) - 1);
    std::vector<Vec2> obs;
    std::vector<Vec2> fut;
    for (int t = 0; t < 8; ++t) {
      obs.emplace_back(v * (t - 7) + jitter(rng), jitter(rng));
    }
    Vec2 p = obs.back();
    Vec2 d(v, 0.0);
    for (int t = 0; t < 6; ++t) {
      d = rotate(d, turn);
      p += d;
      fut.emplace_back(p.x() + jitter(rng), p.y() + jitter(rng));
    }
    out.push_back(place(obs, fut, rng));
  }
  return out;
}

Outcome likelihood_meaning()
{
  nn::Rng rng(31);
  const auto train = three_modes(1500, rng);
  const auto val = three_modes(150, rng);
  const auto test = three_modes(600, rng);
  TrainConfig tc;
  tc.epochs = 60;
  tc.batch_size = 64;
  tc.seed = 32;
  const NoiseConfig noise;
  const auto result = fit(train, val, toy_model(6, 33, noise.alpha), tc, noise);
  nn::Rng sample_rng(34);
  std::vector<double> diffs;
  double ade1 = 0.0;
  double ade20 = 0.0;
  for (const auto & w : test) {
    const auto ps = top_k_predict(result.best, w, 20, 20, sample_rng);
    const double a1 = average_displacement_error(ps.samples.front(), ps.ground_truth);
    const double a20 = average_displacement_error(ps.samples.back(), ps.ground_truth);
    ade1 += a1;
    ade20 += a20;
    diffs.push_back(a20 - a1);
  }
  const double n = static_cast<double>(diffs.size());
  ade1 /= n;
  ade20 /= n;
  double mean = 0.0;
  for (double d : diffs) {
    mean += d;
  }
  mean /= n;
  double var = 0.0;
  for (double d : diffs) {
    var += (d - mean) * (d - mean);
  }
  var /= n - 1.0;
  const double t = mean / std::sqrt(var / n);
  const boost::math::students_t dist(n - 1.0);
  const double p = boost::math::cdf(boost::math::complement(dist, t));
  return {
    ade1 < ade20 && p < 0.01 && diffs.size() >= 500,
    "rank-1 ADE " + fmt(ade1) + ", rank-20 ADE " + fmt(ade20) + ", paired t " + fmt(t) + ", one-sided p " +
      fmt(p, 3) + " over " + std::to_string(diffs.size()) + " windows; " + fit_summary(result)};
}

// ---------------------------------------------------------------------------
// 8. scaling augmentation on speed-diverse data

// Gently curving walks; the held-out scene moves at speeds the training
// scene rarely shows.
std::vector<TrajectoryWindow> curving_walks(std::size_t n, double v_lo, double v_hi, nn::Rng & rng)
{
  std::uniform_real_distribution<double> speed(v_lo, v_hi);
  std::uniform_real_distribution<double> curvature(-0.08, 0.08);
  std::normal_distribution<double> jitter(0.0, 0.01);
  std::vector<TrajectoryWindow> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = speed(rng);
    const double turn = curvature(rng);
    std::vector<Vec2> pts;
    Vec2 p(0.0, 0.0);
    Vec2 d(v, 0.0);
    for (int t = 0; t < 14; ++t) {
      pts.emplace_back(p.x() + jitter(rng), p.y() + jitter(rng));
      p += d;
      d = rotate(d, turn);
    }
    out.push_back(place({pts.begin(), pts.begin() + 8}, {pts.begin() + 8, pts.end()}, rng));
  }
  return out;
}

Outcome augmentation_ablation()
{
  nn::Rng rng(41);
  const auto train = curving_walks(600, 0.3, 0.6, rng);
  const auto val = curving_walks(60, 0.3, 0.6, rng);
  const auto test = curving_walks(300, 0.15, 1.2, rng);
  const NoiseConfig noise;
  const AugmentConfig augment;
  EvaluationOptions eo;
  eo.n_samples = 20;
  double plain_sum = 0.0;
  double aug_sum = 0.0;
  std::string runs;
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    TrainConfig tc;
    tc.epochs = 80;
    tc.batch_size = 64;
    tc.seed = 100 + seed;
    const auto plain = fit(train, val, toy_model(6, 200 + seed, noise.alpha), tc, noise);
    FitOptions opts;
    opts.augment = augment;
    const auto aug = fit(train, val, toy_model(6, 200 + seed, noise.alpha), tc, noise, opts);
    nn::Rng r1(300 + seed);
    nn::Rng r2(300 + seed);
    const double a = evaluate_windows(plain.best, test, eo, r1, "plain").min_ade;
    const double b = evaluate_windows(aug.best, test, eo, r2, "augmented").min_ade;
    plain_sum += a;
    aug_sum += b;
    runs += (runs.empty() ? "" : ", ") + fmt(a, 3) + "/" + fmt(b, 3);
  }
  return {
    aug_sum < plain_sum,
    "mean minADE " + fmt(aug_sum / 3.0) + " augmented vs " + fmt(plain_sum / 3.0) +
      " unaugmented (per seed plain/augmented: " + runs + ")"};
}

struct Criterion
{
  int id;
  const char * name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char ** argv)
{
  const std::vector<Criterion> criteria = {
    {1, "spline invertibility", spline_invertibility},
    {2, "logdet correctness", logdet_correctness},
    {3, "gradient correctness", gradient_correctness},
    {4, "normalization", normalization},
    {5, "density recovery", density_recovery},
    {6, "noise-injection stability", noise_stability},
    {7, "likelihood meaningfulness", likelihood_meaning},
    {8, "scaling-augmentation ablation", augmentation_ablation},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    selected.insert(std::atoi(argv[i]));
  }
  int failures = 0;
  for (const auto & c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) {
      continue;
    }
    const auto t0 = Clock::now();
    Outcome o{false, ""};
    try {
      o = c.run();
    } catch (const std::exception & e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.passed;
    std::cout << (o.passed ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
              << " [" << fmt(seconds_since(t0), 3) << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
