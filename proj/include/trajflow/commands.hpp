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

#ifndef TRAJFLOW__COMMANDS_HPP_
#define TRAJFLOW__COMMANDS_HPP_

#include "trajflow/checkpoint.hpp"
#include "trajflow/config.hpp"
#include "trajflow/data.hpp"
#include "trajflow/error.hpp"
#include "trajflow/evaluation.hpp"
#include "trajflow/flow.hpp"
#include "trajflow/format.hpp"
#include "trajflow/training.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace trajflow::cli
{

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitNumeric = 3,
};

inline int exit_code_for(const Error & e)
{
  switch (e.kind()) {
    case ErrorKind::kInvalidInput:
    case ErrorKind::kConfig:
      return kExitUsage;
    case ErrorKind::kParse:
    case ErrorKind::kFormat:
    case ErrorKind::kData:
      return kExitData;
    case ErrorKind::kNumeric:
      return kExitNumeric;
  }
  return kExitUsage;
}

namespace detail
{

inline std::vector<std::string> provenance(const std::string & hash)
{
  return {std::string("trajflow ") + kToolVersion, "config " + hash};
}

inline void write_provenance(std::ostream & out, const std::string & hash)
{
  for (const auto & line : provenance(hash)) {
    out << "# " << line << '\n';
  }
}

inline std::ofstream open_output(const std::filesystem::path & path)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot open '" + path.string() + "' for writing");
  }
  return out;
}

inline Dataset load_checked(const std::string & path, DatasetFormat format, std::optional<double> scale)
{
  if (path.empty()) {
    throw ConfigError("no dataset path given", "data.train");
  }
  if (!std::filesystem::exists(path)) {
    throw DataError("dataset '" + path + "' does not exist");
  }
  return load_dataset(path, format, {scale});
}

inline std::string checkpoint_hash(const FlowModel & m)
{
  const auto it = m.metadata.find("config_hash");
  return it == m.metadata.end() ? std::string("none") : it->second;
}

inline std::string fixed_or_dash(double v, int digits)
{
  return std::isfinite(v) ? format_fixed(v, digits) : std::string("-");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// train

struct TrainRequest
{
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool quiet = false;
};

/// Trains from a config file. Writes config.ini, best.ckpt, final.ckpt and
/// history.csv into the output directory.
inline int cmd_train(const TrainRequest & req, std::ostream & log)
{
  RunConfig cfg = load_config(req.config_path);
  if (req.seed) {
    cfg.train.seed = *req.seed;
  }
  if (req.out_dir) {
    cfg.output_dir = *req.out_dir;
  }
  const std::string hash = config_hash(cfg);

  const Dataset train_ds = detail::load_checked(cfg.train_path, cfg.format, cfg.scale);
  auto train_windows = window_trajectories(train_ds.trajectories, cfg.window, WindowMode::kTraining);
  std::vector<TrajectoryWindow> val_windows;
  if (!cfg.val_path.empty()) {
    const Dataset val_ds = detail::load_checked(cfg.val_path, cfg.format, cfg.scale);
    val_windows = window_trajectories(val_ds.trajectories, cfg.window, WindowMode::kTraining);
  } else {
    auto split = split_train_val(train_windows, cfg.train.validation_fraction, cfg.train.seed);
    train_windows = std::move(split.first);
    val_windows = std::move(split.second);
  }
  if (train_windows.empty()) {
    throw DataError("dataset is empty after windowing (no trajectory spans t_obs + t_pred frames)");
  }
  log << "train windows " << train_windows.size() << ", validation windows " << val_windows.size();
  if (!train_ds.dropped.empty()) {
    log << ", dropped agents " << train_ds.dropped.size();
  }
  log << '\n';

  const std::filesystem::path out_dir(cfg.output_dir);
  std::filesystem::create_directories(out_dir);
  {
    auto out = detail::open_output(out_dir / "config.ini");
    detail::write_provenance(out, hash);
    out << write_config(cfg);
  }

  const NoiseConfig noise = cfg.effective_noise();
  FlowModel model = FlowModel::create(cfg.flow_config(), cfg.train.seed, noise.alpha);
  model.metadata = {
    {"tool_version", kToolVersion}, {"config_hash", hash}, {"seed", std::to_string(cfg.train.seed)}};

  if (cfg.train.epochs == 0) {
    save_checkpoint(model, (out_dir / "best.ckpt").string());
    save_checkpoint(model, (out_dir / "final.ckpt").string());
    log << "epochs = 0: wrote the initialized model\n";
    return kExitOk;
  }

  FitOptions opts;
  opts.augment = cfg.effective_augment();
  opts.on_epoch = [&](const EpochRecord & r) {
    if (!req.quiet) {
      log << "epoch " << r.epoch << " train_nll " << format_fixed(r.train_nll, 4) << " val_nll "
          << detail::fixed_or_dash(r.val_nll, 4) << '\n';
    }
    return true;
  };
  FitResult result = fit(train_windows, val_windows, model, cfg.train, noise, opts);

  result.best.metadata = model.metadata;
  result.best.metadata["epoch"] = std::to_string(result.best_epoch);
  result.final_model.metadata = model.metadata;
  result.final_model.metadata["epoch"] = std::to_string(result.history.size());
  save_checkpoint(result.best, (out_dir / "best.ckpt").string());
  save_checkpoint(result.final_model, (out_dir / "final.ckpt").string());
  {
    auto out = detail::open_output(out_dir / "history.csv");
    write_history(out, result.history, detail::provenance(hash));
  }
  if (result.diverged) {
    log << "training diverged after " << result.history.size()
        << " epochs: " << result.divergence_message << "; kept the last good model\n";
    return kExitNumeric;
  }
  log << "best epoch " << result.best_epoch << ", checkpoints in " << out_dir.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// predict

struct PredictRequest
{
  std::string checkpoint;
  std::string windows_path;
  std::size_t samples = 20;
  std::optional<std::size_t> top_k;
  std::uint64_t seed = 0;
  std::optional<std::string> out_path;
};

/// Samples futures for every window in a window file (see write_windows).
/// Rows: window agent_id start_frame rank log_likelihood x1 y1 ... xT yT, most
/// likely first within each window.
inline int cmd_predict(const PredictRequest & req, std::ostream & stdout_stream)
{
  if (req.samples == 0) {
    throw ConfigError("sample count must be positive", "--samples");
  }
  const std::size_t keep = req.top_k.value_or(req.samples);
  if (keep == 0 || keep > req.samples) {
    throw ConfigError("top-k must be in [1, samples]", "--top-k");
  }
  const FlowModel model = load_checkpoint(req.checkpoint);
  std::ifstream in(req.windows_path);
  if (!in) {
    throw DataError("cannot open window file '" + req.windows_path + "'");
  }
  const auto windows = read_windows(in);
  if (windows.empty()) {
    throw DataError("window file '" + req.windows_path + "' holds no windows");
  }

  std::ofstream file;
  if (req.out_path) {
    file = detail::open_output(*req.out_path);
  }
  std::ostream & out = req.out_path ? static_cast<std::ostream &>(file) : stdout_stream;
  detail::write_provenance(out, detail::checkpoint_hash(model));
  out << "# seed " << req.seed << " samples " << req.samples << " kept " << keep << '\n';
  out << "# window agent_id start_frame rank log_likelihood x1 y1 ... xT yT\n";
  nn::Rng rng(req.seed);
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const auto ps = top_k_predict(model, windows[w], req.samples, keep, rng);
    for (std::size_t r = 0; r < ps.samples.size(); ++r) {
      out << w << ' ' << windows[w].agent_id << ' ' << windows[w].start_frame << ' ' << r + 1 << ' '
          << format_double(ps.log_likelihoods[r]);
      for (const Vec2 & p : ps.samples[r]) {
        out << ' ' << format_double(p.x()) << ' ' << format_double(p.y());
      }
      out << '\n';
    }
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// evaluate

struct EvaluateRequest
{
  std::string checkpoint;
  std::vector<std::string> datasets;  // one scene per file
  std::optional<std::string> format;
  std::optional<std::string> config_path;
  std::optional<std::size_t> samples;
  std::uint64_t seed = 0;
  std::optional<std::string> out_dir;
};

/// Writes a fixed-width scene table of minADE/minFDE and oracle errors.
inline void write_metrics_report(
  std::ostream & out, const std::vector<SceneMetrics> & scenes, const EvaluationOptions & opts)
{
  auto average = [&](auto field) {
    double s = 0.0;
    for (const auto & m : scenes) {
      s += field(m);
    }
    return s / static_cast<double>(scenes.size());
  };
  out << "# samples " << opts.n_samples << ", candidates " << std::max(opts.n_candidates, opts.n_samples)
      << '\n';
  out << std::left << std::setw(16) << "scene" << std::right << std::setw(9) << "windows" << std::setw(10)
      << "minADE" << std::setw(10) << "minFDE" << '\n';
  for (const auto & m : scenes) {
    out << std::left << std::setw(16) << m.scene << std::right << std::setw(9) << m.windows << std::setw(10)
        << format_fixed(m.min_ade, 4) << std::setw(10) << format_fixed(m.min_fde, 4) << '\n';
  }
  std::size_t total = 0;
  for (const auto & m : scenes) {
    total += m.windows;
  }
  out << std::left << std::setw(16) << "average" << std::right << std::setw(9) << total << std::setw(10)
      << format_fixed(average([](const SceneMetrics & m) { return m.min_ade; }), 4) << std::setw(10)
      << format_fixed(average([](const SceneMetrics & m) { return m.min_fde; }), 4) << "\n\n";

  out << "# oracle top " << format_double(opts.oracle_fraction * 100.0) << "% ("
      << (opts.oracle_selection == OracleSelection::kPerStep ? "per-step" : "whole-track")
      << " selection)\n";
  out << std::left << std::setw(16) << "scene" << std::right;
  for (double s : opts.oracle_seconds) {
    out << std::setw(10) << (format_double(s) + "s");
  }
  out << '\n';
  for (const auto & m : scenes) {
    out << std::left << std::setw(16) << m.scene << std::right;
    for (const auto & o : m.oracle) {
      out << std::setw(10) << detail::fixed_or_dash(o.error, 4);
    }
    out << '\n';
  }
  out << std::left << std::setw(16) << "average" << std::right;
  for (std::size_t j = 0; j < opts.oracle_seconds.size(); ++j) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto & m : scenes) {
      if (std::isfinite(m.oracle[j].error)) {
        s += m.oracle[j].error;
        ++n;
      }
    }
    out << std::setw(10)
        << detail::fixed_or_dash(n ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN(), 4);
  }
  out << '\n';
}

inline void write_rank_curve(std::ostream & out, const std::vector<SceneMetrics> & scenes)
{
  out << "scene,rank,mean_ade,mean_fde\n";
  for (const auto & m : scenes) {
    for (const auto & r : m.rank_curve) {
      out << m.scene << ',' << r.rank << ',' << format_double(r.mean_ade) << ',' << format_double(r.mean_fde)
          << '\n';
    }
  }
}

/// Evaluates a checkpoint on one or more scenes; writes metrics.txt and
/// rank_curve.csv when an output directory is given, and prints the report.
inline int cmd_evaluate(const EvaluateRequest & req, std::ostream & log)
{
  const FlowModel model = load_checkpoint(req.checkpoint);
  RunConfig cfg;
  cfg.window.t_pred = model.config.dim / 2;
  std::string hash = detail::checkpoint_hash(model);
  if (req.config_path) {
    cfg = load_config(*req.config_path);
    if (cfg.window.t_pred * 2 != model.config.dim) {
      throw ConfigError("prediction horizon does not match the checkpoint", "data.t_pred");
    }
    hash = config_hash(cfg);
  }
  if (req.samples) {
    cfg.eval.n_samples = *req.samples;
    if (cfg.eval.n_samples == 0) {
      throw ConfigError("sample count must be positive", "--samples");
    }
    if (cfg.eval.n_candidates != 0 && cfg.eval.n_candidates < cfg.eval.n_samples) {
      cfg.eval.n_candidates = 0;
    }
  }
  const DatasetFormat format = req.format ? parse_dataset_format(*req.format) : cfg.format;
  std::vector<std::string> paths = req.datasets;
  if (paths.empty() && !cfg.test_path.empty()) {
    paths.push_back(cfg.test_path);
  }
  if (paths.empty()) {
    throw ConfigError("no evaluation dataset given", "--dataset");
  }

  nn::Rng rng(req.seed);
  std::vector<SceneMetrics> scenes;
  for (const auto & path : paths) {
    const Dataset ds = detail::load_checked(path, format, cfg.scale);
    const auto windows = window_trajectories(ds.trajectories, cfg.window, WindowMode::kEvaluation);
    if (windows.empty()) {
      throw DataError("dataset '" + path + "' yields no evaluation windows");
    }
    scenes.push_back(evaluate_windows(model, windows, cfg.eval, rng, std::filesystem::path(path).stem().string()));
  }

  detail::write_provenance(log, hash);
  write_metrics_report(log, scenes, cfg.eval);
  if (req.out_dir) {
    const std::filesystem::path dir(*req.out_dir);
    std::filesystem::create_directories(dir);
    auto report = detail::open_output(dir / "metrics.txt");
    detail::write_provenance(report, hash);
    report << "# seed " << req.seed << '\n';
    write_metrics_report(report, scenes, cfg.eval);
    auto curve = detail::open_output(dir / "rank_curve.csv");
    detail::write_provenance(curve, hash);
    write_rank_curve(curve, scenes);
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckRequest
{
  std::optional<std::string> config_path;
  std::uint64_t seed = 0;
  double tolerance = 1e-3;
  std::size_t batch = 4;
};

/// Builds a small model (dim 4, two coupling layers, full encoder) with random
/// non-identity splines and checks every parameter gradient.
inline int cmd_gradcheck(const GradcheckRequest & req, std::ostream & log)
{
  RunConfig cfg;
  std::string hash = "none";
  if (req.config_path) {
    cfg = load_config(*req.config_path);
    hash = config_hash(cfg);
  }
  FlowConfig fc;
  fc.dim = 4;
  fc.n_layers = 2;
  fc.k_bins = cfg.k_bins;
  fc.support_b = cfg.support_b;
  fc.cond_dim = static_cast<std::size_t>(kEncoderHidden);
  fc.conditioner_hidden = 16;
  fc.conditioner_depth = 2;
  const NoiseConfig noise = cfg.effective_noise();
  const FlowModel model = FlowModel::create(fc, req.seed, noise.alpha, {1.0, false});

  // curved walks: 6 observed positions (5 displacements), 2 future
  std::mt19937_64 data_rng(req.seed + 1);
  std::normal_distribution<double> normal(0.0, 1.0);
  nn::Rng noise_rng(req.seed + 2);
  std::vector<TrainingExample> batch;
  std::vector<Eigen::VectorXd> targets;
  for (std::size_t i = 0; i < req.batch; ++i) {
    std::vector<Vec2> pts;
    Vec2 p(normal(data_rng), normal(data_rng));
    Vec2 v(0.4 + 0.1 * normal(data_rng), 0.1 * normal(data_rng));
    const double turn = 0.2 * normal(data_rng);
    for (int t = 0; t < 8; ++t) {
      pts.push_back(p);
      p += v;
      v = rotate(v, turn);
    }
    const auto w = make_window({pts.begin(), pts.begin() + 6}, {pts.begin() + 6, pts.end()});
    batch.push_back(make_example(w));
    targets.push_back(inject_noise(batch.back().future_rel, noise, noise_rng));
  }

  const auto report = grad_check(model, batch, targets, req.tolerance);
  detail::write_provenance(log, hash);
  log << std::left << std::setw(36) << "parameter" << std::right << std::setw(8) << "count" << std::setw(14)
      << "max_rel_err" << std::setw(14) << "max_|grad|" << '\n';
  for (const auto & g : report.groups) {
    log << std::left << std::setw(36) << g.name << std::right << std::setw(8) << g.count << std::setw(14)
        << std::scientific << std::setprecision(3) << g.max_rel_error << std::setw(14) << g.max_abs_gradient
        << std::defaultfloat << '\n';
  }
  log << "max relative error " << std::scientific << std::setprecision(3) << report.max_rel_error
      << " tolerance " << report.tolerance << std::defaultfloat << ": " << (report.passed ? "PASS" : "FAIL")
      << '\n';
  return report.passed ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------------------
// inspect

inline int cmd_inspect(const std::string & checkpoint, std::ostream & out)
{
  const FlowModel m = load_checkpoint(checkpoint);
  out << "checkpoint " << checkpoint << '\n';
  for (const auto & [k, v] : m.metadata) {
    out << "  " << k << " = " << v << '\n';
  }
  const auto & c = m.config;
  out << "dim " << c.dim << ", layers " << c.n_layers << ", bins " << c.k_bins << ", support "
      << format_double(c.support_b) << ", conditioner " << c.conditioner_depth << " x " << c.conditioner_hidden
      << ", condition " << c.cond_dim << ", alpha " << format_double(m.alpha) << '\n';
  std::size_t total = 0;
  for (const auto & p : nn::params_of(m)) {
    out << "  " << std::left << std::setw(36) << p.name << std::right << std::setw(6) << p.rows << " x "
        << std::left << std::setw(6) << p.cols << std::right << '\n';
    total += p.size();
  }
  out << "parameters " << total << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// windows

struct WindowsRequest
{
  std::string dataset;
  std::optional<std::string> format;
  std::optional<std::string> config_path;
  bool evaluation_mode = true;
  std::optional<std::string> out_path;
};

/// Slices a dataset into the window file read by predict.
inline int cmd_windows(const WindowsRequest & req, std::ostream & stdout_stream)
{
  RunConfig cfg;
  std::string hash = "none";
  if (req.config_path) {
    cfg = load_config(*req.config_path);
    hash = config_hash(cfg);
  }
  const DatasetFormat format = req.format ? parse_dataset_format(*req.format) : cfg.format;
  const Dataset ds = detail::load_checked(req.dataset, format, cfg.scale);
  const auto windows = window_trajectories(
    ds.trajectories, cfg.window, req.evaluation_mode ? WindowMode::kEvaluation : WindowMode::kTraining);
  std::ofstream file;
  if (req.out_path) {
    file = detail::open_output(*req.out_path);
  }
  std::ostream & out = req.out_path ? static_cast<std::ostream &>(file) : stdout_stream;
  detail::write_provenance(out, hash);
  write_windows(out, windows);
  return kExitOk;
}

}  // namespace trajflow::cli

#endif  // TRAJFLOW__COMMANDS_HPP_
