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

#ifndef TRAJFLOW__DATA_HPP_
#define TRAJFLOW__DATA_HPP_

#include "trajflow/encoder.hpp"
#include "trajflow/error.hpp"
#include "trajflow/format.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace trajflow
{

struct Trajectory
{
  std::int64_t agent_id = 0;
  std::vector<std::int64_t> frames;
  std::vector<Vec2> positions;
};

enum class DatasetFormat { kEthUcyText, kDroneText };

inline DatasetFormat parse_dataset_format(std::string_view name)
{
  if (name == "eth-ucy-text") {
    return DatasetFormat::kEthUcyText;
  }
  if (name == "drone-text") {
    return DatasetFormat::kDroneText;
  }
  throw InvalidInputError("unknown dataset format '" + std::string(name) + "'");
}

inline const char * to_string(DatasetFormat f)
{
  return f == DatasetFormat::kEthUcyText ? "eth-ucy-text" : "drone-text";
}

/// Positions are multiplied by `scale`; drone-style data defaults to 1/5.
struct LoadOptions
{
  std::optional<double> scale;
};

inline double default_scale(DatasetFormat f) { return f == DatasetFormat::kDroneText ? 0.2 : 1.0; }

struct DroppedAgent
{
  std::int64_t agent_id;
  std::string reason;
};

struct Dataset
{
  std::vector<Trajectory> trajectories;
  std::vector<DroppedAgent> dropped;
};

namespace detail
{

inline bool parse_integral(std::string_view tok, std::int64_t & out)
{
  const std::string s(tok);
  char * end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v) || v != std::floor(v)) {
    return false;
  }
  out = static_cast<std::int64_t>(v);
  return true;
}

inline bool parse_real(std::string_view tok, double & out)
{
  const std::string s(tok);
  char * end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

}  // namespace detail

/// Rows of `frame_id agent_id x y`, whitespace separated; `#` starts a comment.
inline Dataset parse_dataset(std::istream & in, DatasetFormat format, const LoadOptions & opts = {})
{
  const double scale = opts.scale.value_or(default_scale(format));
  std::map<std::int64_t, std::vector<std::pair<std::int64_t, Vec2>>> by_agent;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) {
      tok.push_back(t);
    }
    if (tok.empty()) {
      continue;
    }
    if (tok.size() != 4) {
      throw ParseError("expected 4 fields (frame agent x y), got " + std::to_string(tok.size()), line_no);
    }
    std::int64_t frame = 0;
    std::int64_t agent = 0;
    double x = 0.0;
    double y = 0.0;
    if (!detail::parse_integral(tok[0], frame)) {
      throw ParseError("frame id '" + tok[0] + "' is not an integer", line_no);
    }
    if (!detail::parse_integral(tok[1], agent)) {
      throw ParseError("agent id '" + tok[1] + "' is not an integer", line_no);
    }
    if (!detail::parse_real(tok[2], x) || !detail::parse_real(tok[3], y)) {
      throw ParseError("position is not a finite number", line_no);
    }
    by_agent[agent].emplace_back(frame, Vec2(x * scale, y * scale));
  }

  Dataset ds;
  for (auto & [agent, rows] : by_agent) {
    std::stable_sort(rows.begin(), rows.end(), [](const auto & a, const auto & b) {
      return a.first < b.first;
    });
    if (rows.size() < 2) {
      ds.dropped.push_back({agent, "fewer than two observations"});
      continue;
    }
    const std::int64_t stride = rows[1].first - rows[0].first;
    bool constant = stride > 0;
    for (std::size_t i = 2; constant && i < rows.size(); ++i) {
      constant = rows[i].first - rows[i - 1].first == stride;
    }
    if (!constant) {
      ds.dropped.push_back({agent, "non-constant frame stride"});
      continue;
    }
    Trajectory t;
    t.agent_id = agent;
    for (const auto & [frame, pos] : rows) {
      t.frames.push_back(frame);
      t.positions.push_back(pos);
    }
    ds.trajectories.push_back(std::move(t));
  }
  return ds;
}

inline Dataset load_dataset(const std::string & path, DatasetFormat format, const LoadOptions & opts = {})
{
  std::ifstream in(path);
  if (!in) {
    throw DataError("cannot open dataset '" + path + "'");
  }
  return parse_dataset(in, format, opts);
}

/// Writes trajectories as frame-ordered rows. Values are written with round-trip precision.
inline void write_dataset(std::ostream & out, const std::vector<Trajectory> & trajs)
{
  std::vector<std::tuple<std::int64_t, std::int64_t, Vec2>> rows;
  for (const auto & t : trajs) {
    for (std::size_t i = 0; i < t.positions.size(); ++i) {
      rows.emplace_back(t.frames[i], t.agent_id, t.positions[i]);
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto & a, const auto & b) {
    return std::get<0>(a) < std::get<0>(b);
  });
  for (const auto & [frame, agent, p] : rows) {
    out << frame << '\t' << agent << '\t' << format_double(p.x()) << '\t' << format_double(p.y())
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Windows

struct TrajectoryWindow
{
  std::int64_t agent_id = 0;
  std::int64_t start_frame = 0;
  std::vector<Vec2> observed_abs;
  std::vector<Vec2> future_abs;
  Vec2 anchor = Vec2::Zero();
  /// Angle by which positions were rotated (clockwise) about the anchor; rotate_back undoes it.
  double rotation = 0.0;
  std::vector<Vec2> observed_rel;
  std::vector<Vec2> future_rel;
};

/// Builds a window and its displacement forms, without rotation.
inline TrajectoryWindow make_window(
  std::vector<Vec2> observed, std::vector<Vec2> future, std::int64_t agent_id = 0,
  std::int64_t start_frame = 0)
{
  if (observed.size() < 2) {
    throw InvalidInputError("a window needs at least two observed positions");
  }
  TrajectoryWindow w;
  w.agent_id = agent_id;
  w.start_frame = start_frame;
  w.observed_abs = std::move(observed);
  w.future_abs = std::move(future);
  w.anchor = w.observed_abs.back();
  w.observed_rel = to_displacements(w.observed_abs);
  w.future_rel.clear();
  Vec2 prev = w.anchor;
  for (const Vec2 & p : w.future_abs) {
    w.future_rel.push_back(p - prev);
    prev = p;
  }
  return w;
}

struct WindowSpec
{
  std::size_t t_obs = 8;
  std::size_t t_pred = 12;
  std::size_t step = 1;
  std::size_t min_future = 2;
};

enum class WindowMode { kTraining, kEvaluation };

/// Slices trajectories into (observed, future) windows. Training mode emits full
/// windows only. Evaluation mode also emits one window starting at the first
/// frame for trajectories too short for a full window but with at least
/// min_future future steps.
inline std::vector<TrajectoryWindow> window_trajectories(
  const std::vector<Trajectory> & trajs, const WindowSpec & spec, WindowMode mode)
{
  if (spec.t_obs < 2 || spec.t_pred < 1 || spec.step < 1) {
    throw InvalidInputError("window spec needs t_obs >= 2, t_pred >= 1, step >= 1");
  }
  std::vector<TrajectoryWindow> out;
  const std::size_t full = spec.t_obs + spec.t_pred;
  for (const auto & t : trajs) {
    const std::size_t n = t.positions.size();
    auto emit = [&](std::size_t start, std::size_t fut_len) {
      std::vector<Vec2> obs(t.positions.begin() + start, t.positions.begin() + start + spec.t_obs);
      std::vector<Vec2> fut(
        t.positions.begin() + start + spec.t_obs,
        t.positions.begin() + start + spec.t_obs + fut_len);
      out.push_back(make_window(std::move(obs), std::move(fut), t.agent_id, t.frames[start]));
    };
    if (n >= full) {
      for (std::size_t s = 0; s + full <= n; s += spec.step) {
        emit(s, spec.t_pred);
      }
    } else if (mode == WindowMode::kEvaluation && n >= spec.t_obs + std::max<std::size_t>(1, spec.min_future)) {
      emit(0, n - spec.t_obs);
    }
  }
  return out;
}

inline Vec2 rotate(const Vec2 & v, double angle)
{
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y()};
}

/// Applies the inverse normalization rotation about the anchor.
inline std::vector<Vec2> rotate_back(std::span<const Vec2> positions, double rotation, const Vec2 & anchor)
{
  std::vector<Vec2> out;
  out.reserve(positions.size());
  for (const Vec2 & p : positions) {
    out.push_back(anchor + rotate(p - anchor, rotation));
  }
  return out;
}

/// Rotates the window about its anchor so the last observed displacement points
/// along +x. A zero last displacement leaves the window unrotated.
inline TrajectoryWindow rotation_normalize(const TrajectoryWindow & w)
{
  const Vec2 last = w.observed_rel.back();
  const double angle = last.squaredNorm() > 0.0 ? std::atan2(last.y(), last.x()) : 0.0;
  if (angle == 0.0) {
    return w;
  }
  auto turn = [&](const std::vector<Vec2> & pts) {
    std::vector<Vec2> out;
    out.reserve(pts.size());
    for (const Vec2 & p : pts) {
      out.push_back(w.anchor + rotate(p - w.anchor, -angle));
    }
    return out;
  };
  TrajectoryWindow r = make_window(turn(w.observed_abs), turn(w.future_abs), w.agent_id, w.start_frame);
  r.anchor = w.anchor;
  r.rotation = w.rotation + angle;
  return r;
}

/// Interleaved (dx0, dy0, dx1, dy1, ...) flow vector.
inline Eigen::VectorXd flatten(std::span<const Vec2> displacements)
{
  Eigen::VectorXd v(static_cast<Eigen::Index>(2 * displacements.size()));
  for (std::size_t t = 0; t < displacements.size(); ++t) {
    v[static_cast<Eigen::Index>(2 * t)] = displacements[t].x();
    v[static_cast<Eigen::Index>(2 * t + 1)] = displacements[t].y();
  }
  return v;
}

inline std::vector<Vec2> unflatten(const Eigen::VectorXd & v)
{
  if (v.size() % 2 != 0) {
    throw InvalidInputError("displacement vector must have even length");
  }
  std::vector<Vec2> out;
  for (Eigen::Index i = 0; i < v.size(); i += 2) {
    out.emplace_back(v[i], v[i + 1]);
  }
  return out;
}

/// Cumulative sum of predicted displacements from the anchor, then undo rotation.
inline std::vector<Vec2> decode_prediction(const Eigen::VectorXd & z_rel, const Vec2 & anchor, double rotation)
{
  const auto steps = unflatten(z_rel);
  std::vector<Vec2> pts;
  pts.reserve(steps.size());
  Vec2 cur = anchor;
  for (const Vec2 & d : steps) {
    cur += d;
    pts.push_back(cur);
  }
  return rotate_back(pts, rotation, anchor);
}

// ---------------------------------------------------------------------------
// Scaling augmentation

struct AugmentConfig
{
  double mu = 1.0;
  double sigma = 0.5;
  double s_min = 0.3;
  double s_max = 1.7;

  void validate() const
  {
    if (!(s_min <= mu && mu <= s_max) || !(sigma >= 0.0)) {
      throw InvalidInputError("augmentation needs s_min <= mu <= s_max and sigma >= 0");
    }
  }
};

/// Truncated normal on [s_min, s_max] by rejection from the untruncated normal.
inline double sample_scale(const AugmentConfig & cfg, std::mt19937_64 & rng)
{
  cfg.validate();
  if (cfg.sigma == 0.0 || cfg.s_min == cfg.s_max) {
    return std::clamp(cfg.mu, cfg.s_min, cfg.s_max);
  }
  std::normal_distribution<double> normal(cfg.mu, cfg.sigma);
  for (;;) {
    const double s = normal(rng);
    if (s >= cfg.s_min && s <= cfg.s_max) {
      return s;
    }
  }
}

inline Vec2 mean_position(std::span<const Vec2> positions)
{
  Vec2 m = Vec2::Zero();
  for (const Vec2 & p : positions) {
    m += p;
  }
  return m / static_cast<double>(positions.size());
}

/// mean + s * (p - mean) for every position.
inline std::vector<Vec2> scale_about_mean(std::span<const Vec2> positions, double s)
{
  const Vec2 m = mean_position(positions);
  std::vector<Vec2> out;
  out.reserve(positions.size());
  for (const Vec2 & p : positions) {
    out.push_back(m + s * (p - m));
  }
  return out;
}

inline std::vector<Vec2> scale_augment(
  std::span<const Vec2> positions, const AugmentConfig & cfg, std::mt19937_64 & rng)
{
  return scale_about_mean(positions, sample_scale(cfg, rng));
}

/// Scales a whole (observed + future) window about its mean position.
inline TrajectoryWindow scale_window(const TrajectoryWindow & w, double s)
{
  std::vector<Vec2> all = w.observed_abs;
  all.insert(all.end(), w.future_abs.begin(), w.future_abs.end());
  const auto scaled = scale_about_mean(all, s);
  const auto obs_n = static_cast<std::ptrdiff_t>(w.observed_abs.size());
  return make_window(
    std::vector<Vec2>(scaled.begin(), scaled.begin() + obs_n),
    std::vector<Vec2>(scaled.begin() + obs_n, scaled.end()), w.agent_id, w.start_frame);
}

// ---------------------------------------------------------------------------
// Splitting

template <class T>
std::pair<std::vector<T>, std::vector<T>> split_train_val(
  const std::vector<T> & items, double fraction, std::uint64_t seed)
{
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw InvalidInputError("validation fraction must be in [0, 1]");
  }
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(items.size())));
  std::pair<std::vector<T>, std::vector<T>> out;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    (i < n_val ? out.second : out.first).push_back(items[idx[i]]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Window cache text format, one window per row:
//   agent_id start_frame n_obs n_future anchor_x anchor_y rotation
//   obs_x0 obs_y0 ... fut_x0 fut_y0 ...
// Positions are absolute in the original frame. Lines starting with '#' are comments.

inline void write_windows(std::ostream & out, const std::vector<TrajectoryWindow> & windows)
{
  out << "# agent_id start_frame n_obs n_future anchor_x anchor_y rotation obs_xy... future_xy...\n";
  for (const auto & w0 : windows) {
    // stored unrotated so the row is self-contained
    const bool turned = w0.rotation != 0.0;
    const auto obs = turned ? rotate_back(w0.observed_abs, w0.rotation, w0.anchor) : w0.observed_abs;
    const auto fut = turned ? rotate_back(w0.future_abs, w0.rotation, w0.anchor) : w0.future_abs;
    out << w0.agent_id << ' ' << w0.start_frame << ' ' << obs.size() << ' ' << fut.size() << ' '
        << format_double(w0.anchor.x()) << ' ' << format_double(w0.anchor.y()) << ' '
        << format_double(w0.rotation);
    for (const auto * pts : {&obs, &fut}) {
      for (const Vec2 & p : *pts) {
        out << ' ' << format_double(p.x()) << ' ' << format_double(p.y());
      }
    }
    out << '\n';
  }
}

inline std::vector<TrajectoryWindow> read_windows(std::istream & in)
{
  std::vector<TrajectoryWindow> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) {
      line.erase(hash);
    }
    std::istringstream fields(line);
    std::vector<std::string> tok;
    for (std::string t; fields >> t;) {
      tok.push_back(t);
    }
    if (tok.empty()) {
      continue;
    }
    std::int64_t agent = 0;
    std::int64_t start = 0;
    std::int64_t n_obs = 0;
    std::int64_t n_fut = 0;
    if (tok.size() < 7 || !detail::parse_integral(tok[0], agent) ||
      !detail::parse_integral(tok[1], start) || !detail::parse_integral(tok[2], n_obs) ||
      !detail::parse_integral(tok[3], n_fut) || n_obs < 2 || n_fut < 0)
    {
      throw ParseError("malformed window header", line_no);
    }
    if (tok.size() != static_cast<std::size_t>(7 + 2 * (n_obs + n_fut))) {
      throw ParseError("window row has wrong number of coordinates", line_no);
    }
    std::vector<Vec2> pts;
    for (std::size_t i = 7; i < tok.size(); i += 2) {
      double x = 0.0;
      double y = 0.0;
      if (!detail::parse_real(tok[i], x) || !detail::parse_real(tok[i + 1], y)) {
        throw ParseError("window coordinate is not a finite number", line_no);
      }
      pts.emplace_back(x, y);
    }
    const auto split = static_cast<std::ptrdiff_t>(n_obs);
    out.push_back(make_window(
      std::vector<Vec2>(pts.begin(), pts.begin() + split), std::vector<Vec2>(pts.begin() + split, pts.end()),
      agent, start));
  }
  return out;
}

}  // namespace trajflow

#endif  // TRAJFLOW__DATA_HPP_
