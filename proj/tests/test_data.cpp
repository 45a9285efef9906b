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

#include "trajflow/data.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace trajflow;

namespace
{

Trajectory line_track(std::int64_t agent, std::size_t n, const Vec2 & start, const Vec2 & step)
{
  Trajectory t;
  t.agent_id = agent;
  for (std::size_t i = 0; i < n; ++i) {
    t.frames.push_back(static_cast<std::int64_t>(10 * i));
    t.positions.push_back(start + static_cast<double>(i) * step);
  }
  return t;
}

Dataset parse(const std::string & text, DatasetFormat f = DatasetFormat::kEthUcyText, LoadOptions o = {})
{
  std::istringstream in(text);
  return parse_dataset(in, f, o);
}

}  // namespace

TEST(LoadDataset, EmptyInputGivesNoTrajectories)
{
  EXPECT_TRUE(parse("").trajectories.empty());
  EXPECT_TRUE(parse("# only a comment\n\n").trajectories.empty());
}

TEST(LoadDataset, InterleavedAgentsAreSplitAndFrameSorted)
{
  const auto ds = parse(
    "20 1 2.0 0.0\n"
    "0 2 5.0 5.0\n"
    "0 1 0.0 0.0\n"
    "10 2 5.0 6.0\n"
    "10 1 1.0 0.0\n");
  ASSERT_EQ(ds.trajectories.size(), 2u);
  const auto & a = ds.trajectories[0];
  EXPECT_EQ(a.agent_id, 1);
  EXPECT_EQ(a.frames, (std::vector<std::int64_t>{0, 10, 20}));
  EXPECT_EQ(a.positions[2], Vec2(2.0, 0.0));
  EXPECT_EQ(ds.trajectories[1].frames, (std::vector<std::int64_t>{0, 10}));
}

TEST(LoadDataset, MalformedRowReportsLine)
{
  try {
    parse("0 1 0 0\n10 1 abc 0\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError & e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse("0 1 0\n"), ParseError);
  EXPECT_THROW(parse("0 1 0 nan\n"), ParseError);
}

TEST(LoadDataset, DropsShortAndIrregularAgents)
{
  const auto ds = parse(
    "0 1 0 0\n"
    "0 2 0 0\n10 2 1 0\n30 2 2 0\n"
    "0 3 0 0\n10 3 1 0\n");
  ASSERT_EQ(ds.trajectories.size(), 1u);
  EXPECT_EQ(ds.trajectories[0].agent_id, 3);
  ASSERT_EQ(ds.dropped.size(), 2u);
  EXPECT_EQ(ds.dropped[0].agent_id, 1);
  EXPECT_EQ(ds.dropped[1].agent_id, 2);
}

TEST(LoadDataset, WriteThenLoadPreservesRows)
{
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 7.0);
  std::vector<Trajectory> trajs;
  for (std::int64_t a = 0; a < 5; ++a) {
    Trajectory t;
    t.agent_id = a * 3 + 1;
    for (int i = 0; i < 12; ++i) {
      t.frames.push_back(100 + 4 * i);
      t.positions.emplace_back(normal(rng), normal(rng));
    }
    trajs.push_back(t);
  }
  std::stringstream buf;
  write_dataset(buf, trajs);
  const auto back = parse_dataset(buf, DatasetFormat::kEthUcyText);
  ASSERT_EQ(back.trajectories.size(), trajs.size());
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    EXPECT_EQ(back.trajectories[i].agent_id, trajs[i].agent_id);
    EXPECT_EQ(back.trajectories[i].frames, trajs[i].frames);
    EXPECT_EQ(back.trajectories[i].positions, trajs[i].positions);
  }
}

TEST(LoadDataset, DroneScaleIsAppliedAtLoadTime)
{
  const std::string text = "0 1 5.0 -10.0\n1 1 7.5 2.5\n";
  const auto drone = parse(text, DatasetFormat::kDroneText);
  EXPECT_EQ(drone.trajectories[0].positions[0], Vec2(5.0 * 0.2, -10.0 * 0.2));
  EXPECT_NEAR(drone.trajectories[0].positions[1].x(), 7.5 / 5.0, 1e-15);
  const auto unit = parse(text, DatasetFormat::kDroneText, {1.0});
  EXPECT_EQ(unit.trajectories[0].positions[1], Vec2(7.5, 2.5));
  // rescaling an already scaled file scales again
  std::stringstream buf;
  write_dataset(buf, drone.trajectories);
  const auto twice = parse_dataset(buf, DatasetFormat::kDroneText);
  EXPECT_NE(twice.trajectories[0].positions[0], drone.trajectories[0].positions[0]);
  EXPECT_EQ(parse_dataset_format("drone-text"), DatasetFormat::kDroneText);
  EXPECT_THROW(parse_dataset_format("csv"), InvalidInputError);
}

TEST(Windows, FullWindowCounts)
{
  WindowSpec spec;
  const auto w22 = window_trajectories({line_track(1, 22, {0, 0}, {1, 0})}, spec, WindowMode::kTraining);
  ASSERT_EQ(w22.size(), 3u);
  EXPECT_EQ(w22[1].start_frame, 10);
  EXPECT_EQ(w22[2].observed_abs.front(), Vec2(2, 0));
  EXPECT_EQ(w22[2].future_abs.back(), Vec2(21, 0));
  EXPECT_TRUE(window_trajectories({line_track(1, 19, {0, 0}, {1, 0})}, spec, WindowMode::kTraining).empty());
  spec.step = 2;
  EXPECT_EQ(window_trajectories({line_track(1, 25, {0, 0}, {1, 0})}, spec, WindowMode::kTraining).size(), 3u);
}

TEST(Windows, EvaluationModeKeepsShortTracks)
{
  WindowSpec spec;
  const auto w = window_trajectories({line_track(1, 10, {0, 0}, {0, 1})}, spec, WindowMode::kEvaluation);
  ASSERT_EQ(w.size(), 1u);
  EXPECT_EQ(w[0].observed_abs.size(), 8u);
  EXPECT_EQ(w[0].future_abs.size(), 2u);
  EXPECT_TRUE(window_trajectories({line_track(1, 9, {0, 0}, {0, 1})}, spec, WindowMode::kEvaluation).empty());
  EXPECT_EQ(window_trajectories({line_track(1, 23, {0, 0}, {0, 1})}, spec, WindowMode::kEvaluation).size(), 4u);
}

TEST(Windows, RelativeFormsMatchPositions)
{
  const auto w = make_window({{0, 0}, {1, 0}, {1, 1}}, {{2, 1}, {2, 3}});
  EXPECT_EQ(w.anchor, Vec2(1, 1));
  EXPECT_EQ(w.observed_rel, (std::vector<Vec2>{{1, 0}, {0, 1}}));
  EXPECT_EQ(w.future_rel, (std::vector<Vec2>{{1, 0}, {0, 2}}));
}

TEST(Rotation, LastDisplacementAlignedWithX)
{
  const auto w = make_window({{0, 0}, {1, 0}, {1, 2}}, {{1, 3}, {0, 3}});
  const auto r = rotation_normalize(w);
  EXPECT_NEAR(r.observed_rel.back().x(), 2.0, 1e-12);
  EXPECT_NEAR(r.observed_rel.back().y(), 0.0, 1e-12);
  EXPECT_NEAR(r.rotation, std::numbers::pi / 2, 1e-15);
  EXPECT_EQ(r.anchor, w.anchor);
  for (std::size_t i = 0; i < w.future_abs.size(); ++i) {
    EXPECT_NEAR((r.future_abs[i] - r.anchor).norm(), (w.future_abs[i] - w.anchor).norm(), 1e-12);
  }
}

TEST(Rotation, AlignedWindowUnchanged)
{
  const auto w = make_window({{0, 0}, {1, 1}, {4, 1}}, {{5, 2}});
  const auto r = rotation_normalize(w);
  EXPECT_EQ(r.rotation, 0.0);
  EXPECT_EQ(r.observed_abs, w.observed_abs);
  EXPECT_EQ(r.future_abs, w.future_abs);
}

TEST(Rotation, StationaryWindowUnchanged)
{
  const auto w = make_window({{3, 3}, {3, 3}}, {{4, 3}});
  EXPECT_EQ(rotation_normalize(w).rotation, 0.0);
}

TEST(Rotation, RotateBackComposesToIdentity)
{
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 3.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vec2> obs(8);
    std::vector<Vec2> fut(12);
    for (auto & p : obs) {
      p = Vec2(normal(rng), normal(rng));
    }
    for (auto & p : fut) {
      p = Vec2(normal(rng), normal(rng));
    }
    const auto w = make_window(obs, fut);
    const auto r = rotation_normalize(w);
    const auto back = rotate_back(r.future_abs, r.rotation, r.anchor);
    for (std::size_t i = 0; i < fut.size(); ++i) {
      EXPECT_LT((back[i] - fut[i]).norm(), 1e-12);
      EXPECT_NEAR((r.future_abs[i] - r.anchor).norm(), (fut[i] - w.anchor).norm(), 1e-12);
    }
  }
  const std::vector<Vec2> pts = {{1, 2}, {3, -4}};
  EXPECT_EQ(rotate_back(pts, 0.0, Vec2(5, 5)), pts);
}

TEST(Decode, CumulativeSumFromAnchor)
{
  Eigen::VectorXd z(4);
  z << 1, 0, 1, 0;
  const auto p = decode_prediction(z, Vec2::Zero(), 0.0);
  EXPECT_EQ(p, (std::vector<Vec2>{{1, 0}, {2, 0}}));
  const auto still = decode_prediction(Eigen::VectorXd::Zero(6), Vec2(4, -1), 1.3);
  for (const auto & q : still) {
    EXPECT_EQ(q, Vec2(4, -1));
  }
  const auto turned = decode_prediction(z, Vec2(1, 1), std::numbers::pi / 2);
  EXPECT_NEAR(turned[1].x(), 1.0, 1e-12);
  EXPECT_NEAR(turned[1].y(), 3.0, 1e-12);
  EXPECT_EQ(unflatten(flatten(p)), p);
}

TEST(Augment, UnitScaleAndMeanPreserved)
{
  const std::vector<Vec2> pts = {{0, 0}, {2, 1}, {4, 5}};
  EXPECT_EQ(scale_about_mean(pts, 1.0), pts);
  const auto s = scale_about_mean(pts, 0.5);
  EXPECT_LT((mean_position(s) - mean_position(pts)).norm(), 1e-12);
  const auto d0 = to_displacements(pts);
  const auto d1 = to_displacements(s);
  for (std::size_t i = 0; i < d0.size(); ++i) {
    EXPECT_LT((d1[i] - 0.5 * d0[i]).norm(), 1e-12);
  }
  std::mt19937_64 rng(3);
  EXPECT_EQ(scale_augment(pts, {1.0, 0.0, 1.0, 1.0}, rng), pts);
}

TEST(Augment, TruncatedNormalMoments)
{
  // Reference moments of N(1, 0.5^2) truncated to [0.3, 1.7] by numeric integration.
  const AugmentConfig cfg;
  double mass = 0.0;
  double first = 0.0;
  const int n = 20000;
  const double h = (cfg.s_max - cfg.s_min) / n;
  for (int i = 0; i < n; ++i) {
    const double s = cfg.s_min + (i + 0.5) * h;
    const double d = std::exp(-0.5 * std::pow((s - cfg.mu) / cfg.sigma, 2));
    mass += d;
    first += s * d;
  }
  const double mean_ref = first / mass;
  double second = 0.0;
  for (int i = 0; i < n; ++i) {
    const double s = cfg.s_min + (i + 0.5) * h;
    second += std::pow(s - mean_ref, 2) * std::exp(-0.5 * std::pow((s - cfg.mu) / cfg.sigma, 2));
  }
  const double sd_ref = std::sqrt(second / mass);

  std::mt19937_64 rng(4);
  const int draws = 200000;
  double sum = 0.0;
  double sq = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double s = sample_scale(cfg, rng);
    ASSERT_GE(s, cfg.s_min);
    ASSERT_LE(s, cfg.s_max);
    sum += s;
    sq += s * s;
  }
  const double mean = sum / draws;
  const double sd = std::sqrt(sq / draws - mean * mean);
  EXPECT_NEAR(mean, mean_ref, 5e-3);
  EXPECT_NEAR(sd, sd_ref, 0.02 * sd_ref);
}

TEST(Augment, ScaleWindowScalesDisplacements)
{
  const auto w = make_window({{0, 0}, {1, 0}, {2, 0}}, {{3, 1}, {4, 2}});
  const auto s = scale_window(w, 1.5);
  EXPECT_LT((s.future_rel[0] - 1.5 * w.future_rel[0]).norm(), 1e-12);
  EXPECT_LT((s.observed_rel[1] - 1.5 * w.observed_rel[1]).norm(), 1e-12);
}

TEST(Split, CountsAndDeterminism)
{
  std::vector<int> items(37);
  std::iota(items.begin(), items.end(), 0);
  const auto [tr0, va0] = split_train_val(items, 0.0, 1);
  EXPECT_TRUE(va0.empty());
  EXPECT_EQ(tr0.size(), 37u);
  const auto a = split_train_val(items, 0.1, 5);
  const auto b = split_train_val(items, 0.1, 5);
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.second.size(), static_cast<std::size_t>(std::llround(0.1 * 37)));
  std::set<int> all(a.first.begin(), a.first.end());
  all.insert(a.second.begin(), a.second.end());
  EXPECT_EQ(all.size(), 37u);
  EXPECT_THROW(split_train_val(items, 1.5, 1), InvalidInputError);
}

TEST(WindowCache, RoundTripKeepsOriginalFrame)
{
  const auto w0 = make_window({{0.1, 0.2}, {1.3, 0.7}, {1.9, 2.0}}, {{2.5, 3.0}}, 7, 40);
  const auto w1 = rotation_normalize(w0);
  std::stringstream buf;
  write_windows(buf, {w0, w1});
  const auto back = read_windows(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].observed_abs, w0.observed_abs);
  EXPECT_EQ(back[0].agent_id, 7);
  EXPECT_EQ(back[0].start_frame, 40);
  for (std::size_t i = 0; i < w0.observed_abs.size(); ++i) {
    EXPECT_LT((back[1].observed_abs[i] - w0.observed_abs[i]).norm(), 1e-12);
  }
  std::istringstream bad("1 2 3 1 0 0 0 1 2\n");
  EXPECT_THROW(read_windows(bad), ParseError);
}
