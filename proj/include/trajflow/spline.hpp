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

// Monotonic rational-quadratic spline on [-B, B] with identity tails.
//
// A spline with K bins is parameterized by 3K - 1 unconstrained values laid out
// as [widths (K), heights (K), interior derivatives (K - 1)]. Widths and heights
// are softmax-normalized, floored, scaled to 2B and accumulated from -B. Interior
// derivatives go through a shifted softplus with a floor so that a raw value of
// zero yields a unit slope; boundary slopes are fixed to 1 to match the tails.
// With all raw values at zero the spline is exactly the identity.

#ifndef TRAJFLOW__SPLINE_HPP_
#define TRAJFLOW__SPLINE_HPP_

#include "trajflow/error.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/AutoDiff>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

namespace trajflow::spline
{

inline constexpr double kMinBinWidth = 1e-3;
inline constexpr double kMinBinHeight = 1e-3;
inline constexpr double kMinDerivative = 1e-3;

struct SplineParams
{
  std::vector<double> knot_x;
  std::vector<double> knot_y;
  std::vector<double> derivs;
  double support_b = 1.0;

  std::size_t bins() const { return knot_x.empty() ? 0 : knot_x.size() - 1; }
};

struct SplineOutput
{
  double value;
  double log_abs_deriv;
};

inline constexpr std::size_t raw_param_count(std::size_t k_bins) { return 3 * k_bins - 1; }

inline double softplus(double v)
{
  return v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
}

inline double sigmoid(double v)
{
  if (v >= 0.0) {
    return 1.0 / (1.0 + std::exp(-v));
  }
  const double e = std::exp(v);
  return e / (1.0 + e);
}

/// Shift applied before the softplus so that raw 0 maps to a derivative of exactly 1.
inline double derivative_shift()
{
  static const double shift = std::log(std::expm1(1.0 - kMinDerivative));
  return shift;
}

inline double raw_to_derivative(double raw)
{
  return kMinDerivative + softplus(raw + derivative_shift());
}

namespace detail
{

// Floored softmax fractions; they sum to one.
inline std::vector<double> bin_fractions(std::span<const double> raw, double min_fraction)
{
  const double peak = *std::max_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size());
  double total = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out[i] = std::exp(raw[i] - peak);
    total += out[i];
  }
  const double free_mass = 1.0 - min_fraction * static_cast<double>(raw.size());
  for (double & v : out) {
    v = min_fraction + free_mass * (v / total);
  }
  return out;
}

inline std::vector<double> knots_from_fractions(const std::vector<double> & fractions, double b)
{
  const std::size_t k = fractions.size();
  std::vector<double> knots(k + 1);
  knots[0] = -b;
  double running = 0.0;
  for (std::size_t i = 1; i < k; ++i) {
    running += fractions[i - 1];
    knots[i] = -b + 2.0 * b * running;
  }
  knots[k] = b;
  return knots;
}

// Gradient of the knot positions w.r.t. the raw logits feeding them. Both end
// knots are constants.
inline void knots_backward(
  std::span<const double> raw, double min_fraction, double b, std::span<const double> grad_knots,
  std::span<double> grad_raw)
{
  const std::size_t k = raw.size();
  const double peak = *std::max_element(raw.begin(), raw.end());
  std::vector<double> soft(k);
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    soft[i] = std::exp(raw[i] - peak);
    total += soft[i];
  }
  for (double & v : soft) {
    v /= total;
  }
  // knot j (0 < j < K) depends on fractions 0..j-1.
  std::vector<double> grad_fraction(k, 0.0);
  double suffix = 0.0;
  for (std::size_t j = k - 1; j >= 1; --j) {
    suffix += 2.0 * b * grad_knots[j];
    grad_fraction[j - 1] = suffix;
  }
  const double free_mass = 1.0 - min_fraction * static_cast<double>(k);
  double dot = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    dot += grad_fraction[i] * soft[i];
  }
  for (std::size_t i = 0; i < k; ++i) {
    grad_raw[i] += free_mass * soft[i] * (grad_fraction[i] - dot);
  }
}

template <class T>
double scalar_value(const T & v)
{
  if constexpr (std::is_arithmetic_v<T>) {
    return static_cast<double>(v);
  } else {
    return v.value();
  }
}

}  // namespace detail

/// Builds spline parameters from 3K - 1 raw conditioner outputs.
inline SplineParams build_spline_params(
  std::span<const double> raw, std::size_t k_bins, double support_b)
{
  if (k_bins < 2) {
    throw InvalidInputError("spline needs at least 2 bins");
  }
  if (!(support_b > 0.0) || !std::isfinite(support_b)) {
    throw InvalidInputError("spline support must be positive and finite");
  }
  if (raw.size() != raw_param_count(k_bins)) {
    throw InvalidInputError(
      "expected " + std::to_string(raw_param_count(k_bins)) + " raw spline values, got " +
      std::to_string(raw.size()));
  }
  for (double v : raw) {
    if (!std::isfinite(v)) {
      throw InvalidInputError("non-finite raw spline value");
    }
  }

  SplineParams p;
  p.support_b = support_b;
  p.knot_x = detail::knots_from_fractions(
    detail::bin_fractions(raw.subspan(0, k_bins), kMinBinWidth), support_b);
  p.knot_y = detail::knots_from_fractions(
    detail::bin_fractions(raw.subspan(k_bins, k_bins), kMinBinHeight), support_b);
  p.derivs.assign(k_bins + 1, 1.0);
  for (std::size_t i = 1; i < k_bins; ++i) {
    p.derivs[i] = raw_to_derivative(raw[2 * k_bins + i - 1]);
  }
  return p;
}

inline SplineParams identity_spline(std::size_t k_bins, double support_b)
{
  std::vector<double> raw(raw_param_count(k_bins), 0.0);
  return build_spline_params(raw, k_bins, support_b);
}

inline bool is_valid(const SplineParams & p)
{
  const std::size_t k = p.bins();
  if (k < 2 || p.knot_y.size() != k + 1 || p.derivs.size() != k + 1) {
    return false;
  }
  const double b = p.support_b;
  if (!(b > 0.0) || p.knot_x.front() != -b || p.knot_x.back() != b || p.knot_y.front() != -b ||
    p.knot_y.back() != b)
  {
    return false;
  }
  for (std::size_t i = 0; i < k; ++i) {
    if (!(p.knot_x[i + 1] > p.knot_x[i]) || !(p.knot_y[i + 1] > p.knot_y[i])) {
      return false;
    }
  }
  for (double d : p.derivs) {
    if (!(d > 0.0) || !std::isfinite(d)) {
      return false;
    }
  }
  return p.derivs.front() == 1.0 && p.derivs.back() == 1.0;
}

/// Bin index for v in [knots.front(), knots.back()]. A value on an interior knot
/// belongs to the bin on its right; the upper boundary belongs to the last bin.
inline std::size_t locate_bin(std::span<const double> knots, double v)
{
  const auto it = std::upper_bound(knots.begin(), knots.end(), v);
  const auto idx = static_cast<std::size_t>(std::distance(knots.begin(), it));
  const std::size_t last = knots.size() - 2;
  if (idx == 0) {
    return 0;
  }
  return std::min(idx - 1, last);
}

template <class T>
struct BinResult
{
  T value;
  T log_abs_deriv;
};

/// Rational-quadratic map restricted to one bin, with the log of its analytic slope.
template <class T>
BinResult<T> rational_quadratic_bin(
  const T & x, const T & x_lo, const T & x_hi, const T & y_lo, const T & y_hi, const T & d_lo,
  const T & d_hi)
{
  using std::log;
  const T width = x_hi - x_lo;
  const T height = y_hi - y_lo;
  const T slope = height / width;
  const T xi = (x - x_lo) / width;
  const T one_minus = 1.0 - xi;
  const T xi_term = xi * one_minus;
  const T denom = slope + (d_hi + d_lo - 2.0 * slope) * xi_term;
  const T value = y_lo + height * (slope * xi * xi + d_lo * xi_term) / denom;
  const T deriv_num =
    slope * slope * (d_hi * xi * xi + 2.0 * slope * xi_term + d_lo * one_minus * one_minus);
  const T log_deriv = log(deriv_num) - 2.0 * log(denom);
  return {value, log_deriv};
}

/// Inverse of rational_quadratic_bin. The log-derivative is that of the inverse map.
template <class T>
BinResult<T> rational_quadratic_bin_inverse(
  const T & y, const T & x_lo, const T & x_hi, const T & y_lo, const T & y_hi, const T & d_lo,
  const T & d_hi)
{
  using std::log;
  using std::sqrt;
  const T width = x_hi - x_lo;
  const T height = y_hi - y_lo;
  const T slope = height / width;
  const T shifted = y - y_lo;
  const T curvature = d_hi + d_lo - 2.0 * slope;
  const T a = height * (slope - d_lo) + shifted * curvature;
  const T b = height * d_lo - shifted * curvature;
  const T c = -slope * shifted;
  T disc = b * b - 4.0 * a * c;
  const double disc_v = detail::scalar_value(disc);
  if (disc_v < 0.0) {
    const double b_v = detail::scalar_value(b);
    if (disc_v < -1e-12 * b_v * b_v) {
      throw NumericError("negative discriminant in spline inverse");
    }
    disc = disc * 0.0;
  }
  const T xi = (2.0 * c) / (-b - sqrt(disc));
  const T x = xi * width + x_lo;
  if (!std::isfinite(detail::scalar_value(x))) {
    throw NumericError("non-finite spline inverse");
  }
  const T one_minus = 1.0 - xi;
  const T xi_term = xi * one_minus;
  const T denom = slope + curvature * xi_term;
  const T deriv_num =
    slope * slope * (d_hi * xi * xi + 2.0 * slope * xi_term + d_lo * one_minus * one_minus);
  const T log_deriv = 2.0 * log(denom) - log(deriv_num);
  return {x, log_deriv};
}

inline SplineOutput rqs_forward(double x_in, const SplineParams & p)
{
  if (std::abs(x_in) > p.support_b || std::isnan(x_in)) {
    return {x_in, 0.0};
  }
  const std::size_t k = locate_bin(p.knot_x, x_in);
  const auto r = rational_quadratic_bin<double>(
    x_in, p.knot_x[k], p.knot_x[k + 1], p.knot_y[k], p.knot_y[k + 1], p.derivs[k],
    p.derivs[k + 1]);
  return {r.value, r.log_abs_deriv};
}

inline SplineOutput rqs_inverse(double y_in, const SplineParams & p)
{
  if (std::abs(y_in) > p.support_b || std::isnan(y_in)) {
    return {y_in, 0.0};
  }
  const std::size_t k = locate_bin(p.knot_y, y_in);
  const auto r = rational_quadratic_bin_inverse<double>(
    y_in, p.knot_x[k], p.knot_x[k + 1], p.knot_y[k], p.knot_y[k + 1], p.derivs[k],
    p.derivs[k + 1]);
  return {r.value, r.log_abs_deriv};
}

/// Reverse-mode step through rqs_inverse composed with build_spline_params.
///
/// Given upstream gradients on the inverse output and on its log-derivative,
/// accumulates the gradient w.r.t. the 3K - 1 raw values into grad_raw and returns
/// the gradient w.r.t. y_in.
inline double rqs_inverse_backward(
  double y_in, std::span<const double> raw, const SplineParams & p, double grad_value,
  double grad_log_deriv, std::span<double> grad_raw)
{
  if (std::abs(y_in) > p.support_b || std::isnan(y_in)) {
    return grad_value;
  }
  using Partials = Eigen::Matrix<double, 7, 1>;
  using Active = Eigen::AutoDiffScalar<Partials>;
  const std::size_t k_bins = p.bins();
  const std::size_t k = locate_bin(p.knot_y, y_in);

  const Active y(y_in, 7, 0);
  const Active x_lo(p.knot_x[k], 7, 1);
  const Active x_hi(p.knot_x[k + 1], 7, 2);
  const Active y_lo(p.knot_y[k], 7, 3);
  const Active y_hi(p.knot_y[k + 1], 7, 4);
  const Active d_lo(p.derivs[k], 7, 5);
  const Active d_hi(p.derivs[k + 1], 7, 6);
  const auto r = rational_quadratic_bin_inverse<Active>(y, x_lo, x_hi, y_lo, y_hi, d_lo, d_hi);
  const Partials g = grad_value * r.value.derivatives() + grad_log_deriv * r.log_abs_deriv.derivatives();

  std::vector<double> grad_knots(k_bins + 1, 0.0);
  grad_knots[k] = g[1];
  grad_knots[k + 1] = g[2];
  detail::knots_backward(
    raw.subspan(0, k_bins), kMinBinWidth, p.support_b, grad_knots, grad_raw.subspan(0, k_bins));

  std::fill(grad_knots.begin(), grad_knots.end(), 0.0);
  grad_knots[k] = g[3];
  grad_knots[k + 1] = g[4];
  detail::knots_backward(
    raw.subspan(k_bins, k_bins), kMinBinHeight, p.support_b, grad_knots,
    grad_raw.subspan(k_bins, k_bins));

  const std::size_t deriv_base = 2 * k_bins - 1;
  const std::size_t idx[2] = {k, k + 1};
  const double gd[2] = {g[5], g[6]};
  for (int s = 0; s < 2; ++s) {
    if (idx[s] == 0 || idx[s] == k_bins) {
      continue;
    }
    grad_raw[deriv_base + idx[s]] += gd[s] * sigmoid(raw[deriv_base + idx[s]] + derivative_shift());
  }
  return g[0];
}

}  // namespace trajflow::spline

#endif  // TRAJFLOW__SPLINE_HPP_
