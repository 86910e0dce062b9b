// Copyright 2026 The AHIQ Authors
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

// Correlation metrics between predicted scores and MOS, plus PSNR.
// All arithmetic is double precision.

#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>

#include "ahiq/image.hpp"

namespace ahiq {

namespace detail {
inline void check_series(std::span<const double> x, std::span<const double> y,
                         std::string_view who) {
  if (x.size() != y.size()) {
    throw DimensionError(std::string(who) + ": series lengths " +
                         std::to_string(x.size()) + " and " +
                         std::to_string(y.size()) + " differ");
  }
  if (x.size() < 2) {
    throw std::invalid_argument(std::string(who) + " needs at least two samples");
  }
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(x.begin(), x.end(), finite) || !std::all_of(y.begin(), y.end(), finite)) {
    throw std::invalid_argument(std::string(who) + ": non-finite value in series");
  }
}
}  // namespace detail

// Pearson linear correlation.
inline double plcc(std::span<const double> x, std::span<const double> y) {
  detail::check_series(x, y, "plcc");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw DegenerateInputError("plcc: zero-variance input");
  }
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// 1-based fractional ranks; tied values share the mean of their positions.
inline std::vector<double> fractional_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i + 1;
    while (j < order.size() && v[order[j]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + 1 + j);  // mean of i+1..j
    for (std::size_t k = i; k < j; ++k) ranks[order[k]] = r;
    i = j;
  }
  return ranks;
}

// Spearman rank correlation: Pearson over fractional ranks.
inline double srocc(std::span<const double> x, std::span<const double> y) {
  detail::check_series(x, y, "srocc");
  const auto rx = fractional_ranks(x);
  const auto ry = fractional_ranks(y);
  try {
    return plcc(rx, ry);
  } catch (const DegenerateInputError&) {
    throw DegenerateInputError("srocc: all-equal input");
  }
}

inline double main_score(double plcc_value, double srocc_value) {
  return plcc_value + srocc_value;
}

// Peak signal-to-noise ratio in dB; +inf when the images are identical.
inline double psnr(const Image& ref, const Image& dist, double peak = 255.0) {
  if (!ref.same_size(dist)) {
    throw DimensionError("psnr: " + std::to_string(ref.width) + "x" +
                         std::to_string(ref.height) + " vs " +
                         std::to_string(dist.width) + "x" + std::to_string(dist.height));
  }
  if (ref.pixels.empty()) throw std::invalid_argument("psnr on empty images");
  double se = 0.0;
  for (std::size_t i = 0; i < ref.pixels.size(); ++i) {
    const double d = double(ref.pixels[i]) - double(dist.pixels[i]);
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(ref.pixels.size());
  return 10.0 * std::log10(peak * peak / mse);
}

}  // namespace ahiq
