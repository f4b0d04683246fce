// Copyright 2026 The iscon Authors. All Rights Reserved.
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

#include "iscon/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace iscon {

namespace {

std::vector<std::size_t> sample_coordinates(const Tensor& t, const std::vector<std::size_t>& rows,
                                            std::size_t count, std::mt19937_64& rng) {
  std::vector<std::size_t> coords;
  if (t.size() <= count) {
    coords.resize(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) coords[i] = i;
    return coords;
  }
  std::uniform_int_distribution<std::size_t> any(0, t.size() - 1);
  std::size_t from_rows = rows.empty() ? 0 : count / 2;
  for (std::size_t k = 0; k < from_rows; ++k) {
    const std::size_t row = rows[std::uniform_int_distribution<std::size_t>(0, rows.size() - 1)(rng)];
    const std::size_t col = std::uniform_int_distribution<std::size_t>(0, t.cols() - 1)(rng);
    coords.push_back(row * t.cols() + col);
  }
  while (coords.size() < count) coords.push_back(any(rng));
  return coords;
}

}  // namespace

GradCheckReport finite_diff_check(const LossFunction& loss, ParameterSet& params,
                                  const Gradients& analytic, const GradCheckOptions& options) {
  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (ParamId id = 0; id < params.size(); ++id) {
    Tensor& t = params.value(id);
    const auto coords =
        sample_coordinates(t, analytic.touched_rows(id), options.samples_per_tensor, rng);
    for (std::size_t c : coords) {
      const double original = t.data[c];
      t.data[c] = original + options.step;
      const double up = loss(params);
      t.data[c] = original - options.step;
      const double down = loss(params);
      t.data[c] = original;

      GradCheckEntry e;
      e.parameter = params.name(id);
      e.coordinate = c;
      e.analytic = analytic[id].data[c];
      e.numeric = (up - down) / (2.0 * options.step);
      const double denom =
          std::max({std::abs(e.analytic), std::abs(e.numeric), options.abs_floor});
      e.relative_error = std::abs(e.analytic - e.numeric) / denom;
      if (e.relative_error >= report.max_relative_error) {
        report.max_relative_error = e.relative_error;
        report.worst_parameter = e.parameter;
      }
      report.entries.push_back(std::move(e));
    }
  }
  report.passed = report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace iscon
