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

#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "iscon/layers.hpp"
#include "iscon/parameters.hpp"

namespace iscon {

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Coordinates sampled per parameter tensor (all of them if the tensor is smaller).
  std::size_t samples_per_tensor = 8;
  // Denominator floor for the relative error.
  double abs_floor = 1e-6;
  std::uint64_t seed = 0;
};

struct GradCheckEntry {
  std::string parameter;
  std::size_t coordinate = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_relative_error = 0.0;
  std::string worst_parameter;
  bool passed = false;
};

using LossFunction = std::function<double(const ParameterSet&)>;

// Compares analytic gradients against central differences of `loss` at
// sampled coordinates of every tensor in `params`. For tensors with
// tracked rows (embeddings) half the samples come from touched rows.
// relative error = |a - n| / max(|a|, |n|, abs_floor).
GradCheckReport finite_diff_check(const LossFunction& loss, ParameterSet& params,
                                  const Gradients& analytic, const GradCheckOptions& options);

}  // namespace iscon
