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

#include <cstdint>
#include <vector>

#include "iscon/parameters.hpp"
#include "iscon/tensor.hpp"

namespace iscon {

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;

  AdamState() = default;
  AdamState(const ParameterSet& params, AdamConfig cfg);
};

// Bias-corrected Adam update of every parameter. Throws std::invalid_argument
// when state, parameters and gradients disagree in count or shape, and
// NumericError if an updated parameter becomes non-finite.
void adam_step(AdamState& state, ParameterSet& params, const Gradients& grads);

}  // namespace iscon
