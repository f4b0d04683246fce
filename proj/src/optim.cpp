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

#include "iscon/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace iscon {

AdamState::AdamState(const ParameterSet& params, AdamConfig cfg) : config(cfg) {
  first_moment.reserve(params.size());
  second_moment.reserve(params.size());
  for (ParamId i = 0; i < params.size(); ++i) {
    first_moment.emplace_back(params.value(i).shape, 0.0);
    second_moment.emplace_back(params.value(i).shape, 0.0);
  }
}

void adam_step(AdamState& state, ParameterSet& params, const Gradients& grads) {
  if (state.first_moment.size() != params.size() || grads.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and state counts differ");
  }
  for (ParamId i = 0; i < params.size(); ++i) {
    const Tensor& p = params.value(i);
    if (!p.same_shape(grads[i]) || !p.same_shape(state.first_moment[i]) ||
        !p.same_shape(state.second_moment[i])) {
      throw std::invalid_argument("adam_step: shape mismatch for " + params.name(i) + " " +
                                  shape_string(p.shape) + " vs gradient " +
                                  shape_string(grads[i].shape));
    }
  }

  const AdamConfig& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  for (ParamId i = 0; i < params.size(); ++i) {
    auto& p = params.value(i).data;
    const auto& g = grads[i].data;
    auto& m = state.first_moment[i].data;
    auto& v = state.second_moment[i].data;
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      p[j] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
    check_finite(p, "parameter " + params.name(i));
  }
}

}  // namespace iscon
