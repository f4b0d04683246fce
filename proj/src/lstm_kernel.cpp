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

#include "lstm_kernel.hpp"

#include <algorithm>
#include <cmath>

namespace iscon::detail {

void lstm_run(const ParameterSet& params, const LstmDirection& dir, std::size_t input_dim,
              std::size_t hidden, std::span<const double* const> inputs, LstmTrace& trace) {
  const Tensor& w = params.value(dir.w_input);
  const Tensor& u = params.value(dir.w_hidden);
  const Tensor& b = params.value(dir.bias);
  const std::size_t steps = inputs.size();
  const std::size_t h4 = 4 * hidden;

  trace.steps = steps;
  trace.hidden = hidden;
  trace.gates.assign(steps * h4, 0.0);
  trace.cells.assign((steps + 1) * hidden, 0.0);
  trace.hiddens.assign((steps + 1) * hidden, 0.0);

  Vec pre(h4);
  for (std::size_t t = 0; t < steps; ++t) {
    const double* x = inputs[t];
    const double* h_prev = trace.hiddens.data() + t * hidden;
    const double* c_prev = trace.cells.data() + t * hidden;
    for (std::size_t r = 0; r < h4; ++r) {
      double acc = b.data[r];
      const double* wr = w.data.data() + r * input_dim;
      for (std::size_t k = 0; k < input_dim; ++k) acc += wr[k] * x[k];
      const double* ur = u.data.data() + r * hidden;
      for (std::size_t k = 0; k < hidden; ++k) acc += ur[k] * h_prev[k];
      pre[r] = acc;
    }
    double* g = trace.gates.data() + t * h4;
    double* c = trace.cells.data() + (t + 1) * hidden;
    double* h = trace.hiddens.data() + (t + 1) * hidden;
    for (std::size_t j = 0; j < hidden; ++j) {
      const double ig = sigmoid(pre[j]);
      const double fg = sigmoid(pre[hidden + j]);
      const double cg = std::tanh(pre[2 * hidden + j]);
      const double og = sigmoid(pre[3 * hidden + j]);
      g[j] = ig;
      g[hidden + j] = fg;
      g[2 * hidden + j] = cg;
      g[3 * hidden + j] = og;
      c[j] = fg * c_prev[j] + ig * cg;
      h[j] = og * std::tanh(c[j]);
    }
  }
}

void lstm_backprop(const ParameterSet& params, const LstmDirection& dir, std::size_t input_dim,
                   std::size_t hidden, std::span<const double* const> inputs, const LstmTrace& trace,
                   std::span<const double> d_final_hidden, Gradients& grads,
                   std::span<double* const> d_inputs) {
  const Tensor& w = params.value(dir.w_input);
  const Tensor& u = params.value(dir.w_hidden);
  Tensor& gw = grads[dir.w_input];
  Tensor& gu = grads[dir.w_hidden];
  Tensor& gb = grads[dir.bias];
  const std::size_t h4 = 4 * hidden;

  Vec dh(d_final_hidden.begin(), d_final_hidden.end());
  Vec dc(hidden, 0.0);
  Vec da(h4);
  Vec dh_prev(hidden);

  for (std::size_t step = trace.steps; step-- > 0;) {
    const double* g = trace.gates.data() + step * h4;
    const double* c = trace.cells.data() + (step + 1) * hidden;
    const double* c_prev = trace.cells.data() + step * hidden;
    const double* h_prev = trace.hiddens.data() + step * hidden;
    const double* x = inputs[step];

    for (std::size_t j = 0; j < hidden; ++j) {
      const double ig = g[j];
      const double fg = g[hidden + j];
      const double cg = g[2 * hidden + j];
      const double og = g[3 * hidden + j];
      const double tc = std::tanh(c[j]);
      const double d_og = dh[j] * tc;
      const double dcj = dc[j] + dh[j] * og * (1.0 - tc * tc);
      da[j] = dcj * cg * ig * (1.0 - ig);
      da[hidden + j] = dcj * c_prev[j] * fg * (1.0 - fg);
      da[2 * hidden + j] = dcj * ig * (1.0 - cg * cg);
      da[3 * hidden + j] = d_og * og * (1.0 - og);
      dc[j] = dcj * fg;
    }

    std::fill(dh_prev.begin(), dh_prev.end(), 0.0);
    double* dx = d_inputs.empty() ? nullptr : d_inputs[step];
    for (std::size_t r = 0; r < h4; ++r) {
      const double a = da[r];
      if (a == 0.0) continue;
      gb.data[r] += a;
      double* gwr = gw.data.data() + r * input_dim;
      const double* wr = w.data.data() + r * input_dim;
      for (std::size_t k = 0; k < input_dim; ++k) gwr[k] += a * x[k];
      if (dx) {
        for (std::size_t k = 0; k < input_dim; ++k) dx[k] += a * wr[k];
      }
      double* gur = gu.data.data() + r * hidden;
      const double* ur = u.data.data() + r * hidden;
      for (std::size_t k = 0; k < hidden; ++k) {
        gur[k] += a * h_prev[k];
        dh_prev[k] += a * ur[k];
      }
    }
    dh.swap(dh_prev);
  }
}

}  // namespace iscon::detail
