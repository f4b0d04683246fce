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

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "iscon/layers.hpp"
#include "iscon/parameters.hpp"

namespace iscon::detail {

// Forward activations of one LSTM direction over a sequence given in
// processing order. gates holds post-activation [i, f, g, o] per step;
// cells/hiddens hold steps + 1 rows with row 0 the zero initial state.
struct LstmTrace {
  std::size_t steps = 0;
  std::size_t hidden = 0;
  Vec gates;
  Vec cells;
  Vec hiddens;

  std::span<const double> final_hidden() const {
    return {hiddens.data() + steps * hidden, hidden};
  }
};

void lstm_run(const ParameterSet& params, const LstmDirection& dir, std::size_t input_dim,
              std::size_t hidden, std::span<const double* const> inputs, LstmTrace& trace);

// Backpropagation through time from a gradient on the final hidden state.
// d_inputs (processing order) may hold null pointers for inputs that need
// no gradient; non-null entries are accumulated into.
void lstm_backprop(const ParameterSet& params, const LstmDirection& dir, std::size_t input_dim,
                   std::size_t hidden, std::span<const double* const> inputs, const LstmTrace& trace,
                   std::span<const double> d_final_hidden, Gradients& grads,
                   std::span<double* const> d_inputs);

inline double sigmoid(double x) {
  if (x >= 0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace iscon::detail
