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
#include <random>
#include <span>
#include <string>
#include <vector>

#include "iscon/parameters.hpp"
#include "iscon/tensor.hpp"

namespace iscon {

using Rng = std::mt19937_64;

struct EmbeddingTable {
  ParamId table = 0;
  std::size_t rows = 0;
  std::size_t dim = 0;

  // Weights ~ normal(0, 0.1).
  static EmbeddingTable create(ParameterSet& params, const std::string& name, std::size_t rows,
                               std::size_t dim, Rng& rng);
  static EmbeddingTable bind(const ParameterSet& params, const std::string& name);

  // Throws std::out_of_range when index >= rows.
  Vec lookup(const ParameterSet& params, std::size_t index) const;
};

// output = weight * input + bias; weight is out_dim x in_dim.
struct DenseLayer {
  ParamId weight = 0;
  ParamId bias = 0;
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;

  // Weights ~ uniform(-1/sqrt(in_dim), 1/sqrt(in_dim)), bias zero.
  static DenseLayer create(ParameterSet& params, const std::string& name, std::size_t in_dim,
                           std::size_t out_dim, Rng& rng);
  static DenseLayer bind(const ParameterSet& params, const std::string& name);

  Vec forward(const ParameterSet& params, std::span<const double> input) const;
};

// One direction of an LSTM. Gate blocks are stacked [input, forget,
// candidate, output] along the rows of w_input (4H x I), w_hidden (4H x H)
// and bias (4H).
struct LstmDirection {
  ParamId w_input = 0;
  ParamId w_hidden = 0;
  ParamId bias = 0;
};

struct BiLstm {
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  LstmDirection forward;
  LstmDirection backward;

  std::size_t output_dim() const { return 2 * hidden_dim; }

  // Recurrent weights ~ uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero
  // except the forget gate, which starts at +1.
  static BiLstm create(ParameterSet& params, const std::string& name, std::size_t input_dim,
                       std::size_t hidden_dim, Rng& rng);
  static BiLstm bind(const ParameterSet& params, const std::string& name);
};

// concat(final forward hidden state over x_1..x_k, final backward hidden
// state over x_k..x_1). Zero initial states. Throws std::invalid_argument
// on an empty sequence or a wrong input width.
Vec bilstm_forward(const ParameterSet& params, const BiLstm& model, std::span<const Vec> sequence);

// Max-subtracted softmax. Throws NumericError on non-finite logits.
Vec softmax(std::span<const double> logits);

inline constexpr double kProbabilityFloor = 1e-12;

// -log(max(p[true_index], 1e-12)). Throws std::out_of_range on a bad index.
double cross_entropy(std::span<const double> probabilities, std::size_t true_index);

}  // namespace iscon
