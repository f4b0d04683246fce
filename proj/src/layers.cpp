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

#include "iscon/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lstm_kernel.hpp"

namespace iscon {

namespace {

Tensor uniform_tensor(std::vector<std::size_t> shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : t.data) x = dist(rng);
  return t;
}

LstmDirection create_direction(ParameterSet& params, const std::string& prefix,
                               std::size_t input_dim, std::size_t hidden, Rng& rng) {
  LstmDirection dir;
  dir.w_input = params.add(prefix + ".w_input",
                           uniform_tensor({4 * hidden, input_dim}, 1.0 / std::sqrt(double(input_dim)), rng));
  dir.w_hidden = params.add(prefix + ".w_hidden",
                            uniform_tensor({4 * hidden, hidden}, 1.0 / std::sqrt(double(hidden)), rng));
  Tensor bias = Tensor::vector(4 * hidden);
  for (std::size_t j = hidden; j < 2 * hidden; ++j) bias.data[j] = 1.0;
  dir.bias = params.add(prefix + ".bias", std::move(bias));
  return dir;
}

LstmDirection bind_direction(const ParameterSet& params, const std::string& prefix) {
  return {params.find(prefix + ".w_input"), params.find(prefix + ".w_hidden"),
          params.find(prefix + ".bias")};
}

}  // namespace

EmbeddingTable EmbeddingTable::create(ParameterSet& params, const std::string& name, std::size_t rows,
                                      std::size_t dim, Rng& rng) {
  Tensor t = Tensor::matrix(rows, dim);
  std::normal_distribution<double> dist(0.0, 0.1);
  for (double& x : t.data) x = dist(rng);
  return {params.add(name, std::move(t)), rows, dim};
}

EmbeddingTable EmbeddingTable::bind(const ParameterSet& params, const std::string& name) {
  const ParamId id = params.find(name);
  const Tensor& t = params.value(id);
  return {id, t.rows(), t.cols()};
}

Vec EmbeddingTable::lookup(const ParameterSet& params, std::size_t index) const {
  if (index >= rows) {
    throw std::out_of_range("embedding index " + std::to_string(index) + " out of range [0, " +
                            std::to_string(rows) + ")");
  }
  const auto row = params.value(table).row(index);
  return {row.begin(), row.end()};
}

DenseLayer DenseLayer::create(ParameterSet& params, const std::string& name, std::size_t in_dim,
                              std::size_t out_dim, Rng& rng) {
  DenseLayer layer;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  layer.weight = params.add(name + ".weight",
                            uniform_tensor({out_dim, in_dim}, 1.0 / std::sqrt(double(in_dim)), rng));
  layer.bias = params.add(name + ".bias", Tensor::vector(out_dim));
  return layer;
}

DenseLayer DenseLayer::bind(const ParameterSet& params, const std::string& name) {
  DenseLayer layer;
  layer.weight = params.find(name + ".weight");
  layer.bias = params.find(name + ".bias");
  layer.out_dim = params.value(layer.weight).rows();
  layer.in_dim = params.value(layer.weight).cols();
  return layer;
}

Vec DenseLayer::forward(const ParameterSet& params, std::span<const double> input) const {
  if (input.size() != in_dim) {
    throw std::invalid_argument("dense layer expects " + std::to_string(in_dim) + " inputs, got " +
                                std::to_string(input.size()));
  }
  const Tensor& w = params.value(weight);
  const Tensor& b = params.value(bias);
  Vec out(out_dim);
  for (std::size_t r = 0; r < out_dim; ++r) {
    double acc = b.data[r];
    const double* wr = w.data.data() + r * in_dim;
    for (std::size_t k = 0; k < in_dim; ++k) acc += wr[k] * input[k];
    out[r] = acc;
  }
  return out;
}

BiLstm BiLstm::create(ParameterSet& params, const std::string& name, std::size_t input_dim,
                      std::size_t hidden_dim, Rng& rng) {
  BiLstm m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  m.forward = create_direction(params, name + ".fwd", input_dim, hidden_dim, rng);
  m.backward = create_direction(params, name + ".bwd", input_dim, hidden_dim, rng);
  return m;
}

BiLstm BiLstm::bind(const ParameterSet& params, const std::string& name) {
  BiLstm m;
  m.forward = bind_direction(params, name + ".fwd");
  m.backward = bind_direction(params, name + ".bwd");
  m.input_dim = params.value(m.forward.w_input).cols();
  m.hidden_dim = params.value(m.forward.w_hidden).cols();
  return m;
}

Vec bilstm_forward(const ParameterSet& params, const BiLstm& model, std::span<const Vec> sequence) {
  if (sequence.empty()) throw std::invalid_argument("bilstm_forward: empty sequence");
  std::vector<const double*> fwd(sequence.size());
  std::vector<const double*> bwd(sequence.size());
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    if (sequence[t].size() != model.input_dim) {
      throw std::invalid_argument("bilstm_forward: input " + std::to_string(t) + " has width " +
                                  std::to_string(sequence[t].size()) + ", expected " +
                                  std::to_string(model.input_dim));
    }
    fwd[t] = sequence[t].data();
    bwd[sequence.size() - 1 - t] = sequence[t].data();
  }
  detail::LstmTrace trace;
  Vec out(model.output_dim());
  detail::lstm_run(params, model.forward, model.input_dim, model.hidden_dim, fwd, trace);
  std::copy(trace.final_hidden().begin(), trace.final_hidden().end(), out.begin());
  detail::lstm_run(params, model.backward, model.input_dim, model.hidden_dim, bwd, trace);
  std::copy(trace.final_hidden().begin(), trace.final_hidden().end(),
            out.begin() + static_cast<std::ptrdiff_t>(model.hidden_dim));
  return out;
}

Vec softmax(std::span<const double> logits) {
  check_finite(logits, "softmax logits");
  if (logits.empty()) return {};
  const double top = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

double cross_entropy(std::span<const double> probabilities, std::size_t true_index) {
  if (true_index >= probabilities.size()) {
    throw std::out_of_range("cross_entropy: class " + std::to_string(true_index) + " out of range");
  }
  return -std::log(std::max(probabilities[true_index], kProbabilityFloor));
}

}  // namespace iscon
