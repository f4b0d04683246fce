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
#include <span>
#include <vector>

#include "iscon/layers.hpp"
#include "iscon/parameters.hpp"
#include "iscon/tensor.hpp"

namespace iscon {

// Handle to a value recorded on a Tape.
struct Var {
  std::size_t index = 0;
};

// Reverse-mode record of a forward computation over vector-valued nodes.
// Parameters are read from the ParameterSet at record time and their
// gradients are written to a Gradients buffer by backward(). The operator
// set is the one the pipeline's models are built from; the LSTM is a
// single fused node with hand-written backpropagation through time.
class Tape {
 public:
  explicit Tape(const ParameterSet& params) : params_(&params) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const ParameterSet& params() const { return *params_; }

  Var constant(Vec value);
  // Whole parameter, flattened.
  Var parameter(ParamId id);
  Var embedding(const EmbeddingTable& table, std::size_t row);
  Var dense(const DenseLayer& layer, Var input);
  Var bilstm(const BiLstm& model, std::span<const Var> sequence);

  Var concat(std::span<const Var> parts);
  Var add(Var a, Var b);
  Var scale(Var a, double factor);
  Var mean(std::span<const Var> parts);
  Var relu(Var a);
  // a / max(||a||, 1e-12)
  Var l2_normalize(Var a);
  Var dot(Var a, Var b);
  Var sum(Var a);
  Var add_scalars(std::span<const Var> scalars);
  // log(sigmoid(a)) for a scalar node; numerically stable.
  Var log_sigmoid(Var a);
  // -log(max(softmax(logits)[target], 1e-12)) as a scalar node.
  Var softmax_cross_entropy(Var logits, std::size_t target);

  const Vec& value(Var v) const { return nodes_.at(v.index).value; }
  double scalar(Var v) const;
  std::size_t node_count() const { return nodes_.size(); }

  // Accumulates d(loss)/d(parameter) into grads. The loss must be a scalar
  // node; throws std::invalid_argument otherwise.
  void backward(Var loss, Gradients& grads);

 private:
  struct Node {
    Vec value;
    Vec grad;
    std::function<void(Tape&, Gradients&, const Vec&)> backprop;
  };

  Var push(Vec value, std::function<void(Tape&, Gradients&, const Vec&)> backprop);
  Vec& grad_of(Var v) { return nodes_[v.index].grad; }

  const ParameterSet* params_;
  std::vector<Node> nodes_;
};

}  // namespace iscon
