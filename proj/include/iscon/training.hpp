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
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "iscon/autograd.hpp"
#include "iscon/corpus.hpp"
#include "iscon/optim.hpp"
#include "iscon/parameters.hpp"

namespace iscon {

// One prediction point: the interaction at `interaction`, conditioned on
// the items preceding it in the same session (at most max_prefix of the
// most recent ones).
struct PrefixExample {
  std::size_t interaction = 0;
  UserId user = 0;
  SessionId session = 0;
  std::vector<ItemId> prefix;
  ItemId target_item = 0;
};

// Examples for every interaction tagged `which`, in corpus order.
std::vector<PrefixExample> build_prefix_examples(const SplitCorpus& corpus, Split which,
                                                 std::size_t max_prefix);

struct TrainOptions {
  double lr = 0.001;
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
};

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> validation;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

// Records the summed loss of the given examples on the tape.
using BatchLoss = std::function<Var(Tape&, std::span<const std::size_t>)>;
// Validation score of the current parameters; higher is better.
using ValidationScore = std::function<double(const ParameterSet&)>;

// Mini-batch Adam over shuffled examples with global-norm clipping. With a
// validation score, training stops after `patience` epochs without
// improvement and the best parameters are restored. Batches are split into
// `threads` contiguous chunks whose gradients are reduced in chunk order,
// so results depend only on (seed, threads).
TrainHistory fit(ParameterSet& params, AdamState& adam, std::size_t num_examples,
                 const BatchLoss& batch_loss, const ValidationScore& validation,
                 const TrainOptions& options);

// Gradient of the mean loss over `examples`, computed in `threads` chunks.
double batch_gradient(const ParameterSet& params, std::span<const std::size_t> examples,
                      const BatchLoss& batch_loss, std::size_t threads, Gradients& out);

}  // namespace iscon
