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
#include <span>
#include <vector>

#include "iscon/autograd.hpp"
#include "iscon/checkpoint.hpp"
#include "iscon/layers.hpp"
#include "iscon/training.hpp"

namespace iscon {

enum class NextItemMode { kWithContext, kAblation };

const char* mode_name(NextItemMode mode);
NextItemMode parse_mode(const std::string& name);

struct NextItemConfig {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_contexts = 40;
  std::size_t user_dim = 256;
  std::size_t item_dim = 256;
  std::size_t context_dim = 32;
  std::size_t hidden_dim = 128;
  std::size_t top_k = 3;
  NextItemMode mode = NextItemMode::kWithContext;

  std::size_t head_input_dim() const;
};

// Item logits = FC2([z_context ; z_item ; E^U_u]). z_context concatenates
// the context-table rows of the top-K predicted contexts (ascending ids)
// and is absent in ablation mode.
class NextItemModel {
 public:
  static NextItemModel create(const NextItemConfig& config, Rng& rng);
  static NextItemModel from_checkpoint(const Checkpoint& checkpoint);
  void save_to(Checkpoint& checkpoint) const;

  const NextItemConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const DenseLayer& head() const { return head_; }
  const EmbeddingTable& context_table() const { return contexts_; }

  // Throws std::invalid_argument unless ids are strictly ascending, K long
  // and below num_contexts.
  Vec context_block(std::span<const std::uint32_t> context_ids) const;

  // Probability over items. Contexts are ignored in ablation mode.
  Vec predict_next(UserId user, std::span<const ItemId> prefix,
                   std::span<const std::uint32_t> context_ids) const;
  Vec logits(UserId user, std::span<const ItemId> prefix,
             std::span<const std::uint32_t> context_ids) const;

  Var record_logits(Tape& tape, UserId user, std::span<const ItemId> prefix,
                    std::span<const std::uint32_t> context_ids) const;

 private:
  NextItemConfig config_;
  ParameterSet params_;
  EmbeddingTable users_;
  EmbeddingTable items_;
  EmbeddingTable contexts_;
  ParamId aux_ = 0;
  BiLstm item_lstm_;
  DenseLayer head_;

  void bind();
  void check_contexts(std::span<const std::uint32_t> ids) const;
};

// Top-K context ids per example, aligned with an example vector.
using ContextLists = std::vector<std::vector<std::uint32_t>>;

Var next_item_batch_loss(Tape& tape, const NextItemModel& model,
                         std::span<const PrefixExample> examples, const ContextLists& contexts,
                         std::span<const std::size_t> selection);

// Ranks of the true next item for each example (score desc, id asc).
std::vector<std::size_t> next_item_ranks(const NextItemModel& model,
                                         std::span<const PrefixExample> examples,
                                         const ContextLists& contexts, std::size_t threads = 1);

// Trains with full-softmax cross-entropy, early-stopping on validation MRR.
// Throws std::invalid_argument on an empty training set.
TrainHistory train_next(NextItemModel& model, AdamState& adam, const std::vector<PrefixExample>& train,
                        const ContextLists& train_contexts,
                        const std::vector<PrefixExample>& validation,
                        const ContextLists& validation_contexts, const TrainOptions& options);

}  // namespace iscon
