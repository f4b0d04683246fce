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

#include "iscon/next_item.hpp"

#include <algorithm>
#include <stdexcept>
#include <thread>

#include "iscon/eval.hpp"

namespace iscon {

const char* mode_name(NextItemMode mode) {
  return mode == NextItemMode::kWithContext ? "context" : "ablation";
}

NextItemMode parse_mode(const std::string& name) {
  if (name == "context") return NextItemMode::kWithContext;
  if (name == "ablation") return NextItemMode::kAblation;
  throw std::invalid_argument("unknown next-item mode: " + name);
}

std::size_t NextItemConfig::head_input_dim() const {
  const std::size_t context_width = mode == NextItemMode::kWithContext ? top_k * context_dim : 0;
  return context_width + 2 * hidden_dim + user_dim;
}

NextItemModel NextItemModel::create(const NextItemConfig& config, Rng& rng) {
  if (config.top_k == 0 || config.top_k > config.num_contexts) {
    throw std::invalid_argument("next-item model: top_k must be in [1, num_contexts]");
  }
  NextItemModel m;
  m.config_ = config;
  EmbeddingTable::create(m.params_, "next.user_embedding", config.num_users, config.user_dim, rng);
  EmbeddingTable::create(m.params_, "next.item_embedding", config.num_items, config.item_dim, rng);
  EmbeddingTable::create(m.params_, "next.context_embedding", config.num_contexts, config.context_dim, rng);
  Tensor aux = Tensor::vector(config.item_dim);
  std::normal_distribution<double> dist(0.0, 0.1);
  for (double& x : aux.data) x = dist(rng);
  m.params_.add("next.aux", std::move(aux));
  BiLstm::create(m.params_, "next.item_lstm", config.item_dim, config.hidden_dim, rng);
  DenseLayer::create(m.params_, "next.head", config.head_input_dim(), config.num_items, rng);
  m.bind();
  return m;
}

void NextItemModel::bind() {
  users_ = EmbeddingTable::bind(params_, "next.user_embedding");
  items_ = EmbeddingTable::bind(params_, "next.item_embedding");
  contexts_ = EmbeddingTable::bind(params_, "next.context_embedding");
  aux_ = params_.find("next.aux");
  item_lstm_ = BiLstm::bind(params_, "next.item_lstm");
  head_ = DenseLayer::bind(params_, "next.head");
  config_.num_users = users_.rows;
  config_.user_dim = users_.dim;
  config_.num_items = items_.rows;
  config_.item_dim = items_.dim;
  config_.num_contexts = contexts_.rows;
  config_.context_dim = contexts_.dim;
  config_.hidden_dim = item_lstm_.hidden_dim;
  if (head_.in_dim != config_.head_input_dim()) {
    throw std::invalid_argument("next-item head width does not match mode and top_k");
  }
}

NextItemModel NextItemModel::from_checkpoint(const Checkpoint& checkpoint) {
  NextItemModel m;
  m.params_ = checkpoint.params;
  m.config_.top_k = std::stoul(checkpoint.meta("top_k"));
  m.config_.mode = parse_mode(checkpoint.meta("mode"));
  m.bind();
  return m;
}

void NextItemModel::save_to(Checkpoint& checkpoint) const {
  checkpoint.kind = "next_item";
  checkpoint.params = params_;
  checkpoint.metadata["top_k"] = std::to_string(config_.top_k);
  checkpoint.metadata["mode"] = mode_name(config_.mode);
}

void NextItemModel::check_contexts(std::span<const std::uint32_t> ids) const {
  if (ids.size() != config_.top_k) {
    throw std::invalid_argument("expected " + std::to_string(config_.top_k) + " context ids, got " +
                                std::to_string(ids.size()));
  }
  for (std::size_t k = 0; k < ids.size(); ++k) {
    if (ids[k] >= config_.num_contexts) {
      throw std::invalid_argument("context id " + std::to_string(ids[k]) + " out of range");
    }
    if (k > 0 && ids[k] <= ids[k - 1]) {
      throw std::invalid_argument("context ids must be strictly ascending");
    }
  }
}

Vec NextItemModel::context_block(std::span<const std::uint32_t> context_ids) const {
  check_contexts(context_ids);
  Vec out;
  out.reserve(context_ids.size() * config_.context_dim);
  for (std::uint32_t c : context_ids) {
    const Vec row = contexts_.lookup(params_, c);
    out.insert(out.end(), row.begin(), row.end());
  }
  return out;
}

Var NextItemModel::record_logits(Tape& tape, UserId user, std::span<const ItemId> prefix,
                                 std::span<const std::uint32_t> context_ids) const {
  std::vector<Var> parts;
  if (config_.mode == NextItemMode::kWithContext) {
    check_contexts(context_ids);
    for (std::uint32_t c : context_ids) parts.push_back(tape.embedding(contexts_, c));
  }
  std::vector<Var> seq;
  if (prefix.empty()) {
    seq.push_back(tape.parameter(aux_));
  } else {
    for (ItemId i : prefix) seq.push_back(tape.embedding(items_, i));
  }
  parts.push_back(tape.bilstm(item_lstm_, seq));
  parts.push_back(tape.embedding(users_, user));
  return tape.dense(head_, tape.concat(parts));
}

Vec NextItemModel::logits(UserId user, std::span<const ItemId> prefix,
                          std::span<const std::uint32_t> context_ids) const {
  Tape tape(params_);
  return tape.value(record_logits(tape, user, prefix, context_ids));
}

Vec NextItemModel::predict_next(UserId user, std::span<const ItemId> prefix,
                                std::span<const std::uint32_t> context_ids) const {
  return softmax(logits(user, prefix, context_ids));
}

Var next_item_batch_loss(Tape& tape, const NextItemModel& model,
                         std::span<const PrefixExample> examples, const ContextLists& contexts,
                         std::span<const std::size_t> selection) {
  std::vector<Var> losses;
  losses.reserve(selection.size());
  static const std::vector<std::uint32_t> kNone;
  for (std::size_t idx : selection) {
    const PrefixExample& e = examples[idx];
    const auto& ctx = contexts.empty() ? kNone : contexts[idx];
    losses.push_back(tape.softmax_cross_entropy(model.record_logits(tape, e.user, e.prefix, ctx),
                                                e.target_item));
  }
  return tape.add_scalars(losses);
}

std::vector<std::size_t> next_item_ranks(const NextItemModel& model,
                                         std::span<const PrefixExample> examples,
                                         const ContextLists& contexts, std::size_t threads) {
  std::vector<std::size_t> ranks(examples.size());
  static const std::vector<std::uint32_t> kNone;
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const auto& ctx = contexts.empty() ? kNone : contexts[k];
      // Softmax is monotone, so logits rank identically to probabilities.
      ranks[k] = rank_of_truth(model.logits(examples[k].user, examples[k].prefix, ctx),
                               examples[k].target_item);
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, examples.size()));
  if (workers == 1) {
    work(0, examples.size());
    return ranks;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (examples.size() + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(examples.size(), w * chunk);
    pool.emplace_back(work, begin, std::min(examples.size(), begin + chunk));
  }
  for (auto& t : pool) t.join();
  return ranks;
}

TrainHistory train_next(NextItemModel& model, AdamState& adam, const std::vector<PrefixExample>& train,
                        const ContextLists& train_contexts,
                        const std::vector<PrefixExample>& validation,
                        const ContextLists& validation_contexts, const TrainOptions& options) {
  if (train.empty()) throw std::invalid_argument("train_next: empty training set");
  const BatchLoss loss = [&](Tape& tape, std::span<const std::size_t> selection) {
    return next_item_batch_loss(tape, model, train, train_contexts, selection);
  };
  ValidationScore score;
  if (!validation.empty()) {
    score = [&](const ParameterSet&) {
      return mrr(next_item_ranks(model, validation, validation_contexts, options.threads));
    };
  }
  return fit(model.params(), adam, train.size(), loss, score, options);
}

}  // namespace iscon
