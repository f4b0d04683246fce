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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iscon/autograd.hpp"
#include "iscon/checkpoint.hpp"
#include "iscon/corpus.hpp"
#include "iscon/layers.hpp"
#include "iscon/training.hpp"

namespace iscon {

// log1p then z-score for duration and gap, log1p alone for length.
// Statistics come from train-split sessions only.
struct FeatureNormalizer {
  double duration_mean = 0.0;
  double duration_std = 1.0;
  double gap_mean = 0.0;
  double gap_std = 1.0;

  static FeatureNormalizer fit(const SplitCorpus& corpus);
  double duration(Timestamp seconds) const;
  // Undefined gaps (a user's last session) map to 0.
  double gap(const std::optional<Timestamp>& seconds) const;
  static double length(std::size_t items);
};

// F_s = [E^S_s ; D_s ; Delta_s ; M_s] for every corpus session.
struct SessionFeatures {
  Tensor features;  // num_sessions x (embedding_dim + 3)
  std::vector<UserId> user_of_session;
  std::vector<std::size_t> user_session_offsets;
  FeatureNormalizer normalizer;

  std::size_t dim() const { return features.cols(); }
  std::size_t num_users() const { return user_session_offsets.empty() ? 0 : user_session_offsets.size() - 1; }
};

SessionFeatures build_session_features(const SplitCorpus& corpus, const Tensor& session_embeddings);

// The user's (at most max_history) sessions strictly before `session`,
// oldest first; a single zero vector for the user's first session. Throws
// std::out_of_range for an unknown user or a session the user does not own.
std::vector<Vec> long_term_input(const SessionFeatures& features, UserId user, SessionId session,
                                 std::size_t max_history);

struct ContextPredictorConfig {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t num_contexts = 40;
  std::size_t feature_dim = 67;
  std::size_t user_dim = 256;
  std::size_t item_dim = 256;
  std::size_t hidden_dim = 128;
  std::size_t max_history = 50;
};

// Context logits = FC1([E^U_u ; z_short ; z_long]) where z_short encodes the
// observed item prefix (or the auxiliary vector when it is empty) and
// z_long the session-feature history.
class ContextPredictor {
 public:
  static ContextPredictor create(const ContextPredictorConfig& config, Rng& rng);
  static ContextPredictor from_checkpoint(const Checkpoint& checkpoint);
  void save_to(Checkpoint& checkpoint) const;

  const ContextPredictorConfig& config() const { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }
  const BiLstm& short_term() const { return short_term_; }
  const BiLstm& long_term() const { return long_term_; }
  const DenseLayer& head() const { return head_; }

  // Probability vector over contexts. Throws std::out_of_range on unknown
  // user or item ids.
  Vec predict(UserId user, std::span<const ItemId> prefix, std::span<const Vec> history) const;
  Vec predict(const SessionFeatures& features, UserId user, SessionId session,
              std::span<const ItemId> prefix) const;

  Var record_short_term(Tape& tape, std::span<const ItemId> prefix) const;
  Var record_long_term(Tape& tape, std::span<const Vec> history) const;
  Var record_logits(Tape& tape, UserId user, Var short_term, Var long_term) const;

 private:
  ContextPredictorConfig config_;
  ParameterSet params_;
  EmbeddingTable users_;
  EmbeddingTable items_;
  ParamId aux_ = 0;
  BiLstm short_term_;
  BiLstm long_term_;
  DenseLayer head_;

  void bind();
};

// Summed cross-entropy of the selected examples against their session's
// context label. z_long is shared between examples of the same session.
Var context_batch_loss(Tape& tape, const ContextPredictor& model, const SessionFeatures& features,
                       std::span<const PrefixExample> examples, std::span<const std::int32_t> labels,
                       std::span<const std::size_t> selection);

// Context distribution for every example, one row each; the long-term
// encoding is computed once per session.
Tensor predict_contexts(const ContextPredictor& model, const SessionFeatures& features,
                        std::span<const PrefixExample> examples);

// Trains on `train` (one example per observed prefix), early-stopping on
// validation cross-entropy. Examples whose session is unlabeled are
// skipped. Throws std::invalid_argument when no labeled training example
// remains.
TrainHistory train_context(ContextPredictor& model, AdamState& adam, const SessionFeatures& features,
                           const std::vector<PrefixExample>& train,
                           const std::vector<PrefixExample>& validation,
                           std::span<const std::int32_t> labels, const TrainOptions& options);

// The k most probable contexts (ties to the lower id), returned ascending by
// id. Throws std::invalid_argument unless 1 <= k <= probabilities.size().
std::vector<std::uint32_t> top_k_contexts(std::span<const double> probabilities, std::size_t k);

}  // namespace iscon
