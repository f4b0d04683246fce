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

#include "iscon/context_predictor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace iscon {

namespace {

struct MeanStd {
  double mean = 0.0;
  double std = 1.0;
};

MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  if (xs.empty()) return m;
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
  double var = 0.0;
  for (double x : xs) var += (x - m.mean) * (x - m.mean);
  var /= double(xs.size());
  m.std = var > 0.0 ? std::sqrt(var) : 1.0;
  return m;
}

}  // namespace

FeatureNormalizer FeatureNormalizer::fit(const SplitCorpus& corpus) {
  std::vector<double> durations;
  std::vector<double> gaps;
  for (const Session& s : corpus.sessions) {
    if (corpus.session_split(s.id) != Split::kTrain) continue;
    durations.push_back(std::log1p(double(s.duration())));
    if (s.gap) gaps.push_back(std::log1p(double(*s.gap)));
  }
  const MeanStd d = mean_std(durations);
  const MeanStd g = mean_std(gaps);
  return {d.mean, d.std, g.mean, g.std};
}

double FeatureNormalizer::duration(Timestamp seconds) const {
  return (std::log1p(double(seconds)) - duration_mean) / duration_std;
}

double FeatureNormalizer::gap(const std::optional<Timestamp>& seconds) const {
  if (!seconds) return 0.0;
  return (std::log1p(double(*seconds)) - gap_mean) / gap_std;
}

double FeatureNormalizer::length(std::size_t items) { return std::log1p(double(items)); }

SessionFeatures build_session_features(const SplitCorpus& corpus, const Tensor& session_embeddings) {
  if (session_embeddings.rows() != corpus.sessions.size()) {
    throw std::invalid_argument("build_session_features: one embedding row per session required");
  }
  SessionFeatures f;
  f.normalizer = FeatureNormalizer::fit(corpus);
  const std::size_t d = session_embeddings.cols();
  f.features = Tensor::matrix(corpus.sessions.size(), d + 3);
  for (const Session& s : corpus.sessions) {
    auto row = f.features.row(s.id);
    std::copy(session_embeddings.row(s.id).begin(), session_embeddings.row(s.id).end(), row.begin());
    row[d] = f.normalizer.duration(s.duration());
    row[d + 1] = f.normalizer.gap(s.gap);
    row[d + 2] = FeatureNormalizer::length(s.length());
    f.user_of_session.push_back(s.user);
  }
  f.user_session_offsets = corpus.user_session_offsets;
  return f;
}

std::vector<Vec> long_term_input(const SessionFeatures& features, UserId user, SessionId session,
                                 std::size_t max_history) {
  if (user >= features.num_users()) throw std::out_of_range("long_term_input: unknown user");
  const std::size_t first = features.user_session_offsets[user];
  const std::size_t last = features.user_session_offsets[user + 1];
  if (session < first || session >= last) {
    throw std::out_of_range("long_term_input: session " + std::to_string(session) +
                            " does not belong to user " + std::to_string(user));
  }
  if (session == first) return {Vec(features.dim(), 0.0)};
  const std::size_t begin = session - first > max_history ? session - max_history : first;
  std::vector<Vec> out;
  out.reserve(session - begin);
  for (std::size_t s = begin; s < session; ++s) {
    const auto row = features.features.row(s);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

ContextPredictor ContextPredictor::create(const ContextPredictorConfig& config, Rng& rng) {
  ContextPredictor m;
  m.config_ = config;
  EmbeddingTable::create(m.params_, "ctx.user_embedding", config.num_users, config.user_dim, rng);
  EmbeddingTable::create(m.params_, "ctx.item_embedding", config.num_items, config.item_dim, rng);
  Tensor aux = Tensor::vector(config.item_dim);
  std::normal_distribution<double> dist(0.0, 0.1);
  for (double& x : aux.data) x = dist(rng);
  m.params_.add("ctx.aux", std::move(aux));
  BiLstm::create(m.params_, "ctx.short", config.item_dim, config.hidden_dim, rng);
  BiLstm::create(m.params_, "ctx.long", config.feature_dim, config.hidden_dim, rng);
  DenseLayer::create(m.params_, "ctx.head", config.user_dim + 4 * config.hidden_dim,
                     config.num_contexts, rng);
  m.bind();
  return m;
}

void ContextPredictor::bind() {
  users_ = EmbeddingTable::bind(params_, "ctx.user_embedding");
  items_ = EmbeddingTable::bind(params_, "ctx.item_embedding");
  aux_ = params_.find("ctx.aux");
  short_term_ = BiLstm::bind(params_, "ctx.short");
  long_term_ = BiLstm::bind(params_, "ctx.long");
  head_ = DenseLayer::bind(params_, "ctx.head");
  config_.num_users = users_.rows;
  config_.user_dim = users_.dim;
  config_.num_items = items_.rows;
  config_.item_dim = items_.dim;
  config_.hidden_dim = short_term_.hidden_dim;
  config_.feature_dim = long_term_.input_dim;
  config_.num_contexts = head_.out_dim;
  if (head_.in_dim != config_.user_dim + short_term_.output_dim() + long_term_.output_dim()) {
    throw std::invalid_argument("context predictor head width does not match its inputs");
  }
}

ContextPredictor ContextPredictor::from_checkpoint(const Checkpoint& checkpoint) {
  ContextPredictor m;
  m.params_ = checkpoint.params;
  m.bind();
  m.config_.max_history = std::stoul(checkpoint.meta("max_history"));
  return m;
}

void ContextPredictor::save_to(Checkpoint& checkpoint) const {
  checkpoint.kind = "context_predictor";
  checkpoint.params = params_;
  checkpoint.metadata["max_history"] = std::to_string(config_.max_history);
}

Vec ContextPredictor::predict(UserId user, std::span<const ItemId> prefix,
                              std::span<const Vec> history) const {
  Tape tape(params_);
  const Var logits = record_logits(tape, user, record_short_term(tape, prefix), record_long_term(tape, history));
  return softmax(tape.value(logits));
}

Vec ContextPredictor::predict(const SessionFeatures& features, UserId user, SessionId session,
                              std::span<const ItemId> prefix) const {
  return predict(user, prefix, long_term_input(features, user, session, config_.max_history));
}

Var ContextPredictor::record_short_term(Tape& tape, std::span<const ItemId> prefix) const {
  std::vector<Var> seq;
  if (prefix.empty()) {
    seq.push_back(tape.parameter(aux_));
  } else {
    for (ItemId i : prefix) seq.push_back(tape.embedding(items_, i));
  }
  return tape.bilstm(short_term_, seq);
}

Var ContextPredictor::record_long_term(Tape& tape, std::span<const Vec> history) const {
  std::vector<Var> seq;
  for (const Vec& f : history) seq.push_back(tape.constant(f));
  return tape.bilstm(long_term_, seq);
}

Var ContextPredictor::record_logits(Tape& tape, UserId user, Var short_term, Var long_term) const {
  const Var parts[] = {tape.embedding(users_, user), short_term, long_term};
  return tape.dense(head_, tape.concat(parts));
}

Var context_batch_loss(Tape& tape, const ContextPredictor& model, const SessionFeatures& features,
                       std::span<const PrefixExample> examples, std::span<const std::int32_t> labels,
                       std::span<const std::size_t> selection) {
  std::unordered_map<SessionId, Var> long_cache;
  std::vector<Var> losses;
  losses.reserve(selection.size());
  for (std::size_t idx : selection) {
    const PrefixExample& e = examples[idx];
    const std::int32_t label = labels[e.session];
    if (label < 0) throw std::invalid_argument("context_batch_loss: unlabeled session");
    auto it = long_cache.find(e.session);
    if (it == long_cache.end()) {
      const auto history = long_term_input(features, e.user, e.session, model.config().max_history);
      it = long_cache.emplace(e.session, model.record_long_term(tape, history)).first;
    }
    const Var logits = model.record_logits(tape, e.user, model.record_short_term(tape, e.prefix), it->second);
    losses.push_back(tape.softmax_cross_entropy(logits, static_cast<std::size_t>(label)));
  }
  return tape.add_scalars(losses);
}

Tensor predict_contexts(const ContextPredictor& model, const SessionFeatures& features,
                        std::span<const PrefixExample> examples) {
  Tensor out = Tensor::matrix(examples.size(), model.config().num_contexts);
  std::unordered_map<SessionId, Vec> long_cache;
  for (std::size_t k = 0; k < examples.size(); ++k) {
    const PrefixExample& e = examples[k];
    auto it = long_cache.find(e.session);
    if (it == long_cache.end()) {
      const auto history = long_term_input(features, e.user, e.session, model.config().max_history);
      it = long_cache.emplace(e.session, bilstm_forward(model.params(), model.long_term(), history)).first;
    }
    Tape tape(model.params());
    const Var logits = model.record_logits(tape, e.user, model.record_short_term(tape, e.prefix),
                                           tape.constant(it->second));
    const Vec p = softmax(tape.value(logits));
    std::copy(p.begin(), p.end(), out.row(k).begin());
  }
  return out;
}

TrainHistory train_context(ContextPredictor& model, AdamState& adam, const SessionFeatures& features,
                           const std::vector<PrefixExample>& train,
                           const std::vector<PrefixExample>& validation,
                           std::span<const std::int32_t> labels, const TrainOptions& options) {
  auto labeled = [&](const std::vector<PrefixExample>& xs) {
    std::vector<PrefixExample> out;
    for (const auto& e : xs) {
      if (labels[e.session] >= 0) out.push_back(e);
    }
    return out;
  };
  const std::vector<PrefixExample> train_set = labeled(train);
  const std::vector<PrefixExample> val_set = labeled(validation);
  if (train_set.empty()) throw std::invalid_argument("train_context: no labeled training examples");

  const BatchLoss loss = [&](Tape& tape, std::span<const std::size_t> selection) {
    return context_batch_loss(tape, model, features, train_set, labels, selection);
  };
  ValidationScore score;
  if (!val_set.empty()) {
    score = [&](const ParameterSet&) {
      const Tensor probs = predict_contexts(model, features, val_set);
      double total = 0.0;
      for (std::size_t k = 0; k < val_set.size(); ++k) {
        total += cross_entropy(probs.row(k), static_cast<std::size_t>(labels[val_set[k].session]));
      }
      return -total / double(val_set.size());
    };
  }
  return fit(model.params(), adam, train_set.size(), loss, score, options);
}

std::vector<std::uint32_t> top_k_contexts(std::span<const double> probabilities, std::size_t k) {
  if (k == 0 || k > probabilities.size()) {
    throw std::invalid_argument("top_k_contexts: k=" + std::to_string(k) + " with " +
                                std::to_string(probabilities.size()) + " contexts");
  }
  std::vector<std::uint32_t> ids(probabilities.size());
  std::iota(ids.begin(), ids.end(), 0u);
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (probabilities[a] != probabilities[b]) return probabilities[a] > probabilities[b];
                      return a < b;
                    });
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace iscon
