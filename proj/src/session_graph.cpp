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

#include "iscon/session_graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "iscon/autograd.hpp"
#include "iscon/optim.hpp"

namespace iscon {

BipartiteMultigraph::BipartiteMultigraph(std::size_t num_items,
                                         std::vector<std::vector<ItemId>> session_items,
                                         std::vector<SessionId> session_ids)
    : session_items_(std::move(session_items)), item_sessions_(num_items) {
  if (session_ids.empty()) {
    session_ids.resize(session_items_.size());
    std::iota(session_ids.begin(), session_ids.end(), SessionId{0});
  }
  if (session_ids.size() != session_items_.size()) {
    throw std::invalid_argument("graph: one corpus id per session node required");
  }
  session_ids_ = std::move(session_ids);
  for (std::size_t s = 0; s < session_items_.size(); ++s) {
    for (ItemId i : session_items_[s]) {
      if (i >= num_items) throw std::out_of_range("graph: item id " + std::to_string(i) + " out of range");
      item_sessions_[i].push_back(static_cast<std::uint32_t>(s));
      ++num_edges_;
    }
  }
  const SessionId max_id =
      session_ids_.empty() ? 0 : *std::max_element(session_ids_.begin(), session_ids_.end());
  graph_index_.assign(session_ids_.empty() ? 0 : max_id + 1, -1);
  for (std::size_t s = 0; s < session_ids_.size(); ++s) {
    graph_index_[session_ids_[s]] = static_cast<std::int64_t>(s);
  }
}

std::size_t BipartiteMultigraph::multiplicity(std::size_t session, ItemId item) const {
  const auto& items = session_neighbors(session);
  return static_cast<std::size_t>(std::count(items.begin(), items.end(), item));
}

std::int64_t BipartiteMultigraph::graph_session(SessionId id) const {
  return id < graph_index_.size() ? graph_index_[id] : -1;
}

BipartiteMultigraph build_graph(const SplitCorpus& corpus) {
  std::vector<std::vector<ItemId>> items;
  std::vector<SessionId> ids;
  for (const Session& s : corpus.sessions) {
    std::vector<ItemId> visible;
    for (std::size_t k = 0; k < s.length(); ++k) {
      if (corpus.split[s.first_interaction + k] != Split::kTest) visible.push_back(s.items[k]);
    }
    if (visible.empty()) continue;
    items.push_back(std::move(visible));
    ids.push_back(s.id);
  }
  return BipartiteMultigraph(corpus.num_items(), std::move(items), std::move(ids));
}

SageEncoder SageEncoder::create(std::size_t num_items, std::size_t base_dim, std::size_t output_dim,
                                Rng& rng) {
  SageEncoder e;
  e.item_features = EmbeddingTable::create(e.params, "sage.item_features", num_items, base_dim, rng);
  Tensor session = Tensor::vector(base_dim);
  std::normal_distribution<double> dist(0.0, 0.1);
  for (double& x : session.data) x = dist(rng);
  e.session_feature = e.params.add("sage.session_feature", std::move(session));
  e.layer1 = DenseLayer::create(e.params, "sage.layer1", 2 * base_dim, output_dim, rng);
  e.layer2 = DenseLayer::create(e.params, "sage.layer2", 2 * output_dim, output_dim, rng);
  return e;
}

SageEncoder SageEncoder::bind(ParameterSet params) {
  SageEncoder e;
  e.params = std::move(params);
  e.item_features = EmbeddingTable::bind(e.params, "sage.item_features");
  e.session_feature = e.params.find("sage.session_feature");
  e.layer1 = DenseLayer::bind(e.params, "sage.layer1");
  e.layer2 = DenseLayer::bind(e.params, "sage.layer2");
  return e;
}

namespace {

// Records encoder activations on a tape, memoizing per node. With an RNG,
// neighborhoods are subsampled to the fanout of their hop (once per node
// per tape); without one every neighbor is used.
class SageRecorder {
 public:
  SageRecorder(Tape& tape, const SageEncoder& encoder, const BipartiteMultigraph& graph,
               std::vector<std::size_t> fanout = {}, Rng* rng = nullptr)
      : tape_(tape), enc_(encoder), graph_(graph), fanout_(std::move(fanout)), rng_(rng) {}

  Var z_session(std::size_t s) {
    if (auto it = z_session_.find(s); it != z_session_.end()) return it->second;
    Var z = rng_ ? z_from_items(sample(graph_.session_neighbors(s), 0))
                 : z_from_items(graph_.session_neighbors(s));
    z_session_.emplace(s, z);
    return z;
  }

  Var z_item(ItemId i) {
    if (auto it = z_item_.find(i); it != z_item_.end()) return it->second;
    const auto neighbors = sample(graph_.item_neighbors(i), 0);
    if (neighbors.empty()) throw std::invalid_argument("item node " + std::to_string(i) + " is isolated");
    std::vector<Var> parts;
    parts.reserve(neighbors.size());
    for (auto s : neighbors) parts.push_back(h1_session(s));
    Var z = layer(enc_.layer2, h1_item(i), tape_.mean(parts), false);
    z_item_.emplace(i, z);
    return z;
  }

  // Second-layer embedding of a session node whose neighbors are `items`.
  Var z_from_items(std::span<const ItemId> items) {
    if (items.empty()) throw std::invalid_argument("session node is isolated");
    std::vector<Var> parts;
    parts.reserve(items.size());
    for (ItemId i : items) parts.push_back(h1_item(i));
    return layer(enc_.layer2, h1_from_items(rng_ ? sample(items, 1) : to_vector(items)),
                 tape_.mean(parts), false);
  }

 private:
  Var session_base() {
    if (!session_base_) session_base_ = tape_.parameter(enc_.session_feature);
    return *session_base_;
  }

  Var item_base(ItemId i) {
    if (auto it = item_base_.find(i); it != item_base_.end()) return it->second;
    Var v = tape_.embedding(enc_.item_features, i);
    item_base_.emplace(i, v);
    return v;
  }

  Var h1_from_items(const std::vector<ItemId>& items) {
    std::vector<Var> parts;
    parts.reserve(items.size());
    for (ItemId i : items) parts.push_back(item_base(i));
    return layer(enc_.layer1, session_base(), tape_.mean(parts), true);
  }

  Var h1_session(std::size_t s) {
    if (auto it = h1_session_.find(s); it != h1_session_.end()) return it->second;
    Var h = h1_from_items(sample(graph_.session_neighbors(s), 1));
    h1_session_.emplace(s, h);
    return h;
  }

  Var h1_item(ItemId i) {
    if (auto it = h1_item_.find(i); it != h1_item_.end()) return it->second;
    const std::size_t degree = rng_ ? sample(graph_.item_neighbors(i), 1).size() : graph_.item_degree(i);
    if (degree == 0) throw std::invalid_argument("item node " + std::to_string(i) + " is isolated");
    // Every session node shares the same base feature.
    std::vector<Var> parts(degree, session_base());
    Var h = layer(enc_.layer1, item_base(i), tape_.mean(parts), true);
    h1_item_.emplace(i, h);
    return h;
  }

  Var layer(const DenseLayer& dense, Var self, Var aggregate, bool relu) {
    const Var parts[] = {self, aggregate};
    Var out = tape_.dense(dense, tape_.concat(parts));
    if (relu) out = tape_.relu(out);
    return tape_.l2_normalize(out);
  }

  template <typename T>
  static std::vector<T> to_vector(std::span<const T> xs) {
    return {xs.begin(), xs.end()};
  }

  template <typename T>
  std::vector<T> sample(const std::vector<T>& neighbors, std::size_t hop) {
    if (!rng_ || hop >= fanout_.size() || neighbors.size() <= fanout_[hop]) return neighbors;
    std::vector<T> out;
    out.reserve(fanout_[hop]);
    std::sample(neighbors.begin(), neighbors.end(), std::back_inserter(out),
                static_cast<std::ptrdiff_t>(fanout_[hop]), *rng_);
    return out;
  }
  std::vector<ItemId> sample(std::span<const ItemId> items, std::size_t hop) {
    return sample(to_vector(items), hop);
  }

  Tape& tape_;
  const SageEncoder& enc_;
  const BipartiteMultigraph& graph_;
  std::vector<std::size_t> fanout_;
  Rng* rng_;
  std::optional<Var> session_base_;
  std::unordered_map<ItemId, Var> item_base_;
  std::unordered_map<std::size_t, Var> h1_session_;
  std::unordered_map<ItemId, Var> h1_item_;
  std::unordered_map<std::size_t, Var> z_session_;
  std::unordered_map<ItemId, Var> z_item_;
};

struct Edge {
  std::uint32_t session;
  ItemId item;
};

Var edge_loss(Tape& tape, SageRecorder& rec, const Edge& e, std::span<const ItemId> negatives,
              double temperature) {
  const Var zs = rec.z_session(e.session);
  const double inv = 1.0 / temperature;
  std::vector<Var> terms;
  terms.push_back(tape.log_sigmoid(tape.scale(tape.dot(zs, rec.z_item(e.item)), inv)));
  for (ItemId n : negatives) {
    terms.push_back(tape.log_sigmoid(tape.scale(tape.dot(zs, rec.z_item(n)), -inv)));
  }
  return tape.scale(tape.add_scalars(terms), -1.0);
}

}  // namespace

SageTrainResult train_encoder(const BipartiteMultigraph& graph, const SageOptions& options) {
  if (graph.num_edges() == 0) throw std::invalid_argument("train_encoder: graph has no edges");
  if (!(options.temperature > 0.0)) throw std::invalid_argument("train_encoder: temperature must be positive");
  Rng rng(options.seed);
  SageTrainResult result{SageEncoder::create(graph.num_items(), options.base_dim, options.output_dim, rng),
                         {}, {}};
  SageEncoder& enc = result.encoder;

  std::vector<Edge> edges;
  edges.reserve(graph.num_edges());
  for (std::size_t s = 0; s < graph.num_sessions(); ++s) {
    for (ItemId i : graph.session_neighbors(s)) edges.push_back({static_cast<std::uint32_t>(s), i});
  }
  std::shuffle(edges.begin(), edges.end(), rng);
  const auto n_heldout = static_cast<std::size_t>(options.heldout_fraction * double(edges.size()));
  std::vector<Edge> heldout(edges.begin(), edges.begin() + static_cast<std::ptrdiff_t>(n_heldout));
  std::vector<Edge> train(edges.begin() + static_cast<std::ptrdiff_t>(n_heldout), edges.end());
  // Too small to hold anything out: monitor on the training edges instead.
  if (heldout.empty()) heldout = train;

  std::vector<double> weights(graph.num_items());
  for (ItemId i = 0; i < graph.num_items(); ++i) {
    weights[i] = std::pow(static_cast<double>(graph.item_degree(i)), options.negative_power);
  }
  std::discrete_distribution<ItemId> negative_dist(weights.begin(), weights.end());
  auto draw_negatives = [&](Rng& r) {
    std::vector<ItemId> out(options.negatives);
    for (auto& n : out) n = negative_dist(r);
    return out;
  };

  Rng heldout_rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::vector<ItemId>> heldout_negatives;
  for (std::size_t k = 0; k < heldout.size(); ++k) heldout_negatives.push_back(draw_negatives(heldout_rng));

  auto heldout_loss = [&]() {
    Tape tape(enc.params);
    SageRecorder rec(tape, enc, graph);
    double total = 0.0;
    for (std::size_t k = 0; k < heldout.size(); ++k) {
      total += tape.scalar(edge_loss(tape, rec, heldout[k], heldout_negatives[k], options.temperature));
    }
    return total / static_cast<double>(heldout.size());
  };

  AdamState adam(enc.params, AdamConfig{options.lr});
  Gradients grads(enc.params);
  result.heldout_loss.push_back(heldout_loss());
  const std::size_t batch = std::max<std::size_t>(1, options.batch_size);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train.size(); start += batch) {
      const std::size_t end = std::min(train.size(), start + batch);
      Tape tape(enc.params);
      SageRecorder rec(tape, enc, graph, options.fanout, &rng);
      std::vector<Var> losses;
      for (std::size_t k = start; k < end; ++k) {
        losses.push_back(edge_loss(tape, rec, train[k], draw_negatives(rng), options.temperature));
      }
      const Var loss = tape.scale(tape.add_scalars(losses), 1.0 / double(end - start));
      grads.zero();
      tape.backward(loss, grads);
      grads.clip_global_norm(5.0);
      adam_step(adam, enc.params, grads);
      epoch_loss += tape.scalar(loss) * double(end - start);
    }
    result.train_loss.push_back(epoch_loss / double(train.size()));
    result.heldout_loss.push_back(heldout_loss());
  }
  return result;
}

Vec embed_session(const SageEncoder& encoder, const BipartiteMultigraph& graph, std::size_t session) {
  if (session >= graph.num_sessions()) throw std::out_of_range("embed_session: unknown session node");
  if (graph.session_degree(session) == 0) throw std::invalid_argument("embed_session: isolated node");
  Tape tape(encoder.params);
  SageRecorder rec(tape, encoder, graph);
  return tape.value(rec.z_session(session));
}

Tensor embed_all_sessions(const SageEncoder& encoder, const BipartiteMultigraph& graph) {
  Tensor out = Tensor::matrix(graph.num_sessions(), encoder.output_dim());
  Tape tape(encoder.params);
  SageRecorder rec(tape, encoder, graph);
  for (std::size_t s = 0; s < graph.num_sessions(); ++s) {
    const Vec& z = tape.value(rec.z_session(s));
    std::copy(z.begin(), z.end(), out.row(s).begin());
  }
  return out;
}

Vec embed_new_session(const SageEncoder& encoder, const BipartiteMultigraph& graph,
                      std::span<const ItemId> items, std::vector<std::string>* warnings) {
  if (items.empty()) throw std::invalid_argument("embed_new_session: empty item list");
  std::vector<ItemId> known;
  known.reserve(items.size());
  for (ItemId i : items) {
    if (i < graph.num_items() && graph.item_degree(i) > 0) {
      known.push_back(i);
    } else if (warnings) {
      warnings->push_back("item " + std::to_string(i) + " is not in the training graph; dropped");
    }
  }
  if (known.empty()) throw std::invalid_argument("embed_new_session: no item is in the training graph");
  Tape tape(encoder.params);
  SageRecorder rec(tape, encoder, graph);
  return tape.value(rec.z_from_items(known));
}

CorpusEmbeddings embed_corpus_sessions(const SageEncoder& encoder, const BipartiteMultigraph& graph,
                                       const SplitCorpus& corpus) {
  CorpusEmbeddings out;
  out.embeddings = Tensor::matrix(corpus.sessions.size(), encoder.output_dim());
  out.source.assign(corpus.sessions.size(), EmbeddingSource::kUnavailable);
  const Tensor in_graph = embed_all_sessions(encoder, graph);
  for (const Session& s : corpus.sessions) {
    const std::int64_t g = graph.graph_session(s.id);
    if (g >= 0) {
      const auto row = in_graph.row(static_cast<std::size_t>(g));
      std::copy(row.begin(), row.end(), out.embeddings.row(s.id).begin());
      out.source[s.id] = EmbeddingSource::kGraph;
      continue;
    }
    try {
      std::vector<std::string> dropped;
      const Vec z = embed_new_session(encoder, graph, s.items, &dropped);
      std::copy(z.begin(), z.end(), out.embeddings.row(s.id).begin());
      out.source[s.id] = EmbeddingSource::kInductive;
      for (auto& w : dropped) out.warnings.push_back("session " + std::to_string(s.id) + ": " + w);
    } catch (const std::invalid_argument&) {
      out.warnings.push_back("session " + std::to_string(s.id) +
                             ": no item is in the training graph; embedding unavailable");
    }
  }
  return out;
}

}  // namespace iscon
