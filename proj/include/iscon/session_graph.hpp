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
#include <string>
#include <vector>

#include "iscon/corpus.hpp"
#include "iscon/layers.hpp"
#include "iscon/parameters.hpp"
#include "iscon/tensor.hpp"

namespace iscon {

// Session-item bipartite multigraph. Session nodes are indexed 0..S-1
// (graph-local) and item nodes by ItemId. One edge per interaction
// occurrence, so a repeated item yields parallel edges.
class BipartiteMultigraph {
 public:
  BipartiteMultigraph() = default;
  BipartiteMultigraph(std::size_t num_items, std::vector<std::vector<ItemId>> session_items,
                      std::vector<SessionId> session_ids = {});

  std::size_t num_sessions() const { return session_items_.size(); }
  std::size_t num_items() const { return item_sessions_.size(); }
  std::size_t num_nodes() const { return num_sessions() + num_items(); }
  std::size_t num_edges() const { return num_edges_; }

  // Items of a session node in interaction order (with multiplicity).
  const std::vector<ItemId>& session_neighbors(std::size_t session) const {
    return session_items_.at(session);
  }
  // Session nodes adjacent to an item, one entry per edge.
  const std::vector<std::uint32_t>& item_neighbors(ItemId item) const {
    return item_sessions_.at(item);
  }
  std::size_t session_degree(std::size_t session) const { return session_items_.at(session).size(); }
  std::size_t item_degree(ItemId item) const { return item_sessions_.at(item).size(); }
  std::size_t multiplicity(std::size_t session, ItemId item) const;

  // Corpus session id of a graph session node.
  SessionId corpus_session(std::size_t session) const { return session_ids_.at(session); }
  // Graph node of a corpus session, or -1 if the session has no graph edges.
  std::int64_t graph_session(SessionId id) const;

 private:
  std::vector<std::vector<ItemId>> session_items_;
  std::vector<std::vector<std::uint32_t>> item_sessions_;
  std::vector<SessionId> session_ids_;
  std::vector<std::int64_t> graph_index_;
  std::size_t num_edges_ = 0;
};

// Graph over train and validation interactions only; sessions without any
// such interaction are left out.
BipartiteMultigraph build_graph(const SplitCorpus& corpus);

struct SageOptions {
  std::size_t base_dim = 64;
  std::size_t output_dim = 64;
  std::vector<std::size_t> fanout = {10, 10};
  std::size_t negatives = 5;
  double negative_power = 0.75;
  std::size_t epochs = 10;
  std::size_t batch_size = 256;
  double lr = 0.01;
  // Edge scores are z_s . z_i / temperature. Unit-norm outputs bound the raw
  // dot product to [-1, 1], where the loss is minimized by collapsing every
  // session onto one direction and every item onto its opposite.
  double temperature = 0.1;
  double heldout_fraction = 0.05;
  std::uint64_t seed = 0;
};

// Two-layer mean-aggregator encoder:
//   h1(v) = normalize(relu(W1 [x_v ; mean_{u in N(v)} x_u] + b1))
//   z(v)  = normalize(W2 [h1(v) ; mean_{u in N(v)} h1(u)] + b2)
// Item nodes start from learnable per-item features x_i, session nodes
// from one shared learnable feature.
struct SageEncoder {
  ParameterSet params;
  EmbeddingTable item_features;
  ParamId session_feature = 0;
  DenseLayer layer1;
  DenseLayer layer2;

  static SageEncoder create(std::size_t num_items, std::size_t base_dim, std::size_t output_dim,
                            Rng& rng);
  // Rebinds layer handles after params has been replaced (e.g. on load).
  static SageEncoder bind(ParameterSet params);

  std::size_t output_dim() const { return layer2.out_dim; }
};

struct SageTrainResult {
  SageEncoder encoder;
  // Held-out unsupervised loss; entry 0 is before the first epoch.
  std::vector<double> heldout_loss;
  std::vector<double> train_loss;
};

// Unsupervised edge-reconstruction training: for each edge (s, i) maximize
// log sigmoid(z_s . z_i) + sum over negatives n of log sigmoid(-z_s . z_n),
// with negative items drawn proportional to degree^0.75. Neighborhoods are
// sampled up to `fanout` per hop. Throws std::invalid_argument on a graph
// without edges.
SageTrainResult train_encoder(const BipartiteMultigraph& graph, const SageOptions& options);

// Deterministic full-neighborhood embedding of a graph session node.
// Throws std::invalid_argument for an isolated node.
Vec embed_session(const SageEncoder& encoder, const BipartiteMultigraph& graph, std::size_t session);

// All graph session nodes, one row each.
Tensor embed_all_sessions(const SageEncoder& encoder, const BipartiteMultigraph& graph);

// Embeds a session that is not part of the graph by attaching a temporary
// node to `items`; the graph is not modified. Items without edges in the
// graph are dropped and reported through `warnings`; throws
// std::invalid_argument if nothing remains.
Vec embed_new_session(const SageEncoder& encoder, const BipartiteMultigraph& graph,
                      std::span<const ItemId> items, std::vector<std::string>* warnings = nullptr);

enum class EmbeddingSource : std::uint8_t { kGraph = 0, kInductive = 1, kUnavailable = 2 };

struct CorpusEmbeddings {
  Tensor embeddings;  // num_sessions x output_dim; zero rows when unavailable
  std::vector<EmbeddingSource> source;
  std::vector<std::string> warnings;
};

// Every corpus session: graph sessions embedded in place, the rest
// inductively from their full item lists. Sessions whose items are all
// unseen get a zero row and kUnavailable.
CorpusEmbeddings embed_corpus_sessions(const SageEncoder& encoder, const BipartiteMultigraph& graph,
                                       const SplitCorpus& corpus);

}  // namespace iscon
