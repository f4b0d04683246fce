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

#include "iscon/corpus.hpp"
#include "iscon/session_graph.hpp"
#include "iscon/tensor.hpp"

namespace iscon {

struct KMeansOptions {
  std::size_t num_contexts = 40;
  std::size_t max_iters = 100;
  // Independent k-means++ initializations; the lowest final inertia wins.
  std::size_t restarts = 10;
  std::uint64_t seed = 0;
};

struct ContextModel {
  Tensor centers;  // num_contexts x dim
  std::vector<std::uint32_t> assignments;
  // Inertia after every assignment step of the selected run.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;

  std::size_t num_contexts() const { return centers.rows(); }
  std::size_t dim() const { return centers.cols(); }
  double inertia() const { return inertia_history.empty() ? 0.0 : inertia_history.back(); }
};

// k-means++ seeding followed by Lloyd iterations until the assignment is a
// fixed point or max_iters is reached. An empty cluster takes over the
// point farthest from its current center. Throws std::invalid_argument if
// there are fewer points than contexts.
ContextModel kmeans_fit(const Tensor& points, const KMeansOptions& options);

// Nearest center by Euclidean distance, ties to the lowest id.
std::uint32_t assign(const ContextModel& model, std::span<const double> embedding);

inline constexpr std::int32_t kUnlabeled = -1;

enum class UnseenPolicy { kFail, kLeaveUnlabeled };

// Context id for every corpus session. Graph sessions take their stored
// training assignment (the model must have been fit on embed_all_sessions
// of the same graph); other sessions are embedded inductively and assigned.
std::vector<std::int32_t> label_all(const ContextModel& model, const SageEncoder& encoder,
                                    const BipartiteMultigraph& graph, const SplitCorpus& corpus,
                                    UnseenPolicy policy = UnseenPolicy::kFail);

// Same, from precomputed corpus embeddings.
std::vector<std::int32_t> label_all(const ContextModel& model, const BipartiteMultigraph& graph,
                                    const CorpusEmbeddings& embeddings);

// Fraction of points whose cluster's majority reference label matches
// their own. Points with a negative label in either vector are skipped.
double cluster_purity(std::span<const std::int32_t> clusters, std::span<const std::int32_t> reference);

}  // namespace iscon
