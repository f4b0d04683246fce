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

#include "iscon/contextualizer.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>

namespace iscon {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    d += diff * diff;
  }
  return d;
}

std::pair<std::uint32_t, double> nearest(const Tensor& centers, std::span<const double> x) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d = squared_distance(centers.row(c), x);
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return {best, best_d};
}

Tensor kmeans_plus_plus(const Tensor& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.rows();
  Tensor centers = Tensor::matrix(k, points.cols());
  std::uniform_int_distribution<std::size_t> uniform(0, n - 1);
  auto place = [&](std::size_t c, std::size_t p) {
    std::copy(points.row(p).begin(), points.row(p).end(), centers.row(c).begin());
  };
  place(0, uniform(rng));
  std::vector<double> d2(n);
  for (std::size_t p = 0; p < n; ++p) d2[p] = squared_distance(points.row(p), centers.row(0));
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t chosen;
    if (total > 0.0) {
      std::discrete_distribution<std::size_t> weighted(d2.begin(), d2.end());
      chosen = weighted(rng);
    } else {
      chosen = uniform(rng);
    }
    place(c, chosen);
    for (std::size_t p = 0; p < n; ++p) {
      d2[p] = std::min(d2[p], squared_distance(points.row(p), centers.row(c)));
    }
  }
  return centers;
}

// Nearest-center assignment; empty clusters take over the point farthest
// from its center and the assignment is redone. Returns the inertia.
double assign_all(const Tensor& points, Tensor& centers, std::vector<std::uint32_t>& labels) {
  const std::size_t n = points.rows();
  const std::size_t k = centers.rows();
  std::vector<double> dist(n);
  for (std::size_t attempt = 0;; ++attempt) {
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t p = 0; p < n; ++p) {
      auto [c, d] = nearest(centers, points.row(p));
      labels[p] = c;
      dist[p] = d;
      ++sizes[c];
    }
    const auto empty = std::find(sizes.begin(), sizes.end(), std::size_t{0});
    if (empty == sizes.end() || attempt >= k) break;
    std::size_t far = n;
    for (std::size_t p = 0; p < n; ++p) {
      if (sizes[labels[p]] > 1 && (far == n || dist[p] > dist[far])) far = p;
    }
    if (far == n || dist[far] == 0.0) break;
    const auto c = static_cast<std::size_t>(empty - sizes.begin());
    std::copy(points.row(far).begin(), points.row(far).end(), centers.row(c).begin());
  }
  double inertia = 0.0;
  for (double d : dist) inertia += d;
  return inertia;
}

void update_centers(const Tensor& points, const std::vector<std::uint32_t>& labels, Tensor& centers) {
  const std::size_t k = centers.rows();
  Tensor sums = Tensor::matrix(k, points.cols());
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t p = 0; p < points.rows(); ++p) {
    auto dst = sums.row(labels[p]);
    auto src = points.row(p);
    for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
    ++counts[labels[p]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    if (counts[c] == 0) continue;
    auto dst = centers.row(c);
    auto src = sums.row(c);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = src[j] / double(counts[c]);
  }
}

ContextModel lloyd(const Tensor& points, Tensor centers, std::size_t max_iters) {
  ContextModel model;
  std::vector<std::uint32_t> labels(points.rows(), 0);
  std::vector<std::uint32_t> previous;
  for (std::size_t iter = 1;; ++iter) {
    model.inertia_history.push_back(assign_all(points, centers, labels));
    model.iterations = iter;
    if (labels == previous || iter >= max_iters) break;
    previous = labels;
    update_centers(points, labels, centers);
  }
  model.centers = std::move(centers);
  model.assignments = std::move(labels);
  return model;
}

}  // namespace

ContextModel kmeans_fit(const Tensor& points, const KMeansOptions& options) {
  if (options.num_contexts == 0) throw std::invalid_argument("kmeans_fit: num_contexts must be positive");
  if (points.rows() < options.num_contexts) {
    throw std::invalid_argument("kmeans_fit: " + std::to_string(points.rows()) + " points for " +
                                std::to_string(options.num_contexts) + " contexts");
  }
  check_finite(points.data, "kmeans_fit points");
  Rng rng(options.seed);
  ContextModel best;
  bool have_best = false;
  for (std::size_t r = 0; r < std::max<std::size_t>(1, options.restarts); ++r) {
    Tensor init = kmeans_plus_plus(points, options.num_contexts, rng);
    ContextModel run = lloyd(points, std::move(init), std::max<std::size_t>(1, options.max_iters));
    if (!have_best || run.inertia() < best.inertia()) {
      best = std::move(run);
      have_best = true;
    }
  }
  return best;
}

std::uint32_t assign(const ContextModel& model, std::span<const double> embedding) {
  if (embedding.size() != model.dim()) {
    throw std::invalid_argument("assign: embedding has " + std::to_string(embedding.size()) +
                                " dims, centers have " + std::to_string(model.dim()));
  }
  return nearest(model.centers, embedding).first;
}

std::vector<std::int32_t> label_all(const ContextModel& model, const BipartiteMultigraph& graph,
                                    const CorpusEmbeddings& embeddings) {
  if (model.assignments.size() != graph.num_sessions()) {
    throw std::invalid_argument("label_all: model was not fit on this graph's sessions");
  }
  const std::size_t n = embeddings.source.size();
  std::vector<std::int32_t> labels(n, kUnlabeled);
  for (std::size_t s = 0; s < n; ++s) {
    const std::int64_t g = graph.graph_session(static_cast<SessionId>(s));
    if (g >= 0) {
      labels[s] = static_cast<std::int32_t>(model.assignments[static_cast<std::size_t>(g)]);
    } else if (embeddings.source[s] == EmbeddingSource::kInductive) {
      labels[s] = static_cast<std::int32_t>(assign(model, embeddings.embeddings.row(s)));
    }
  }
  return labels;
}

std::vector<std::int32_t> label_all(const ContextModel& model, const SageEncoder& encoder,
                                    const BipartiteMultigraph& graph, const SplitCorpus& corpus,
                                    UnseenPolicy policy) {
  if (policy == UnseenPolicy::kFail) {
    for (const Session& s : corpus.sessions) {
      if (graph.graph_session(s.id) < 0) embed_new_session(encoder, graph, s.items);
    }
  }
  return label_all(model, graph, embed_corpus_sessions(encoder, graph, corpus));
}

double cluster_purity(std::span<const std::int32_t> clusters, std::span<const std::int32_t> reference) {
  if (clusters.size() != reference.size()) throw std::invalid_argument("cluster_purity: size mismatch");
  std::map<std::int32_t, std::map<std::int32_t, std::size_t>> table;
  std::size_t total = 0;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    if (clusters[k] < 0 || reference[k] < 0) continue;
    ++table[clusters[k]][reference[k]];
    ++total;
  }
  if (total == 0) return 0.0;
  std::size_t agree = 0;
  for (const auto& [cluster, counts] : table) {
    std::size_t top = 0;
    for (const auto& [label, count] : counts) top = std::max(top, count);
    agree += top;
  }
  return double(agree) / double(total);
}

}  // namespace iscon
