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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "iscon/contextualizer.hpp"

using namespace iscon;

namespace {

Tensor points(std::initializer_list<std::initializer_list<double>> rows) {
  Tensor t = Tensor::matrix(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (double v : row) t(r, c++) = v;
    ++r;
  }
  return t;
}

Tensor gaussian_points(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Tensor t = Tensor::matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const double shift = double(i % 5) * 3.0;
    for (std::size_t k = 0; k < d; ++k) t(i, k) = normal(rng) + (k == i % d ? shift : 0.0);
  }
  return t;
}

KMeansOptions opts(std::size_t k, std::uint64_t seed = 1) {
  KMeansOptions o;
  o.num_contexts = k;
  o.seed = seed;
  return o;
}

ContextModel centers_only(Tensor centers) {
  ContextModel m;
  m.centers = std::move(centers);
  return m;
}

}  // namespace

TEST(KMeans, SeparatedBlocks) {
  const ContextModel m = kmeans_fit(points({{0, 0}, {0, 1}, {10, 10}, {10, 11}}), opts(2));
  EXPECT_EQ(m.assignments[0], m.assignments[1]);
  EXPECT_EQ(m.assignments[2], m.assignments[3]);
  EXPECT_NE(m.assignments[0], m.assignments[2]);
  const auto low = m.centers.row(m.assignments[0]);
  const auto high = m.centers.row(m.assignments[2]);
  EXPECT_DOUBLE_EQ(low[0], 0.0);
  EXPECT_DOUBLE_EQ(low[1], 0.5);
  EXPECT_DOUBLE_EQ(high[0], 10.0);
  EXPECT_DOUBLE_EQ(high[1], 10.5);
  EXPECT_DOUBLE_EQ(m.inertia(), 1.0);
}

TEST(KMeans, OneClusterPerPoint) {
  const Tensor p = points({{0, 0}, {1, 2}, {-3, 4}, {5, 5}, {2, -1}});
  const ContextModel m = kmeans_fit(p, opts(5));
  EXPECT_EQ(m.inertia(), 0.0);
  std::vector<std::uint32_t> seen(m.assignments);
  std::sort(seen.begin(), seen.end());
  EXPECT_EQ(std::adjacent_find(seen.begin(), seen.end()), seen.end());
}

TEST(KMeans, TooFewPoints) {
  EXPECT_THROW(kmeans_fit(points({{0}, {1}, {2}}), opts(4)), std::invalid_argument);
}

TEST(KMeans, NonFiniteInputRejected) {
  EXPECT_ANY_THROW(kmeans_fit(points({{0}, {NAN}, {2}}), opts(2)));
}

TEST(KMeans, InertiaNonIncreasingAndFixedPoint) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor p = gaussian_points(200, 4, seed);
    KMeansOptions o = opts(7, seed);
    o.restarts = 1;
    const ContextModel m = kmeans_fit(p, o);
    for (std::size_t t = 1; t < m.inertia_history.size(); ++t) {
      EXPECT_LE(m.inertia_history[t], m.inertia_history[t - 1] + 1e-12);
    }
    for (std::size_t i = 0; i < p.rows(); ++i) EXPECT_EQ(assign(m, p.row(i)), m.assignments[i]);
  }
}

TEST(KMeans, BitIdenticalForSameSeed) {
  const Tensor p = gaussian_points(150, 3, 4);
  const ContextModel a = kmeans_fit(p, opts(6, 9));
  const ContextModel b = kmeans_fit(p, opts(6, 9));
  EXPECT_EQ(a.centers.data, b.centers.data);
  EXPECT_EQ(a.assignments, b.assignments);
  EXPECT_EQ(a.inertia_history, b.inertia_history);
}

TEST(Assign, ExactCenter) {
  Tensor c = Tensor::matrix(10, 2);
  for (std::size_t k = 0; k < 10; ++k) c(k, 0) = double(k);
  const ContextModel m = centers_only(c);
  const std::vector<double> x = {7.0, 0.0};
  EXPECT_EQ(assign(m, x), 7u);
}

TEST(Assign, TieGoesToLowestId) {
  Tensor c = Tensor::matrix(6, 1, 100.0);
  c(2, 0) = -1.0;
  c(5, 0) = 1.0;
  const ContextModel m = centers_only(c);
  const std::vector<double> x = {0.0};
  EXPECT_EQ(assign(m, x), 2u);
}

TEST(Assign, DimensionMismatch) {
  const ContextModel m = centers_only(Tensor::matrix(3, 2));
  const std::vector<double> x = {0.0, 0.0, 0.0};
  EXPECT_THROW(assign(m, x), std::invalid_argument);
}

TEST(Assign, RelabelingInvariance) {
  const Tensor p = gaussian_points(60, 3, 2);
  const ContextModel m = kmeans_fit(p, opts(5));
  std::vector<std::size_t> perm(5);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(3);
  std::shuffle(perm.begin(), perm.end(), rng);
  Tensor permuted = m.centers;
  for (std::size_t k = 0; k < 5; ++k) {
    std::copy(m.centers.row(k).begin(), m.centers.row(k).end(), permuted.row(perm[k]).begin());
  }
  const ContextModel q = centers_only(permuted);
  for (std::size_t i = 0; i < p.rows(); ++i) EXPECT_EQ(assign(q, p.row(i)), perm[assign(m, p.row(i))]);
}

class Labeling : public ::testing::Test {
 protected:
  void SetUp() override {
    pc_ = fixture::planted_corpus(fixture::tiny_synth(8, 2, 8, 10));
    graph_ = build_graph(pc_.corpus);
    SageOptions so;
    so.base_dim = 8;
    so.output_dim = 8;
    so.epochs = 3;
    so.batch_size = 64;
    encoder_ = train_encoder(graph_, so).encoder;
    model_ = kmeans_fit(embed_all_sessions(encoder_, graph_), opts(2));
  }
  fixture::PlantedCorpus pc_;
  BipartiteMultigraph graph_;
  SageEncoder encoder_;
  ContextModel model_;
};

TEST_F(Labeling, GraphSessionsPassThrough) {
  const auto labels = label_all(model_, encoder_, graph_, pc_.corpus);
  ASSERT_EQ(labels.size(), pc_.corpus.sessions.size());
  for (std::size_t s = 0; s < graph_.num_sessions(); ++s) {
    EXPECT_EQ(labels[graph_.corpus_session(s)], std::int32_t(model_.assignments[s]));
  }
}

TEST_F(Labeling, DuplicateSessionGetsSameLabel) {
  for (std::size_t s = 0; s < graph_.num_sessions(); ++s) {
    const Vec z = embed_new_session(encoder_, graph_, graph_.session_neighbors(s));
    EXPECT_EQ(assign(model_, z), model_.assignments[s]);
  }
}

TEST_F(Labeling, TestSessionsLabeledInductively) {
  const auto labels = label_all(model_, encoder_, graph_, pc_.corpus);
  std::size_t inductive = 0;
  for (const Session& s : pc_.corpus.sessions) {
    if (graph_.graph_session(s.id) >= 0) continue;
    ++inductive;
    EXPECT_EQ(labels[s.id], std::int32_t(assign(model_, embed_new_session(encoder_, graph_, s.items))));
  }
  EXPECT_GT(inductive, 0u);
}

TEST(Purity, Counts) {
  const std::vector<std::int32_t> clusters = {0, 0, 0, 1, 1, 2, -1};
  const std::vector<std::int32_t> truth = {5, 5, 6, 7, 7, 7, 5};
  EXPECT_DOUBLE_EQ(cluster_purity(clusters, truth), 5.0 / 6.0);
  EXPECT_THROW(cluster_purity(clusters, std::vector<std::int32_t>{1}), std::invalid_argument);
}
