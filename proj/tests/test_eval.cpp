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
#include <random>

#include "iscon/eval.hpp"
#include "oracles.hpp"

using namespace iscon;

TEST(RankOfTruth, TieRule) {
  EXPECT_EQ(rank_of_truth(std::vector<double>{0.1, 0.7, 0.2}, 1), 1u);
  const std::vector<double> uniform(10, 0.1);
  EXPECT_EQ(rank_of_truth(uniform, 0), 1u);
  EXPECT_EQ(rank_of_truth(uniform, 9), 10u);
  EXPECT_THROW(rank_of_truth(uniform, 10), std::out_of_range);
}

TEST(Mrr, Examples) {
  EXPECT_DOUBLE_EQ(mrr(std::vector<std::size_t>{1}), 1.0);
  EXPECT_NEAR(mrr(std::vector<std::size_t>{1, 2, 4}), 0.583333, 1e-6);
  EXPECT_THROW(mrr(std::vector<std::size_t>{}), std::invalid_argument);
}

TEST(Recall, Boundaries) {
  EXPECT_DOUBLE_EQ(recall_at_k(std::vector<std::size_t>{10}, 10), 1.0);
  EXPECT_DOUBLE_EQ(recall_at_k(std::vector<std::size_t>{11}, 10), 0.0);
  EXPECT_DOUBLE_EQ(recall_at_k(std::vector<std::size_t>{1, 1, 1}), 1.0);
  EXPECT_THROW(recall_at_k(std::vector<std::size_t>{}), std::invalid_argument);
}

TEST(Metrics, MatchFullSortOracle) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> coarse(0, 20);
  std::uniform_int_distribution<std::size_t> width(1, 60);
  std::vector<std::size_t> ranks, expect;
  for (int trial = 0; trial < 2000; ++trial) {
    std::vector<double> scores(width(rng));
    // Coarse scores force plenty of ties.
    for (double& s : scores) s = coarse(rng) / 4.0;
    const std::size_t truth = std::uniform_int_distribution<std::size_t>(0, scores.size() - 1)(rng);
    ranks.push_back(rank_of_truth(scores, truth));
    expect.push_back(oracle::full_sort_rank(scores, truth));
  }
  EXPECT_EQ(ranks, expect);
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r : expect) {
    sum += 1.0 / double(r);
    hits += r <= 10;
  }
  EXPECT_EQ(mrr(ranks), sum / double(expect.size()));
  EXPECT_EQ(recall_at_k(ranks, 10), double(hits) / double(expect.size()));
}

TEST(Metrics, MonotoneTransformInvariance) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> scores(50);
  for (double& s : scores) s = n(rng);
  std::vector<double> transformed = scores;
  for (double& s : transformed) s = std::exp(3.0 * s) + 7.0;
  for (std::size_t t = 0; t < scores.size(); ++t) {
    EXPECT_EQ(rank_of_truth(scores, t), rank_of_truth(transformed, t));
  }
}

TEST(Recall, NonDecreasingInK) {
  const std::vector<std::size_t> ranks = {1, 3, 3, 9, 14, 50, 2};
  double prev = 0.0;
  for (std::size_t k = 1; k <= 50; ++k) {
    const double r = recall_at_k(ranks, k);
    EXPECT_GE(r, prev);
    prev = r;
  }
  EXPECT_DOUBLE_EQ(prev, 1.0);
}

TEST(TTest, NullCase) {
  const std::vector<double> a = {0.3, 0.31, 0.29};
  const TTestResult r = t_test_one_tailed(a, a);
  EXPECT_DOUBLE_EQ(r.t, 0.0);
  EXPECT_DOUBLE_EQ(r.p, 0.5);
  const std::vector<double> flat = {1.0, 1.0};
  const TTestResult z = t_test_one_tailed(flat, flat);
  EXPECT_DOUBLE_EQ(z.t, 0.0);
  EXPECT_DOUBLE_EQ(z.p, 0.5);
}

TEST(TTest, ExtremeSeparation) {
  const std::vector<double> b = {1.0, 1.1, 0.9, 1.05, 0.95};
  std::vector<double> a = b;
  for (double& v : a) v += 100 * 0.079;
  EXPECT_LT(t_test_one_tailed(a, b).p, 1e-4);
  EXPECT_GT(t_test_one_tailed(b, a).p, 1 - 1e-4);
}

TEST(TTest, ReferenceValues) {
  // Welch one-sided ("greater") results from an external statistics package.
  const TTestResult r1 = t_test_one_tailed(std::vector<double>{0.31, 0.35, 0.33, 0.36, 0.34},
                                           std::vector<double>{0.30, 0.31, 0.29, 0.32, 0.305});
  EXPECT_NEAR(r1.t, 3.316624790355403, 1e-9);
  EXPECT_NEAR(r1.p, 0.007264125153035661, 1e-6);
  const TTestResult r2 = t_test_one_tailed(std::vector<double>{1.0, 2.0, 3.5},
                                           std::vector<double>{0.5, 0.9, 1.1, 1.4});
  EXPECT_NEAR(r2.t, 1.5876153873090484, 1e-9);
  EXPECT_NEAR(r2.p, 0.11921967517623629, 1e-6);
}

TEST(TTest, AgreesWithQuadratureOracle) {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> a(2 + trial % 6), b(2 + (trial * 7) % 5);
    for (double& v : a) v = 0.4 + n(rng);
    for (double& v : b) v = n(rng) * 2.0;
    const TTestResult r = t_test_one_tailed(a, b);
    const oracle::Welch w = oracle::welch_greater(a, b);
    EXPECT_NEAR(r.t, w.t, 1e-12);
    EXPECT_NEAR(r.degrees_of_freedom, w.dof, 1e-9);
    EXPECT_NEAR(r.p, w.p, 1e-6);
  }
}

TEST(StudentT, CdfAgreesWithOracle) {
  EXPECT_NEAR(student_t_cdf(1.7, 3.3), 0.9103383605464598, 1e-9);
  EXPECT_NEAR(student_t_cdf(-0.4, 12.0), 0.3480926526963336, 1e-9);
  for (double dof : {1.0, 2.5, 4.0, 8.0, 30.0}) {
    for (double t : {-3.0, -0.5, 0.0, 0.7, 2.2}) {
      EXPECT_NEAR(student_t_cdf(t, dof), oracle::t_cdf(t, dof), 1e-8);
    }
  }
}

TEST(TTest, NeedsTwoSamples) {
  EXPECT_THROW(t_test_one_tailed(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
               std::invalid_argument);
}

TEST(EvalReport, Means) {
  EvalReport r;
  r.repetitions = {{0, 0.2, 0.5, 10}, {1, 0.4, 0.7, 10}};
  EXPECT_DOUBLE_EQ(r.mean_mrr(), 0.3);
  EXPECT_DOUBLE_EQ(r.mean_recall(), 0.6);
  EXPECT_EQ(r.mrr_values(), (std::vector<double>{0.2, 0.4}));
}
