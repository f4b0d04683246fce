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

#include "iscon/eval.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace iscon {

std::size_t rank_of_truth(std::span<const double> scores, std::size_t true_item) {
  if (true_item >= scores.size()) {
    throw std::out_of_range("rank_of_truth: item " + std::to_string(true_item) + " out of range");
  }
  const double truth = scores[true_item];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > truth || (scores[j] == truth && j < true_item)) ++rank;
  }
  return rank;
}

double mrr(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw std::invalid_argument("mrr: no ranks");
  double total = 0.0;
  for (std::size_t r : ranks) {
    if (r == 0) throw std::invalid_argument("mrr: ranks start at 1");
    total += 1.0 / static_cast<double>(r);
  }
  return total / static_cast<double>(ranks.size());
}

double recall_at_k(std::span<const std::size_t> ranks, std::size_t k) {
  if (ranks.empty()) throw std::invalid_argument("recall_at_k: no ranks");
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be positive");
  std::size_t hits = 0;
  for (std::size_t r : ranks) {
    if (r == 0) throw std::invalid_argument("recall_at_k: ranks start at 1");
    if (r <= k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

double student_t_cdf(double t, double dof) {
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  boost::math::students_t dist(dof);
  return boost::math::cdf(dist, t);
}

TTestResult t_test_one_tailed(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("t_test_one_tailed: at least two samples per group required");
  }
  auto moments = [](std::span<const double> xs) {
    const double n = static_cast<double>(xs.size());
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [mean_a, var_a] = moments(a);
  const auto [mean_b, var_b] = moments(b);
  const double se_a = var_a / static_cast<double>(a.size());
  const double se_b = var_b / static_cast<double>(b.size());
  const double se2 = se_a + se_b;

  TTestResult r;
  if (se2 == 0.0) {
    if (mean_a == mean_b) return {0.0, 0.5, 0.0};
    r.t = mean_a > mean_b ? std::numeric_limits<double>::infinity()
                          : -std::numeric_limits<double>::infinity();
    r.p = mean_a > mean_b ? 0.0 : 1.0;
    return r;
  }
  r.t = (mean_a - mean_b) / std::sqrt(se2);
  r.degrees_of_freedom = se2 * se2 / (se_a * se_a / static_cast<double>(a.size() - 1) +
                                      se_b * se_b / static_cast<double>(b.size() - 1));
  // Upper tail, evaluated through the complement for accuracy at large t.
  boost::math::students_t dist(r.degrees_of_freedom);
  r.p = boost::math::cdf(boost::math::complement(dist, r.t));
  return r;
}

double EvalReport::mean_mrr() const {
  const auto v = mrr_values();
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

double EvalReport::mean_recall() const {
  const auto v = recall_values();
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

std::vector<double> EvalReport::mrr_values() const {
  std::vector<double> v;
  for (const auto& r : repetitions) v.push_back(r.mrr);
  return v;
}

std::vector<double> EvalReport::recall_values() const {
  std::vector<double> v;
  for (const auto& r : repetitions) v.push_back(r.recall);
  return v;
}

}  // namespace iscon
