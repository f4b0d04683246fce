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

namespace iscon {

// 1 + #{scores strictly greater} + #{equal scores at a smaller id}.
// Throws std::out_of_range when true_item is not a valid index.
std::size_t rank_of_truth(std::span<const double> scores, std::size_t true_item);

// Mean of 1/rank. Throws std::invalid_argument on an empty list or a zero rank.
double mrr(std::span<const std::size_t> ranks);

// Fraction of ranks <= k. Throws std::invalid_argument on an empty list or k == 0.
double recall_at_k(std::span<const std::size_t> ranks, std::size_t k = 10);

struct TTestResult {
  double t = 0.0;
  double p = 0.5;
  double degrees_of_freedom = 0.0;
};

// Welch two-sample t-test, one-tailed with H1: mean(a) > mean(b).
// Throws std::invalid_argument with fewer than two samples on either side.
TTestResult t_test_one_tailed(std::span<const double> a, std::span<const double> b);

// P(T <= t) for Student's t with `dof` degrees of freedom.
double student_t_cdf(double t, double dof);

struct RepetitionMetrics {
  std::uint64_t seed = 0;
  double mrr = 0.0;
  double recall = 0.0;
  std::size_t examples = 0;
};

struct EvalReport {
  std::vector<RepetitionMetrics> repetitions;
  std::size_t recall_k = 10;
  std::string config_hash;

  double mean_mrr() const;
  double mean_recall() const;
  std::vector<double> mrr_values() const;
  std::vector<double> recall_values() const;
};

}  // namespace iscon
