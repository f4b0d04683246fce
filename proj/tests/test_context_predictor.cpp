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
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "iscon/context_predictor.hpp"

using namespace iscon;

namespace {

std::string sessions_csv(const std::string& user, std::size_t sessions, std::size_t items_per_session,
                         Timestamp base = 0) {
  std::ostringstream out;
  for (std::size_t s = 0; s < sessions; ++s) {
    for (std::size_t k = 0; k < items_per_session; ++k) {
      out << user << ",i" << (s + k) % 4 << "," << base + Timestamp(s) * 10000 + Timestamp(k) * 60 << "\n";
    }
  }
  return out.str();
}

Tensor random_embeddings(std::size_t n, std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal;
  Tensor t = Tensor::matrix(n, d);
  for (double& v : t.data) v = normal(rng);
  return t;
}

ContextPredictorConfig small_config(const SplitCorpus& c, const SessionFeatures& f, std::size_t contexts) {
  ContextPredictorConfig cfg;
  cfg.num_users = c.num_users();
  cfg.num_items = c.num_items();
  cfg.num_contexts = contexts;
  cfg.feature_dim = f.dim();
  cfg.user_dim = 3;
  cfg.item_dim = 4;
  cfg.hidden_dim = 3;
  cfg.max_history = 50;
  return cfg;
}

std::vector<std::size_t> all_indices(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

}  // namespace

TEST(LongTerm, WindowRules) {
  const SplitCorpus c = fixture::corpus_from_csv(sessions_csv("u", 60, 1));
  ASSERT_EQ(c.sessions.size(), 60u);
  const SessionFeatures f = build_session_features(c, random_embeddings(60, 2, 1));

  const auto third = long_term_input(f, 0, 2, 50);
  ASSERT_EQ(third.size(), 2u);
  EXPECT_EQ(third[0], Vec(f.features.row(0).begin(), f.features.row(0).end()));
  EXPECT_EQ(third[1], Vec(f.features.row(1).begin(), f.features.row(1).end()));

  const auto first = long_term_input(f, 0, 0, 50);
  ASSERT_EQ(first.size(), 1u);
  EXPECT_EQ(first[0], Vec(f.dim(), 0.0));

  const auto sixtieth = long_term_input(f, 0, 59, 50);
  ASSERT_EQ(sixtieth.size(), 50u);
  for (std::size_t k = 0; k < 50; ++k) {
    // 1-based sessions 10..59 are rows 9..58.
    EXPECT_EQ(sixtieth[k], Vec(f.features.row(9 + k).begin(), f.features.row(9 + k).end()));
  }
  EXPECT_THROW(long_term_input(f, 1, 0, 50), std::out_of_range);
}

TEST(LongTerm, HistoryIsPerUser) {
  const SplitCorpus c =
      fixture::corpus_from_csv(sessions_csv("a", 3, 2) + sessions_csv("b", 4, 2, 500));
  const SessionFeatures f = build_session_features(c, random_embeddings(c.sessions.size(), 2, 2));
  const std::size_t b_first = c.user_session_offsets[1];
  EXPECT_EQ(long_term_input(f, 1, SessionId(b_first), 50).size(), 1u);
  EXPECT_EQ(long_term_input(f, 1, SessionId(b_first + 3), 50).size(), 3u);
  EXPECT_THROW(long_term_input(f, 0, SessionId(b_first), 50), std::out_of_range);
}

TEST(Features, NormalizedOnTrainSplitOnly) {
  std::string rows;
  for (int s = 0; s < 10; ++s) {
    for (int k = 0; k <= s % 3; ++k) {
      rows += "u,i" + std::to_string(k) + "," + std::to_string(s * 10000 + k * (100 + 50 * s)) + "\n";
    }
  }
  const SplitCorpus c = fixture::corpus_from_csv(rows);
  std::vector<double> d;
  for (const Session& s : c.sessions) {
    if (c.session_split(s.id) == Split::kTrain) d.push_back(std::log1p(double(s.duration())));
  }
  ASSERT_LT(d.size(), c.sessions.size());
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / double(d.size());
  double var = 0.0;
  for (double x : d) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / double(d.size()));

  const SessionFeatures f = build_session_features(c, random_embeddings(c.sessions.size(), 2, 3));
  EXPECT_NEAR(f.normalizer.duration_mean, mean, 1e-12);
  EXPECT_NEAR(f.normalizer.duration_std, sd, 1e-12);
  EXPECT_EQ(f.dim(), 5u);
  for (const Session& s : c.sessions) {
    EXPECT_NEAR(f.features(s.id, 2), (std::log1p(double(s.duration())) - mean) / sd, 1e-12);
    EXPECT_NEAR(f.features(s.id, 4), std::log1p(double(s.length())), 1e-12);
  }
}

class Predictor : public ::testing::Test {
 protected:
  void SetUp() override {
    corpus_ = fixture::corpus_from_csv(sessions_csv("a", 4, 3) + sessions_csv("b", 3, 2, 777));
    features_ = build_session_features(corpus_, random_embeddings(corpus_.sessions.size(), 2, 4));
    Rng rng(6);
    model_ = ContextPredictor::create(small_config(corpus_, features_, 4), rng);
  }
  SplitCorpus corpus_;
  SessionFeatures features_;
  ContextPredictor model_;
};

TEST_F(Predictor, HeadShape) {
  const ContextPredictorConfig& cfg = model_.config();
  EXPECT_EQ(model_.head().in_dim, cfg.user_dim + 4 * cfg.hidden_dim);
  EXPECT_EQ(model_.head().out_dim, 4u);
}

TEST_F(Predictor, ZeroHeadIsUniform) {
  ParameterSet& p = model_.params();
  p.value(model_.head().weight).fill(0.0);
  p.value(model_.head().bias).fill(0.0);
  const std::vector<ItemId> prefix = {1, 2};
  for (double q : model_.predict(features_, 0, 2, prefix)) EXPECT_DOUBLE_EQ(q, 0.25);
}

TEST_F(Predictor, DistributionForEveryPrefixLength) {
  for (const Session& s : corpus_.sessions) {
    for (std::size_t k = 0; k <= s.items.size(); ++k) {
      const Vec q = model_.predict(features_, s.user, s.id, std::span(s.items).first(k));
      double total = 0.0;
      for (double v : q) {
        EXPECT_GT(v, 0.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-9);
    }
  }
}

TEST_F(Predictor, EmptyPrefixSameHistoryIsDeterministic) {
  const auto history = long_term_input(features_, 0, 2, 50);
  EXPECT_EQ(model_.predict(0, {}, history), model_.predict(0, {}, history));
}

TEST_F(Predictor, FrozenShortTermIgnoresPrefix) {
  ParameterSet& p = model_.params();
  for (ParamId id = 0; id < p.size(); ++id) {
    if (p.name(id).rfind("ctx.short.", 0) == 0) p.value(id).fill(0.0);
  }
  const auto history = long_term_input(features_, 0, 3, 50);
  const Vec base = model_.predict(0, {}, history);
  const std::vector<std::vector<ItemId>> prefixes = {{0}, {1, 2}, {3, 3, 0}};
  for (const auto& prefix : prefixes) EXPECT_EQ(model_.predict(0, prefix, history), base);
}

TEST_F(Predictor, UnknownIdsRejected) {
  const auto history = long_term_input(features_, 0, 1, 50);
  const std::vector<ItemId> bad = {ItemId(corpus_.num_items())};
  EXPECT_THROW(model_.predict(0, bad, history), std::out_of_range);
  EXPECT_THROW(model_.predict(UserId(corpus_.num_users()), {}, history), std::out_of_range);
}

TEST_F(Predictor, GradientCheckEveryParameterGroup) {
  Rng rng(11);
  fixture::randomize(model_.params(), rng, 0.4);
  const auto examples = build_prefix_examples(corpus_, Split::kTrain, 50);
  std::vector<std::int32_t> labels(corpus_.sessions.size());
  for (std::size_t s = 0; s < labels.size(); ++s) labels[s] = std::int32_t(s % 4);
  const auto selection = all_indices(examples.size());
  // Mean over examples, the objective the trainer differentiates.
  auto build = [&](Tape& t) {
    return t.scale(context_batch_loss(t, model_, features_, examples, labels, selection),
                   1.0 / double(examples.size()));
  };
  const Gradients g = fixture::analytic(model_.params(), build);
  GradCheckOptions o;
  o.samples_per_tensor = 12;
  const GradCheckReport r = finite_diff_check(fixture::as_loss(build), model_.params(), g, o);
  EXPECT_TRUE(r.passed) << r.worst_parameter << " " << r.max_relative_error;
  EXPECT_LT(r.max_relative_error, 1e-4);
  std::set<std::string> covered;
  for (const auto& e : r.entries) covered.insert(e.parameter);
  EXPECT_EQ(covered.size(), model_.params().size());
}

TEST(PredictorTraining, MemorizesSingleSession) {
  SplitOptions so;
  so.train_fraction = 1.0;
  so.validation_fraction = 0.0;
  const SplitCorpus c = fixture::corpus_from_csv("u,x,0\nu,y,60\nu,z,120\n", so);
  const SessionFeatures f = build_session_features(c, random_embeddings(1, 2, 5));
  for (std::size_t contexts : {1u, 2u}) {
    Rng rng(1);
    ContextPredictor m = ContextPredictor::create(small_config(c, f, contexts), rng);
    AdamState adam(m.params(), AdamConfig{0.05});
    TrainOptions t;
    t.max_epochs = 50;
    t.batch_size = 8;
    const std::vector<std::int32_t> labels = {std::int32_t(contexts - 1)};
    auto examples = build_prefix_examples(c, Split::kTrain, 50);
    for (auto& e : build_prefix_examples(c, Split::kValidation, 50)) examples.push_back(std::move(e));
    ASSERT_EQ(examples.size(), 3u);
    const TrainHistory h = train_context(m, adam, f, examples, {}, labels, t);
    EXPECT_LT(h.train_loss.back(), 1e-2) << contexts;
  }
}

TEST(PredictorTraining, SameSeedSameLoss) {
  const SplitCorpus c = fixture::corpus_from_csv(sessions_csv("a", 5, 3) + sessions_csv("b", 5, 2, 300));
  const SessionFeatures f = build_session_features(c, random_embeddings(c.sessions.size(), 2, 6));
  const auto train = build_prefix_examples(c, Split::kTrain, 50);
  const auto val = build_prefix_examples(c, Split::kValidation, 50);
  std::vector<std::int32_t> labels(c.sessions.size());
  for (std::size_t s = 0; s < labels.size(); ++s) labels[s] = std::int32_t(s % 2);
  auto run = [&] {
    Rng rng(2);
    ContextPredictor m = ContextPredictor::create(small_config(c, f, 2), rng);
    AdamState adam(m.params(), AdamConfig{0.01});
    TrainOptions t;
    t.max_epochs = 5;
    t.batch_size = 4;
    t.seed = 9;
    return train_context(m, adam, f, train, val, labels, t).train_loss;
  };
  EXPECT_EQ(run(), run());
}

TEST(PredictorTraining, EmptyTrainingSetIsAnError) {
  const SplitCorpus c = fixture::corpus_from_csv(sessions_csv("a", 3, 2));
  const SessionFeatures f = build_session_features(c, random_embeddings(c.sessions.size(), 2, 7));
  Rng rng(3);
  ContextPredictor m = ContextPredictor::create(small_config(c, f, 2), rng);
  AdamState adam(m.params(), AdamConfig{});
  const std::vector<std::int32_t> labels(c.sessions.size(), 0);
  EXPECT_THROW(train_context(m, adam, f, {}, {}, labels, TrainOptions{}), std::invalid_argument);
}

TEST(TopK, HandRanked) {
  const std::vector<double> q = {0.1, 0.5, 0.2, 0.15, 0.05};
  EXPECT_EQ(top_k_contexts(q, 3), (std::vector<std::uint32_t>{1, 2, 3}));
  EXPECT_EQ(top_k_contexts(q, 1), (std::vector<std::uint32_t>{1}));
}

TEST(TopK, TiesGoToLowerIds) {
  const std::vector<double> q(6, 1.0 / 6.0);
  EXPECT_EQ(top_k_contexts(q, 3), (std::vector<std::uint32_t>{0, 1, 2}));
}

TEST(TopK, AllAndTooMany) {
  const std::vector<double> q = {0.3, 0.1, 0.6};
  EXPECT_EQ(top_k_contexts(q, 3), (std::vector<std::uint32_t>{0, 1, 2}));
  EXPECT_THROW(top_k_contexts(q, 4), std::invalid_argument);
  EXPECT_THROW(top_k_contexts(q, 0), std::invalid_argument);
}

TEST(TopK, StrictlyAscendingOfSizeK) {
  Rng rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> q(12);
    for (double& v : q) v = std::round(u(rng) * 5.0);  // plenty of ties
    const std::size_t k = 1 + std::size_t(trial) % 12;
    const auto ids = top_k_contexts(q, k);
    ASSERT_EQ(ids.size(), k);
    for (std::size_t j = 1; j < k; ++j) EXPECT_LT(ids[j - 1], ids[j]);
    double kth = 1e9;
    for (auto id : ids) kth = std::min(kth, q[id]);
    for (std::uint32_t id = 0; id < 12; ++id) {
      if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
        EXPECT_LE(q[id], kth);
      }
    }
  }
}
