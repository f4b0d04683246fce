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

// Small corpora shared by the model tests.

#pragma once

#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "iscon/autograd.hpp"
#include "iscon/corpus.hpp"
#include "iscon/gradcheck.hpp"
#include "iscon/pipeline.hpp"

namespace iscon::fixture {

struct PlantedCorpus {
  SplitCorpus corpus;
  std::vector<std::int32_t> planted;  // per session
};

inline PlantedCorpus planted_corpus(const SynthOptions& options) {
  std::stringstream log, sidecar;
  synthesize(options, log, sidecar);
  PlantedCorpus out;
  out.corpus = split(filter_users(parse_log(log, LogSchema{}), 10), 3600);
  out.planted = planted_labels_for(out.corpus, read_planted_labels(sidecar));
  return out;
}

inline SynthOptions tiny_synth(std::size_t users = 6, std::size_t contexts = 2, std::size_t items = 6,
                               std::size_t sessions = 8, std::uint64_t seed = 3) {
  SynthOptions o;
  o.num_users = users;
  o.num_contexts = contexts;
  o.items_per_context = items;
  o.sessions_per_user = sessions;
  o.seed = seed;
  return o;
}

// Rows of "user,item,timestamp"; every user is kept.
inline SplitCorpus corpus_from_csv(const std::string& rows, SplitOptions options = {}) {
  std::istringstream in(rows);
  return split(parse_log(in, LogSchema{}), 3600, options);
}

// A few users with 0..30 interactions each, already in user-major time order.
inline std::vector<Interaction> random_stream(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> users(1, 5);
  std::uniform_int_distribution<int> count(0, 30);
  // Gaps cluster around the threshold so both sides of the boundary show up.
  std::uniform_int_distribution<Timestamp> gap(0, 8000);
  std::bernoulli_distribution exact(0.1);
  std::vector<Interaction> xs;
  const int nu = users(rng);
  for (int u = 0; u < nu; ++u) {
    Timestamp t = 1000;
    const int n = count(rng);
    for (int k = 0; k < n; ++k) {
      t += exact(rng) ? 3600 : gap(rng);
      xs.push_back({UserId(u), ItemId(k % 7), t});
    }
  }
  return xs;
}

inline void randomize(ParameterSet& p, Rng& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (ParamId id = 0; id < p.size(); ++id)
    for (double& v : p.value(id).data) v = u(rng);
}

inline Gradients analytic(const ParameterSet& params, const std::function<Var(Tape&)>& build) {
  Gradients g(params);
  Tape tape(params);
  tape.backward(build(tape), g);
  return g;
}

inline LossFunction as_loss(const std::function<Var(Tape&)>& build) {
  return [build](const ParameterSet& p) {
    Tape tape(p);
    return tape.scalar(build(tape));
  };
}

}  // namespace iscon::fixture
