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

// Planted-context log generator. Context c owns raw item ids
// [c * items_per_context, (c + 1) * items_per_context).

#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include "iscon/pipeline.hpp"

namespace iscon {

namespace {

constexpr Timestamp kBaseTimestamp = 1600000000;
constexpr Timestamp kMaxInSessionGap = 1799;
constexpr Timestamp kMinSessionGap = 7200;
constexpr Timestamp kExtraSessionGap = 86400;

}  // namespace

void synthesize(const SynthOptions& o, std::ostream& log, std::ostream& sidecar) {
  if (o.num_users == 0 || o.num_contexts == 0 || o.items_per_context == 0 ||
      o.sessions_per_user == 0 || o.min_session_length == 0 ||
      o.max_session_length < o.min_session_length) {
    throw std::invalid_argument("synthesize: sizes must be positive and min length <= max length");
  }
  if (o.stickiness < 0.0 || o.stickiness > 1.0) {
    throw std::invalid_argument("synthesize: stickiness must lie in [0, 1]");
  }
  std::mt19937_64 rng(o.seed);

  std::vector<double> weights(o.items_per_context);
  for (std::size_t j = 0; j < weights.size(); ++j) {
    weights[j] = 1.0 / std::pow(static_cast<double>(j + 1), o.zipf_exponent);
  }
  std::discrete_distribution<std::size_t> popularity(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> pick_context(0, o.num_contexts - 1);
  std::uniform_int_distribution<std::size_t> pick_length(o.min_session_length, o.max_session_length);
  std::uniform_int_distribution<Timestamp> in_gap(1, kMaxInSessionGap);
  std::uniform_int_distribution<Timestamp> out_gap(0, kExtraSessionGap);
  std::bernoulli_distribution stay(o.stickiness);

  sidecar << "# num_users=" << o.num_users << "\n"
          << "# num_contexts=" << o.num_contexts << "\n"
          << "# items_per_context=" << o.items_per_context << "\n"
          << "# sessions_per_user=" << o.sessions_per_user << "\n"
          << "# session_length=" << o.min_session_length << ".." << o.max_session_length << "\n"
          << "# stickiness=" << o.stickiness << "\n"
          << "# zipf_exponent=" << o.zipf_exponent << "\n"
          << "# seed=" << o.seed << "\n"
          << "user,session_index,start_timestamp,planted_context\n";

  for (std::size_t u = 0; u < o.num_users; ++u) {
    Timestamp t = kBaseTimestamp + static_cast<Timestamp>(u) * 97;
    std::size_t context = pick_context(rng);
    for (std::size_t s = 0; s < o.sessions_per_user; ++s) {
      if (s > 0 && !stay(rng)) context = pick_context(rng);
      const std::size_t length = pick_length(rng);
      sidecar << u << ',' << s << ',' << t << ',' << context << '\n';
      for (std::size_t k = 0; k < length; ++k) {
        if (k > 0) t += in_gap(rng);
        const std::size_t item = context * o.items_per_context + popularity(rng);
        log << u << ',' << item << ',' << t << '\n';
      }
      t += kMinSessionGap + out_gap(rng);
    }
  }
}

std::vector<PlantedSession> read_planted_labels(std::istream& in) {
  std::vector<PlantedSession> out;
  std::string line;
  bool header = true;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.rfind("user,", 0) == 0) continue;
    }
    std::stringstream row(line);
    std::string user, index, start, context;
    if (!std::getline(row, user, ',') || !std::getline(row, index, ',') ||
        !std::getline(row, start, ',') || !std::getline(row, context, ',')) {
      throw ParseError(number, "planted label row needs 4 fields");
    }
    try {
      out.push_back({user, std::stoul(index), std::stoll(start),
                     static_cast<std::uint32_t>(std::stoul(context))});
    } catch (const std::logic_error&) {
      throw ParseError(number, "non-numeric planted label field");
    }
  }
  return out;
}

std::vector<std::int32_t> planted_labels_for(const SplitCorpus& corpus,
                                             const std::vector<PlantedSession>& planted) {
  std::map<std::pair<std::string, Timestamp>, std::uint32_t> by_start;
  for (const PlantedSession& p : planted) by_start[{p.user, p.start}] = p.context;
  std::vector<std::int32_t> labels(corpus.sessions.size(), -1);
  for (const Session& s : corpus.sessions) {
    const auto it = by_start.find({corpus.users.raw[s.user], s.start});
    if (it != by_start.end()) labels[s.id] = static_cast<std::int32_t>(it->second);
  }
  return labels;
}

}  // namespace iscon
