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

#include "iscon/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <istream>
#include <numeric>
#include <ostream>
#include <string_view>
#include <unordered_map>

#include "json.hpp"

namespace iscon {

namespace {

std::vector<std::string_view> split_fields(std::string_view line, char delimiter) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<Timestamp> parse_timestamp(std::string_view field) {
  double value = 0.0;
  const char* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) return std::nullopt;
  return static_cast<Timestamp>(std::floor(value));
}

class Compactor {
 public:
  std::uint32_t id(std::string_view raw, IdMap& map) {
    auto [it, inserted] = ids_.try_emplace(std::string(raw), static_cast<std::uint32_t>(map.size()));
    if (inserted) map.raw.emplace_back(raw);
    return it->second;
  }

 private:
  std::unordered_map<std::string, std::uint32_t> ids_;
};

void sort_by_user_then_time(std::vector<Interaction>& xs) {
  std::stable_sort(xs.begin(), xs.end(), [](const Interaction& a, const Interaction& b) {
    if (a.user != b.user) return a.user < b.user;
    return a.timestamp < b.timestamp;
  });
}

}  // namespace

ParseError::ParseError(std::size_t line, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

InteractionLog parse_log(std::istream& source, const LogSchema& schema) {
  InteractionLog log;
  Compactor users;
  Compactor items;
  const std::size_t needed =
      std::max({schema.columns, schema.user_column + 1, schema.item_column + 1,
                schema.timestamp_column + 1});
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(source, line)) {
    ++line_no;
    if (line_no == 1 && schema.has_header) continue;
    const std::string_view view = trim(line);
    if (view.empty()) continue;

    auto fields = split_fields(view, schema.delimiter);
    std::string problem;
    std::optional<Timestamp> ts;
    if (fields.size() < needed) {
      problem = "expected " + std::to_string(needed) + " columns, found " + std::to_string(fields.size());
    } else if (!(ts = parse_timestamp(trim(fields[schema.timestamp_column])))) {
      problem = "non-numeric timestamp '" + std::string(trim(fields[schema.timestamp_column])) + "'";
    } else if (trim(fields[schema.user_column]).empty() || trim(fields[schema.item_column]).empty()) {
      problem = "empty user or item field";
    }
    if (!problem.empty()) {
      if (!schema.skip_malformed) throw ParseError(line_no, problem);
      log.skipped.push_back({line_no, problem});
      continue;
    }
    Interaction x;
    x.user = users.id(trim(fields[schema.user_column]), log.users);
    x.item = items.id(trim(fields[schema.item_column]), log.items);
    x.timestamp = *ts;
    log.interactions.push_back(x);
  }
  sort_by_user_then_time(log.interactions);
  return log;
}

InteractionLog filter_users(const InteractionLog& log, std::size_t min_count) {
  std::vector<std::size_t> counts(log.users.size(), 0);
  for (const auto& x : log.interactions) ++counts[x.user];

  constexpr std::uint32_t kDropped = std::numeric_limits<std::uint32_t>::max();
  InteractionLog out;
  out.skipped = log.skipped;
  std::vector<std::uint32_t> user_map(log.users.size(), kDropped);
  for (std::size_t u = 0; u < counts.size(); ++u) {
    if (counts[u] >= min_count) {
      user_map[u] = static_cast<std::uint32_t>(out.users.size());
      out.users.raw.push_back(log.users.raw[u]);
    }
  }
  std::vector<char> item_used(log.items.size(), 0);
  for (const auto& x : log.interactions) {
    if (user_map[x.user] != kDropped) item_used[x.item] = 1;
  }
  std::vector<std::uint32_t> item_map(log.items.size(), kDropped);
  for (std::size_t i = 0; i < item_used.size(); ++i) {
    if (item_used[i]) {
      item_map[i] = static_cast<std::uint32_t>(out.items.size());
      out.items.raw.push_back(log.items.raw[i]);
    }
  }
  for (const auto& x : log.interactions) {
    if (user_map[x.user] == kDropped) continue;
    out.interactions.push_back({user_map[x.user], item_map[x.item], x.timestamp});
  }
  // Old ids are already grouped and time-sorted; the monotone remap keeps that order.
  return out;
}

std::vector<Session> sessionize(const std::vector<Interaction>& interactions, Timestamp idle_threshold) {
  std::vector<Session> sessions;
  for (std::size_t k = 0; k < interactions.size(); ++k) {
    const Interaction& x = interactions[k];
    const bool new_user = k == 0 || interactions[k - 1].user != x.user;
    if (!new_user) {
      const Interaction& prev = interactions[k - 1];
      if (x.user < prev.user || x.timestamp < prev.timestamp) {
        throw std::invalid_argument("sessionize: interactions must be grouped by user and time-sorted");
      }
    } else if (k > 0 && x.user < interactions[k - 1].user) {
      throw std::invalid_argument("sessionize: interactions must be grouped by user and time-sorted");
    }
    if (new_user || x.timestamp - interactions[k - 1].timestamp > idle_threshold) {
      if (!new_user) sessions.back().gap = x.timestamp - sessions.back().end;
      Session s;
      s.id = static_cast<SessionId>(sessions.size());
      s.user = x.user;
      s.start = x.timestamp;
      s.first_interaction = k;
      sessions.push_back(std::move(s));
    }
    Session& cur = sessions.back();
    cur.items.push_back(x.item);
    cur.end = x.timestamp;
  }
  return sessions;
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValidation: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kValidation;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: " + name);
}

SplitCounts split_counts(std::size_t n, const SplitOptions& options) {
  SplitCounts c;
  const auto train_side =
      std::min(n, static_cast<std::size_t>(std::floor(options.train_fraction * double(n) + 1e-9)));
  std::size_t val = 0;
  if (train_side > 0) {
    val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(options.validation_fraction * double(train_side))));
    val = std::min(val, train_side);
  }
  c.train = train_side - val;
  c.validation = val;
  c.test = n - train_side;
  return c;
}

std::size_t SplitCorpus::count(Split s) const {
  return static_cast<std::size_t>(std::count(split.begin(), split.end(), s));
}

Split SplitCorpus::session_split(SessionId id) const {
  return split.at(sessions.at(id).first_interaction);
}

std::size_t SplitCorpus::observed_length(SessionId id) const {
  const Session& s = sessions.at(id);
  std::size_t n = 0;
  for (std::size_t k = 0; k < s.length(); ++k) {
    if (split[s.first_interaction + k] != Split::kTest) ++n;
  }
  return n;
}

namespace {

void index_corpus(SplitCorpus& c) {
  const std::size_t n = c.interactions.size();
  c.session_of.assign(n, 0);
  c.position_of.assign(n, 0);
  for (const Session& s : c.sessions) {
    for (std::size_t k = 0; k < s.length(); ++k) {
      c.session_of[s.first_interaction + k] = s.id;
      c.position_of[s.first_interaction + k] = static_cast<std::uint32_t>(k);
    }
  }
  c.user_offsets.assign(c.num_users() + 1, 0);
  for (const auto& x : c.interactions) ++c.user_offsets[x.user + 1];
  std::partial_sum(c.user_offsets.begin(), c.user_offsets.end(), c.user_offsets.begin());
  c.user_session_offsets.assign(c.num_users() + 1, 0);
  for (const auto& s : c.sessions) ++c.user_session_offsets[s.user + 1];
  std::partial_sum(c.user_session_offsets.begin(), c.user_session_offsets.end(),
                   c.user_session_offsets.begin());
}

}  // namespace

SplitCorpus split(const InteractionLog& log, Timestamp idle_threshold, const SplitOptions& options) {
  SplitCorpus c;
  c.users = log.users;
  c.items = log.items;
  c.interactions = log.interactions;
  c.idle_threshold = idle_threshold;
  c.sessions = sessionize(c.interactions, idle_threshold);
  index_corpus(c);

  c.split.assign(c.interactions.size(), Split::kTrain);
  for (std::size_t u = 0; u < c.num_users(); ++u) {
    const std::size_t begin = c.user_offsets[u];
    const std::size_t n = c.user_offsets[u + 1] - begin;
    if (n == 0) continue;
    const SplitCounts counts = split_counts(n, options);
    for (std::size_t k = 0; k < n; ++k) {
      Split tag = Split::kTrain;
      if (k >= counts.train + counts.validation) {
        tag = Split::kTest;
      } else if (k >= counts.train) {
        tag = Split::kValidation;
      }
      c.split[begin + k] = tag;
    }
    if (counts.test == 0) {
      c.warnings.push_back("user " + c.users.raw[u] + " has " + std::to_string(n) +
                           " interactions and contributes no test interactions");
    }
  }
  return c;
}

void write_corpus(std::ostream& out, const SplitCorpus& c, const std::string& config_hash) {
  using nlohmann::json;
  out << json{{"format", "iscon-corpus"},
              {"version", 1},
              {"config_hash", config_hash},
              {"num_users", c.num_users()},
              {"num_items", c.num_items()},
              {"num_interactions", c.interactions.size()},
              {"num_sessions", c.sessions.size()},
              {"idle_threshold", c.idle_threshold}}
             .dump()
      << '\n';
  out << json{{"users", c.users.raw}}.dump() << '\n';
  out << json{{"items", c.items.raw}}.dump() << '\n';
  for (const auto& w : c.warnings) out << json{{"warning", w}}.dump() << '\n';
  for (const Session& s : c.sessions) {
    json j{{"session", s.id}, {"user", s.user},   {"start", s.start},
           {"end", s.end},    {"first", s.first_interaction}, {"items", s.items}};
    j["gap"] = s.gap ? json(*s.gap) : json(nullptr);
    out << j.dump() << '\n';
  }
  for (std::size_t k = 0; k < c.interactions.size(); ++k) {
    const Interaction& x = c.interactions[k];
    out << json{{"u", x.user}, {"i", x.item}, {"t", x.timestamp}, {"split", split_name(c.split[k])}}
               .dump()
        << '\n';
  }
}

SplitCorpus read_corpus(std::istream& in, std::string* config_hash) {
  using nlohmann::json;
  SplitCorpus c;
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected_interactions = 0;
  std::size_t expected_sessions = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(line_no, std::string("invalid corpus JSON: ") + e.what());
    }
    if (line_no == 1) {
      if (j.value("format", "") != "iscon-corpus") throw ParseError(1, "not a corpus file");
      if (j.at("version").get<int>() != 1) throw ParseError(1, "unsupported corpus version");
      if (config_hash) *config_hash = j.at("config_hash").get<std::string>();
      c.idle_threshold = j.at("idle_threshold").get<Timestamp>();
      expected_interactions = j.at("num_interactions").get<std::size_t>();
      expected_sessions = j.at("num_sessions").get<std::size_t>();
    } else if (j.contains("u")) {
      c.interactions.push_back({j["u"].get<UserId>(), j["i"].get<ItemId>(), j["t"].get<Timestamp>()});
      c.split.push_back(parse_split(j["split"].get<std::string>()));
    } else if (j.contains("session")) {
      Session s;
      s.id = j["session"].get<SessionId>();
      s.user = j["user"].get<UserId>();
      s.start = j["start"].get<Timestamp>();
      s.end = j["end"].get<Timestamp>();
      s.first_interaction = j["first"].get<std::size_t>();
      s.items = j["items"].get<std::vector<ItemId>>();
      if (!j["gap"].is_null()) s.gap = j["gap"].get<Timestamp>();
      if (s.id != c.sessions.size()) throw ParseError(line_no, "sessions out of order");
      c.sessions.push_back(std::move(s));
    } else if (j.contains("users")) {
      c.users.raw = j["users"].get<std::vector<std::string>>();
    } else if (j.contains("items")) {
      c.items.raw = j["items"].get<std::vector<std::string>>();
    } else if (j.contains("warning")) {
      c.warnings.push_back(j["warning"].get<std::string>());
    } else {
      throw ParseError(line_no, "unrecognized corpus record");
    }
  }
  if (line_no == 0) throw ParseError(0, "empty corpus file");
  if (c.interactions.size() != expected_interactions || c.sessions.size() != expected_sessions) {
    throw ParseError(line_no, "corpus file is truncated");
  }
  index_corpus(c);
  return c;
}

void write_corpus_file(const std::filesystem::path& path, const SplitCorpus& corpus,
                       const std::string& config_hash) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_corpus(out, corpus, config_hash);
}

SplitCorpus read_corpus_file(const std::filesystem::path& path, std::string* config_hash) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_corpus(in, config_hash);
}

}  // namespace iscon
