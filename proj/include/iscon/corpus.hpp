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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace iscon {

using UserId = std::uint32_t;
using ItemId = std::uint32_t;
using SessionId = std::uint32_t;
using Timestamp = std::int64_t;

struct Interaction {
  UserId user = 0;
  ItemId item = 0;
  Timestamp timestamp = 0;

  bool operator==(const Interaction&) const = default;
};

// Compact id -> original identifier, in order of first appearance.
struct IdMap {
  std::vector<std::string> raw;

  std::size_t size() const { return raw.size(); }
};

struct LogSchema {
  char delimiter = ',';
  std::size_t user_column = 0;
  std::size_t item_column = 1;
  std::size_t timestamp_column = 2;
  // Minimum number of columns a row must have.
  std::size_t columns = 3;
  bool has_header = false;
  bool skip_malformed = false;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct RowError {
  std::size_t line = 0;
  std::string message;
};

// Interactions grouped by user (ascending compact id), sorted by timestamp
// within a user with ties kept in input order.
struct InteractionLog {
  std::vector<Interaction> interactions;
  IdMap users;
  IdMap items;
  std::vector<RowError> skipped;
};

// Parses delimiter-separated text. Malformed rows throw ParseError unless
// schema.skip_malformed is set, in which case they are recorded in
// `skipped`. Fractional timestamps are floored to whole seconds.
InteractionLog parse_log(std::istream& source, const LogSchema& schema);

// Drops users with fewer than min_count interactions (one pass, items are
// never filtered) and re-compacts user and item ids.
InteractionLog filter_users(const InteractionLog& log, std::size_t min_count = 10);

struct Session {
  SessionId id = 0;
  UserId user = 0;
  std::vector<ItemId> items;
  Timestamp start = 0;
  Timestamp end = 0;
  // Index of the session's first interaction in the corpus interaction array.
  std::size_t first_interaction = 0;

  Timestamp duration() const { return end - start; }
  std::size_t length() const { return items.size(); }
  // Idle time until the user's next session starts (next.start - end);
  // empty for the user's last session.
  std::optional<Timestamp> gap;

  bool operator==(const Session&) const = default;
};

// Sessions for interactions grouped by user and sorted by time. A new
// session starts at a user's first interaction and whenever the gap to the
// previous interaction is strictly greater than idle_threshold. Ids are
// assigned by user, then time.
std::vector<Session> sessionize(const std::vector<Interaction>& interactions,
                                Timestamp idle_threshold = 3600);

enum class Split : std::uint8_t { kTrain = 0, kValidation = 1, kTest = 2 };

const char* split_name(Split split);
Split parse_split(const std::string& name);

struct SplitOptions {
  double train_fraction = 0.9;
  double validation_fraction = 0.1;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t validation = 0;
  std::size_t test = 0;
};

// Per-user chronological split arithmetic: train side = floor(train_fraction * n),
// validation = max(1, round(validation_fraction * train side)) carved from the
// end of the train side, test = the remainder.
SplitCounts split_counts(std::size_t n, const SplitOptions& options = {});

struct SplitCorpus {
  IdMap users;
  IdMap items;
  std::vector<Interaction> interactions;
  std::vector<Split> split;
  // Per interaction: owning session and position inside it.
  std::vector<SessionId> session_of;
  std::vector<std::uint32_t> position_of;
  std::vector<Session> sessions;
  // user u owns interactions [user_offsets[u], user_offsets[u + 1]).
  std::vector<std::size_t> user_offsets;
  // user u owns sessions [user_session_offsets[u], user_session_offsets[u + 1]).
  std::vector<std::size_t> user_session_offsets;
  Timestamp idle_threshold = 3600;
  std::vector<std::string> warnings;

  std::size_t num_users() const { return users.size(); }
  std::size_t num_items() const { return items.size(); }
  std::size_t count(Split s) const;
  // Split tag of the session's first interaction.
  Split session_split(SessionId id) const;
  // Number of the session's interactions visible on the train/validation side.
  std::size_t observed_length(SessionId id) const;
};

// Sessionizes and splits an id-compacted, user-grouped interaction log.
// Sessions straddling a split cut keep one id; each interaction carries
// its own split tag. Users left without test interactions get a warning.
SplitCorpus split(const InteractionLog& log, Timestamp idle_threshold = 3600,
                  const SplitOptions& options = {});

// Line-JSON corpus file: a header line, user and item maps, one line per
// session and one per interaction.
void write_corpus(std::ostream& out, const SplitCorpus& corpus, const std::string& config_hash);
SplitCorpus read_corpus(std::istream& in, std::string* config_hash = nullptr);
void write_corpus_file(const std::filesystem::path& path, const SplitCorpus& corpus,
                       const std::string& config_hash);
SplitCorpus read_corpus_file(const std::filesystem::path& path, std::string* config_hash = nullptr);

}  // namespace iscon
