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
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "iscon/corpus.hpp"
#include "iscon/eval.hpp"
#include "iscon/next_item.hpp"

namespace iscon {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a stage is run before the stage that produces its inputs.
class MissingArtifact : public std::runtime_error {
 public:
  MissingArtifact(const std::string& required_stage, const std::filesystem::path& path);
  const std::string& required_stage() const { return stage_; }

 private:
  std::string stage_;
};

enum class Stage { kIngest, kEmbed, kContextualize, kTrainContext, kTrainNext, kEvaluate };

const char* stage_name(Stage stage);

struct PipelineConfig {
  // corpus
  std::int64_t idle_threshold_s = 3600;
  std::size_t min_user_interactions = 10;
  double train_frac = 0.9;
  double val_frac = 0.1;
  std::string delimiter = ",";
  std::size_t user_column = 0;
  std::size_t item_column = 1;
  std::size_t timestamp_column = 2;
  bool has_header = false;
  bool skip_malformed = false;
  // session graph encoder
  std::size_t session_emb_dim = 64;
  std::size_t sage_base_dim = 64;
  std::size_t sage_fanout1 = 10;
  std::size_t sage_fanout2 = 10;
  std::size_t sage_negatives = 5;
  std::size_t sage_epochs = 10;
  std::size_t sage_batch = 256;
  double sage_lr = 0.01;
  double sage_temperature = 0.1;
  // clustering
  std::size_t num_contexts = 40;
  std::size_t kmeans_max_iters = 100;
  std::size_t kmeans_restarts = 10;
  // predictors
  std::size_t top_k_contexts = 3;
  std::size_t user_dim = 256;
  std::size_t item_dim = 256;
  std::size_t context_dim = 32;
  std::size_t lstm_hidden = 128;
  std::size_t max_seq_len = 50;
  double lr = 0.001;
  std::size_t batch = 1024;
  std::size_t max_epochs = 200;
  std::size_t patience = 10;
  double clip_norm = 5.0;
  std::string next_mode = "context";
  // protocol
  std::size_t repetitions = 5;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  // Throws ConfigError describing the first violated constraint.
  void validate() const;

  // Assigns one key from its text form; throws ConfigError on an unknown
  // key or an unparsable value.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  static const std::vector<std::string>& keys();

  // Flat "key=value" lines in key order.
  std::string to_text() const;
  // Applies a key=value file ('#' starts a comment).
  void load_text(std::istream& in);
  void load_file(const std::filesystem::path& path);
  // Applies ISCON_SEED if set.
  void apply_environment();
};

// Keys whose values determine the artifact of `stage` (its own, not upstream).
std::vector<std::string> stage_keys(Stage stage);

// FNV-1a 64 as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

struct SynthOptions {
  std::size_t num_users = 50;
  std::size_t num_contexts = 8;
  std::size_t items_per_context = 30;
  std::size_t sessions_per_user = 40;
  std::size_t min_session_length = 2;
  std::size_t max_session_length = 5;
  double stickiness = 0.7;
  double zipf_exponent = 1.1;
  std::uint64_t seed = 7;
};

struct PlantedSession {
  std::string user;
  std::size_t index = 0;
  Timestamp start = 0;
  std::uint32_t context = 0;
};

// Planted-context corpus. Context c owns raw item ids
// [c * items_per_context, (c + 1) * items_per_context); each session keeps
// the previous session's context with probability `stickiness` and
// otherwise draws one uniformly, then draws its items from the context's
// Zipf popularity. In-session gaps stay under 30 minutes and sessions are
// at least 2 hours apart. Writes "user,item,timestamp" rows to `log` and
// the planted labels (with a '#' parameter preamble) to `sidecar`.
void synthesize(const SynthOptions& options, std::ostream& log, std::ostream& sidecar);
std::vector<PlantedSession> read_planted_labels(std::istream& sidecar);

// Planted context per corpus session, matched on (raw user id, start).
std::vector<std::int32_t> planted_labels_for(const SplitCorpus& corpus,
                                             const std::vector<PlantedSession>& planted);

struct AblationReport {
  EvalReport with_context;
  EvalReport ablation;
  TTestResult mrr_test;
  TTestResult recall_test;
};

struct SweepRow {
  std::string value;
  EvalReport report;
};

// Stage driver over a working directory. Artifacts are named
// "<stage>-<hash>.<ext>" where the hash chains the stage's config keys onto
// its parent's hash; an existing artifact is reused rather than rewritten
// unless `force` is set.
class Pipeline {
 public:
  Pipeline(PipelineConfig config, std::filesystem::path workdir, std::ostream& log);

  const PipelineConfig& config() const { return config_; }
  std::string stage_hash(Stage stage) const;
  std::filesystem::path artifact_path(Stage stage, std::size_t repetition = 0) const;

  // Ingests a raw log. The workdir remembers the log's content hash; a
  // different log is refused unless force is set.
  void ingest(const std::filesystem::path& raw_log, bool force = false);
  void embed(bool force = false);
  void contextualize(bool force = false);
  void train_context(bool force = false);
  void train_next(bool force = false);
  EvalReport evaluate(bool force = false);

  // Runs whatever stages up to `stage` are missing. Ingest needs raw_log.
  void ensure(Stage stage, const std::optional<std::filesystem::path>& raw_log = std::nullopt);

  AblationReport ablate(const std::optional<std::filesystem::path>& raw_log = std::nullopt);
  std::vector<SweepRow> sweep(const std::string& key, const std::vector<std::string>& values,
                              const std::optional<std::filesystem::path>& raw_log = std::nullopt);

  // CSV / line-JSON exports: "embeddings", "clusters", "context-predictions".
  void export_artifact(const std::string& what, const std::filesystem::path& out) const;

  // Throws MissingArtifact / FormatError if any artifact in the chain up to
  // `stage` is absent or was produced under a different hash.
  void verify_chain(Stage stage) const;

 private:
  PipelineConfig config_;
  std::filesystem::path workdir_;
  std::ostream* log_;

  std::string source_hash() const;
  void require(Stage producer, const std::filesystem::path& path) const;
};

std::string report_to_json(const EvalReport& report, const PipelineConfig& config, int indent = 2);
std::string ablation_to_json(const AblationReport& report, const PipelineConfig& config);
std::string sweep_to_json(const std::string& key, const std::vector<SweepRow>& rows,
                          const PipelineConfig& config);

// Default grid for a sweepable key ("embedding_dim" sets user_dim and item_dim).
std::vector<std::string> default_sweep_values(const std::string& key);

}  // namespace iscon
