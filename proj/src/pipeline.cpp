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

#include "iscon/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <sstream>
#include <type_traits>
#include <variant>

#include "iscon/checkpoint.hpp"
#include "iscon/context_predictor.hpp"
#include "iscon/contextualizer.hpp"
#include "iscon/session_graph.hpp"
#include "iscon/training.hpp"
#include "json.hpp"

namespace iscon {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed shares the size_t field kind");

MissingArtifact::MissingArtifact(const std::string& required_stage, const fs::path& path)
    : std::runtime_error("missing artifact " + path.string() + ": run stage '" + required_stage +
                         "' first"),
      stage_(required_stage) {}

const char* stage_name(Stage stage) {
  switch (stage) {
    case Stage::kIngest: return "ingest";
    case Stage::kEmbed: return "embed";
    case Stage::kContextualize: return "contextualize";
    case Stage::kTrainContext: return "train-context";
    case Stage::kTrainNext: return "train-next";
    case Stage::kEvaluate: return "evaluate";
  }
  return "?";
}

namespace {

using Member = std::variant<std::int64_t PipelineConfig::*, std::size_t PipelineConfig::*,
                            double PipelineConfig::*, std::string PipelineConfig::*,
                            bool PipelineConfig::*>;

struct Field {
  std::string name;
  Member member;
};

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> table = {
      {"idle_threshold_s", &C::idle_threshold_s},
      {"min_user_interactions", &C::min_user_interactions},
      {"train_frac", &C::train_frac},
      {"val_frac", &C::val_frac},
      {"delimiter", &C::delimiter},
      {"user_column", &C::user_column},
      {"item_column", &C::item_column},
      {"timestamp_column", &C::timestamp_column},
      {"has_header", &C::has_header},
      {"skip_malformed", &C::skip_malformed},
      {"session_emb_dim", &C::session_emb_dim},
      {"sage_base_dim", &C::sage_base_dim},
      {"sage_fanout1", &C::sage_fanout1},
      {"sage_fanout2", &C::sage_fanout2},
      {"sage_negatives", &C::sage_negatives},
      {"sage_epochs", &C::sage_epochs},
      {"sage_batch", &C::sage_batch},
      {"sage_lr", &C::sage_lr},
      {"sage_temperature", &C::sage_temperature},
      {"num_contexts", &C::num_contexts},
      {"kmeans_max_iters", &C::kmeans_max_iters},
      {"kmeans_restarts", &C::kmeans_restarts},
      {"top_k_contexts", &C::top_k_contexts},
      {"user_dim", &C::user_dim},
      {"item_dim", &C::item_dim},
      {"context_dim", &C::context_dim},
      {"lstm_hidden", &C::lstm_hidden},
      {"max_seq_len", &C::max_seq_len},
      {"lr", &C::lr},
      {"batch", &C::batch},
      {"max_epochs", &C::max_epochs},
      {"patience", &C::patience},
      {"clip_norm", &C::clip_norm},
      {"next_mode", &C::next_mode},
      {"repetitions", &C::repetitions},
      {"seed", &C::seed},
      {"threads", &C::threads},
  };
  return table;
}

const Field& field(const std::string& key) {
  for (const Field& f : fields()) {
    if (f.name == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if constexpr (std::is_unsigned_v<T>) {
    if (!text.empty() && text[0] == '-') throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) {
    throw ConfigError(key + ": cannot parse '" + text + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) throw ConfigError(key + ": value must be finite");
  }
  return value;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

char delimiter_char(const std::string& d) {
  if (d == "\\t" || d == "tab") return '\t';
  return d.empty() ? ',' : d[0];
}

std::string content_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a_hex(bytes);
}

Stage previous(Stage s) { return static_cast<Stage>(static_cast<int>(s) - 1); }

void require_artifact(Stage producer, const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifact(stage_name(producer), path);
}

std::string stage_config_text(const PipelineConfig& config, Stage stage) {
  std::string out;
  for (const std::string& key : stage_keys(stage)) out += key + "=" + config.get(key) + "\n";
  return out;
}

Tensor vector_tensor(const std::vector<double>& values) {
  Tensor t = Tensor::vector(values.size());
  t.data = values;
  return t;
}

const Tensor& extra(const Checkpoint& c, const std::string& name) {
  if (!c.extras.contains(name)) throw FormatError(c.kind + " checkpoint lacks '" + name + "'");
  return c.extras.value(c.extras.find(name));
}

CorpusEmbeddings stored_embeddings(const Checkpoint& encoder) {
  CorpusEmbeddings ce;
  ce.embeddings = extra(encoder, "session_embeddings");
  for (double v : extra(encoder, "embedding_source").data) {
    ce.source.push_back(static_cast<EmbeddingSource>(static_cast<int>(v)));
  }
  return ce;
}

std::vector<std::int32_t> stored_labels(const Checkpoint& contexts) {
  std::vector<std::int32_t> labels;
  for (double v : extra(contexts, "labels").data) labels.push_back(static_cast<std::int32_t>(v));
  return labels;
}

ContextLists contexts_for(const Tensor& predictions, const std::vector<PrefixExample>& examples,
                          std::size_t k) {
  ContextLists out;
  out.reserve(examples.size());
  for (const PrefixExample& e : examples) out.push_back(top_k_contexts(predictions.row(e.interaction), k));
  return out;
}

TrainOptions train_options(const PipelineConfig& c, std::uint64_t seed) {
  TrainOptions o;
  o.lr = c.lr;
  o.batch_size = c.batch;
  o.max_epochs = c.max_epochs;
  o.patience = c.patience;
  o.clip_norm = c.clip_norm;
  o.seed = seed;
  o.threads = c.threads;
  return o;
}

void write_text(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

ordered_json config_json(const PipelineConfig& config) {
  ordered_json j = ordered_json::object();
  for (const std::string& key : PipelineConfig::keys()) j[key] = config.get(key);
  return j;
}

ordered_json report_json(const EvalReport& r) {
  ordered_json reps = ordered_json::array();
  ordered_json seeds = ordered_json::array();
  for (const RepetitionMetrics& m : r.repetitions) {
    reps.push_back({{"seed", m.seed}, {"mrr", m.mrr}, {"recall", m.recall}, {"examples", m.examples}});
    seeds.push_back(m.seed);
  }
  ordered_json j;
  j["config_hash"] = r.config_hash;
  j["recall_k"] = r.recall_k;
  j["seeds"] = seeds;
  j["repetitions"] = reps;
  j["mean_mrr"] = r.mean_mrr();
  j["mean_recall"] = r.mean_recall();
  return j;
}

ordered_json ttest_json(const TTestResult& t) {
  // JSON has no infinity; the sign survives as a string.
  ordered_json j;
  if (std::isfinite(t.t)) {
    j["t"] = t.t;
  } else {
    j["t"] = t.t > 0 ? "inf" : "-inf";
  }
  j["p"] = t.p;
  j["df"] = t.degrees_of_freedom;
  return j;
}

EvalReport parse_report(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  EvalReport r;
  r.config_hash = j.at("config_hash").get<std::string>();
  r.recall_k = j.at("recall_k").get<std::size_t>();
  for (const auto& m : j.at("repetitions")) {
    r.repetitions.push_back({m.at("seed").get<std::uint64_t>(), m.at("mrr").get<double>(),
                             m.at("recall").get<double>(), m.at("examples").get<std::size_t>()});
  }
  return r;
}

}  // namespace

// ---- configuration

void PipelineConfig::set(const std::string& key, const std::string& raw) {
  const Field& f = field(key);
  const std::string value = trim(raw);
  std::visit(
      [&](auto member) {
        using T = std::remove_reference_t<decltype(this->*member)>;
        if constexpr (std::is_same_v<T, std::string>) {
          this->*member = value;
        } else if constexpr (std::is_same_v<T, bool>) {
          if (value == "true" || value == "1" || value == "yes") {
            this->*member = true;
          } else if (value == "false" || value == "0" || value == "no") {
            this->*member = false;
          } else {
            throw ConfigError(key + ": expected true or false, got '" + value + "'");
          }
        } else {
          this->*member = parse_number<T>(key, value);
        }
      },
      f.member);
}

std::string PipelineConfig::get(const std::string& key) const {
  const Field& f = field(key);
  return std::visit(
      [&](auto member) -> std::string {
        const auto& v = this->*member;
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return v;
        } else if constexpr (std::is_same_v<T, bool>) {
          return v ? "true" : "false";
        } else if constexpr (std::is_same_v<T, double>) {
          return format_double(v);
        } else {
          return std::to_string(v);
        }
      },
      f.member);
}

const std::vector<std::string>& PipelineConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const Field& f : fields()) out.push_back(f.name);
    return out;
  }();
  return names;
}

std::string PipelineConfig::to_text() const {
  std::string out;
  for (const std::string& key : keys()) out += key + "=" + get(key) + "\n";
  return out;
}

void PipelineConfig::load_text(std::istream& in) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    // A '#' right after '=' is a delimiter value, not a comment.
    if (hash != std::string::npos && !(hash > 0 && trim(line.substr(0, hash)).back() == '=')) {
      line.erase(hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key=value");
    }
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

void PipelineConfig::load_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  load_text(in);
}

void PipelineConfig::apply_environment() {
  if (const char* seed_env = std::getenv("ISCON_SEED"); seed_env != nullptr && *seed_env != '\0') {
    set("seed", seed_env);
  }
}

void PipelineConfig::validate() const {
  auto positive = [](const char* key, auto v) {
    if (!(v > 0)) throw ConfigError(std::string(key) + " must be positive");
  };
  positive("idle_threshold_s", idle_threshold_s);
  positive("min_user_interactions", min_user_interactions);
  positive("train_frac", train_frac);
  positive("val_frac", val_frac);
  if (train_frac >= 1.0) throw ConfigError("train_frac must be below 1");
  if (val_frac >= 1.0) throw ConfigError("val_frac must be below 1");
  if (delimiter.empty() || (delimiter.size() > 1 && delimiter != "\\t" && delimiter != "tab")) {
    throw ConfigError("delimiter must be a single character");
  }
  if (user_column == item_column || user_column == timestamp_column || item_column == timestamp_column) {
    throw ConfigError("user, item and timestamp columns must differ");
  }
  positive("session_emb_dim", session_emb_dim);
  positive("sage_base_dim", sage_base_dim);
  positive("sage_fanout1", sage_fanout1);
  positive("sage_fanout2", sage_fanout2);
  positive("sage_negatives", sage_negatives);
  positive("sage_epochs", sage_epochs);
  positive("sage_batch", sage_batch);
  positive("sage_lr", sage_lr);
  positive("sage_temperature", sage_temperature);
  positive("num_contexts", num_contexts);
  positive("kmeans_max_iters", kmeans_max_iters);
  positive("kmeans_restarts", kmeans_restarts);
  positive("top_k_contexts", top_k_contexts);
  if (top_k_contexts > num_contexts) throw ConfigError("top_k_contexts must not exceed num_contexts");
  positive("user_dim", user_dim);
  positive("item_dim", item_dim);
  positive("context_dim", context_dim);
  positive("lstm_hidden", lstm_hidden);
  positive("max_seq_len", max_seq_len);
  positive("lr", lr);
  positive("batch", batch);
  positive("max_epochs", max_epochs);
  positive("patience", patience);
  positive("clip_norm", clip_norm);
  positive("repetitions", repetitions);
  positive("threads", threads);
  try {
    parse_mode(next_mode);
  } catch (const std::exception&) {
    throw ConfigError("next_mode must be 'context' or 'ablation', got '" + next_mode + "'");
  }
}

std::vector<std::string> stage_keys(Stage stage) {
  switch (stage) {
    case Stage::kIngest:
      return {"idle_threshold_s", "min_user_interactions", "train_frac", "val_frac", "delimiter",
              "user_column", "item_column", "timestamp_column", "has_header", "skip_malformed"};
    case Stage::kEmbed:
      return {"session_emb_dim", "sage_base_dim", "sage_fanout1", "sage_fanout2", "sage_negatives",
              "sage_epochs", "sage_batch", "sage_lr", "sage_temperature", "seed"};
    case Stage::kContextualize:
      return {"num_contexts", "kmeans_max_iters", "kmeans_restarts", "seed"};
    case Stage::kTrainContext:
      return {"user_dim", "item_dim", "lstm_hidden", "max_seq_len", "lr", "batch",
              "max_epochs", "patience", "clip_norm", "seed", "threads"};
    case Stage::kTrainNext:
      return {"top_k_contexts", "user_dim", "item_dim", "context_dim", "lstm_hidden", "max_seq_len",
              "lr", "batch", "max_epochs", "patience", "clip_norm", "next_mode", "repetitions",
              "seed", "threads"};
    case Stage::kEvaluate:
      return {};
  }
  return {};
}

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int k = 15; k >= 0; --k) {
    out[static_cast<std::size_t>(k)] = digits[h & 0xF];
    h >>= 4;
  }
  return out;
}

std::vector<std::string> default_sweep_values(const std::string& key) {
  if (key == "num_contexts") return {"10", "20", "40", "60", "80"};
  if (key == "top_k_contexts") return {"1", "2", "3", "4", "5"};
  if (key == "embedding_dim" || key == "user_dim" || key == "item_dim") {
    return {"32", "64", "128", "256", "512"};
  }
  if (key == "context_dim") return {"8", "16", "32", "64", "128"};
  throw ConfigError("no default sweep grid for '" + key + "'; pass explicit values");
}

// ---- pipeline

Pipeline::Pipeline(PipelineConfig config, fs::path workdir, std::ostream& log)
    : config_(std::move(config)), workdir_(std::move(workdir)), log_(&log) {
  config_.validate();
  fs::create_directories(workdir_);
}

std::string Pipeline::source_hash() const {
  const fs::path path = workdir_ / "source.txt";
  std::ifstream in(path);
  std::string hash;
  if (!in || !(in >> hash)) throw MissingArtifact(stage_name(Stage::kIngest), path);
  return hash;
}

std::string Pipeline::stage_hash(Stage stage) const {
  const std::string parent = stage == Stage::kIngest ? source_hash() : stage_hash(previous(stage));
  return fnv1a_hex(parent + "|" + stage_name(stage) + "\n" + stage_config_text(config_, stage));
}

fs::path Pipeline::artifact_path(Stage stage, std::size_t repetition) const {
  const std::string h = stage_hash(stage);
  switch (stage) {
    case Stage::kIngest: return workdir_ / ("corpus-" + h + ".jsonl");
    case Stage::kEmbed: return workdir_ / ("encoder-" + h + ".ckpt");
    case Stage::kContextualize: return workdir_ / ("contexts-" + h + ".ckpt");
    case Stage::kTrainContext: return workdir_ / ("context_predictor-" + h + ".ckpt");
    case Stage::kTrainNext:
      return workdir_ / ("next_item-" + h + "-r" + std::to_string(repetition) + ".ckpt");
    case Stage::kEvaluate: return workdir_ / ("metrics-" + h + ".json");
  }
  return {};
}

void Pipeline::require(Stage producer, const fs::path& path) const { require_artifact(producer, path); }

namespace {

// Reads a checkpoint and refuses it unless it was produced under `hash`.
Checkpoint load_checked(const fs::path& path, Stage producer, const std::string& hash) {
  require_artifact(producer, path);
  Checkpoint c = read_checkpoint(path);
  if (c.meta("hash") != hash) {
    throw FormatError(path.string() + " was produced under hash " + c.meta("hash") + ", expected " + hash);
  }
  return c;
}

SplitCorpus load_corpus(const fs::path& path, const std::string& hash) {
  require_artifact(Stage::kIngest, path);
  std::string recorded;
  SplitCorpus corpus = read_corpus_file(path, &recorded);
  if (recorded != hash) {
    throw FormatError(path.string() + " was produced under hash " + recorded + ", expected " + hash);
  }
  return corpus;
}

void stamp(Checkpoint& c, const Pipeline& p, Stage stage) {
  c.metadata["stage"] = stage_name(stage);
  c.metadata["hash"] = p.stage_hash(stage);
  c.metadata["parent_hash"] = stage == Stage::kIngest ? "" : p.stage_hash(previous(stage));
  c.metadata["config"] = stage_config_text(p.config(), stage);
}

}  // namespace

void Pipeline::ingest(const fs::path& raw_log, bool force) {
  const std::string hash = content_hash(raw_log);
  const fs::path source = workdir_ / "source.txt";
  if (fs::exists(source)) {
    const std::string previous_hash = source_hash();
    if (previous_hash != hash && !force) {
      throw ConfigError("workdir " + workdir_.string() + " holds artifacts of a different log (" +
                        previous_hash + "); use another workdir or --force");
    }
  }
  write_text(source, hash + "\n");
  const fs::path out = artifact_path(Stage::kIngest);
  if (fs::exists(out) && !force) {
    *log_ << "[ingest] reusing " << out.filename().string() << "\n";
    return;
  }
  LogSchema schema;
  schema.delimiter = delimiter_char(config_.delimiter);
  schema.user_column = config_.user_column;
  schema.item_column = config_.item_column;
  schema.timestamp_column = config_.timestamp_column;
  schema.columns = std::max({config_.user_column, config_.item_column, config_.timestamp_column}) + 1;
  schema.has_header = config_.has_header;
  schema.skip_malformed = config_.skip_malformed;
  std::ifstream in(raw_log);
  if (!in) throw std::runtime_error("cannot open " + raw_log.string());
  const InteractionLog log = filter_users(parse_log(in, schema), config_.min_user_interactions);
  SplitOptions so;
  so.train_fraction = config_.train_frac;
  so.validation_fraction = config_.val_frac;
  const SplitCorpus corpus = split(log, config_.idle_threshold_s, so);
  for (const std::string& w : corpus.warnings) *log_ << "[ingest] warning: " << w << "\n";
  write_corpus_file(out, corpus, stage_hash(Stage::kIngest));
  double mean_length = 0.0;
  for (const Session& s : corpus.sessions) mean_length += static_cast<double>(s.length());
  if (!corpus.sessions.empty()) mean_length /= static_cast<double>(corpus.sessions.size());
  *log_ << "[ingest] " << corpus.num_users() << " users, " << corpus.num_items() << " items, "
        << corpus.interactions.size() << " interactions, " << corpus.sessions.size()
        << " sessions (mean length " << mean_length << "), " << log.skipped.size()
        << " rows skipped -> " << out.filename().string() << "\n";
}

void Pipeline::embed(bool force) {
  const fs::path out = artifact_path(Stage::kEmbed);
  if (fs::exists(out) && !force) {
    *log_ << "[embed] reusing " << out.filename().string() << "\n";
    return;
  }
  const SplitCorpus corpus = load_corpus(artifact_path(Stage::kIngest), stage_hash(Stage::kIngest));
  const BipartiteMultigraph graph = build_graph(corpus);
  SageOptions so;
  so.base_dim = config_.sage_base_dim;
  so.output_dim = config_.session_emb_dim;
  so.fanout = {config_.sage_fanout1, config_.sage_fanout2};
  so.negatives = config_.sage_negatives;
  so.epochs = config_.sage_epochs;
  so.batch_size = config_.sage_batch;
  so.lr = config_.sage_lr;
  so.temperature = config_.sage_temperature;
  so.seed = config_.seed;
  const SageTrainResult trained = train_encoder(graph, so);
  const CorpusEmbeddings ce = embed_corpus_sessions(trained.encoder, graph, corpus);
  for (const std::string& w : ce.warnings) *log_ << "[embed] warning: " << w << "\n";

  Checkpoint c;
  c.kind = "encoder";
  c.params = trained.encoder.params;
  c.extras.add("session_embeddings", ce.embeddings);
  std::vector<double> source;
  for (EmbeddingSource s : ce.source) source.push_back(static_cast<double>(s));
  c.extras.add("embedding_source", vector_tensor(source));
  c.extras.add("heldout_loss", vector_tensor(trained.heldout_loss));
  c.extras.add("train_loss", vector_tensor(trained.train_loss));
  stamp(c, *this, Stage::kEmbed);
  write_checkpoint(out, c);
  *log_ << "[embed] " << graph.num_sessions() << " session nodes, " << graph.num_edges()
        << " edges; held-out loss " << trained.heldout_loss.front() << " -> "
        << trained.heldout_loss.back() << " -> " << out.filename().string() << "\n";
}

void Pipeline::contextualize(bool force) {
  const fs::path out = artifact_path(Stage::kContextualize);
  if (fs::exists(out) && !force) {
    *log_ << "[contextualize] reusing " << out.filename().string() << "\n";
    return;
  }
  const SplitCorpus corpus = load_corpus(artifact_path(Stage::kIngest), stage_hash(Stage::kIngest));
  const Checkpoint encoder = load_checked(artifact_path(Stage::kEmbed), Stage::kEmbed, stage_hash(Stage::kEmbed));
  const BipartiteMultigraph graph = build_graph(corpus);
  const CorpusEmbeddings ce = stored_embeddings(encoder);
  if (graph.num_sessions() < config_.num_contexts) {
    throw ConfigError("num_contexts " + std::to_string(config_.num_contexts) + " exceeds the " +
                      std::to_string(graph.num_sessions()) + " training sessions");
  }
  Tensor points = Tensor::matrix(graph.num_sessions(), ce.embeddings.cols());
  for (std::size_t g = 0; g < graph.num_sessions(); ++g) {
    const auto row = ce.embeddings.row(graph.corpus_session(g));
    std::copy(row.begin(), row.end(), points.row(g).begin());
  }
  KMeansOptions ko;
  ko.num_contexts = config_.num_contexts;
  ko.max_iters = config_.kmeans_max_iters;
  ko.restarts = config_.kmeans_restarts;
  ko.seed = config_.seed;
  const ContextModel model = kmeans_fit(points, ko);
  const std::vector<std::int32_t> labels = label_all(model, graph, ce);
  std::size_t unlabeled = 0;
  for (std::int32_t l : labels) unlabeled += l == kUnlabeled ? 1 : 0;

  Checkpoint c;
  c.kind = "contexts";
  c.params.add("centers", model.centers);
  c.extras.add("assignments", vector_tensor({model.assignments.begin(), model.assignments.end()}));
  c.extras.add("labels", vector_tensor({labels.begin(), labels.end()}));
  c.extras.add("inertia_history", vector_tensor(model.inertia_history));
  c.metadata["iterations"] = std::to_string(model.iterations);
  stamp(c, *this, Stage::kContextualize);
  write_checkpoint(out, c);
  *log_ << "[contextualize] " << model.num_contexts() << " contexts, inertia " << model.inertia()
        << " after " << model.iterations << " iterations, " << unlabeled << " sessions unlabeled -> "
        << out.filename().string() << "\n";
}

void Pipeline::train_context(bool force) {
  const fs::path out = artifact_path(Stage::kTrainContext);
  if (fs::exists(out) && !force) {
    *log_ << "[train-context] reusing " << out.filename().string() << "\n";
    return;
  }
  const SplitCorpus corpus = load_corpus(artifact_path(Stage::kIngest), stage_hash(Stage::kIngest));
  const Checkpoint encoder = load_checked(artifact_path(Stage::kEmbed), Stage::kEmbed, stage_hash(Stage::kEmbed));
  const Checkpoint contexts = load_checked(artifact_path(Stage::kContextualize), Stage::kContextualize,
                                           stage_hash(Stage::kContextualize));
  const SessionFeatures features = build_session_features(corpus, extra(encoder, "session_embeddings"));
  const std::vector<std::int32_t> labels = stored_labels(contexts);
  const auto train = build_prefix_examples(corpus, Split::kTrain, config_.max_seq_len);
  const auto val = build_prefix_examples(corpus, Split::kValidation, config_.max_seq_len);
  const auto test = build_prefix_examples(corpus, Split::kTest, config_.max_seq_len);

  ContextPredictorConfig cc;
  cc.num_users = corpus.num_users();
  cc.num_items = corpus.num_items();
  cc.num_contexts = config_.num_contexts;
  cc.feature_dim = features.dim();
  cc.user_dim = config_.user_dim;
  cc.item_dim = config_.item_dim;
  cc.hidden_dim = config_.lstm_hidden;
  cc.max_history = config_.max_seq_len;
  Rng rng(config_.seed);
  ContextPredictor model = ContextPredictor::create(cc, rng);
  AdamConfig ac;
  ac.lr = config_.lr;
  AdamState adam(model.params(), ac);
  const TrainHistory history =
      iscon::train_context(model, adam, features, train, val, labels, train_options(config_, config_.seed));

  std::vector<PrefixExample> all = train;
  all.insert(all.end(), val.begin(), val.end());
  all.insert(all.end(), test.begin(), test.end());
  const Tensor per_example = predict_contexts(model, features, all);
  Tensor predictions = Tensor::matrix(corpus.interactions.size(), config_.num_contexts);
  std::size_t hits = 0;
  std::size_t scored = 0;
  for (std::size_t k = 0; k < all.size(); ++k) {
    const auto row = per_example.row(k);
    std::copy(row.begin(), row.end(), predictions.row(all[k].interaction).begin());
    const std::int32_t label = labels[all[k].session];
    if (corpus.split[all[k].interaction] == Split::kValidation && label >= 0) {
      ++scored;
      hits += static_cast<std::int32_t>(std::max_element(row.begin(), row.end()) - row.begin()) == label;
    }
  }

  Checkpoint c;
  model.save_to(c);
  c.adam = adam;
  c.extras.add("predictions", predictions);
  c.extras.add("train_loss", vector_tensor(history.train_loss));
  c.extras.add("validation", vector_tensor(history.validation));
  c.metadata["best_epoch"] = std::to_string(history.best_epoch);
  stamp(c, *this, Stage::kTrainContext);
  write_checkpoint(out, c);
  *log_ << "[train-context] " << history.epochs_run << " epochs (best " << history.best_epoch
        << "), validation top-1 " << (scored ? double(hits) / double(scored) : 0.0) << " -> "
        << out.filename().string() << "\n";
}

void Pipeline::train_next(bool force) {
  bool missing = force;
  for (std::size_t r = 0; r < config_.repetitions && !missing; ++r) {
    missing = !fs::exists(artifact_path(Stage::kTrainNext, r));
  }
  if (!missing) {
    *log_ << "[train-next] reusing " << config_.repetitions << " checkpoints\n";
    return;
  }
  const SplitCorpus corpus = load_corpus(artifact_path(Stage::kIngest), stage_hash(Stage::kIngest));
  const Checkpoint predictor = load_checked(artifact_path(Stage::kTrainContext), Stage::kTrainContext,
                                            stage_hash(Stage::kTrainContext));
  const Tensor& predictions = extra(predictor, "predictions");
  const auto train = build_prefix_examples(corpus, Split::kTrain, config_.max_seq_len);
  const auto val = build_prefix_examples(corpus, Split::kValidation, config_.max_seq_len);
  const ContextLists train_ctx = contexts_for(predictions, train, config_.top_k_contexts);
  const ContextLists val_ctx = contexts_for(predictions, val, config_.top_k_contexts);

  for (std::size_t r = 0; r < config_.repetitions; ++r) {
    const fs::path out = artifact_path(Stage::kTrainNext, r);
    if (fs::exists(out) && !force) continue;
    const std::uint64_t seed = config_.seed + r;
    NextItemConfig nc;
    nc.num_users = corpus.num_users();
    nc.num_items = corpus.num_items();
    nc.num_contexts = config_.num_contexts;
    nc.user_dim = config_.user_dim;
    nc.item_dim = config_.item_dim;
    nc.context_dim = config_.context_dim;
    nc.hidden_dim = config_.lstm_hidden;
    nc.top_k = config_.top_k_contexts;
    nc.mode = parse_mode(config_.next_mode);
    Rng rng(seed);
    NextItemModel model = NextItemModel::create(nc, rng);
    AdamConfig ac;
    ac.lr = config_.lr;
    AdamState adam(model.params(), ac);
    const TrainHistory history =
        iscon::train_next(model, adam, train, train_ctx, val, val_ctx, train_options(config_, seed));
    Checkpoint c;
    model.save_to(c);
    c.adam = adam;
    c.extras.add("train_loss", vector_tensor(history.train_loss));
    c.extras.add("validation", vector_tensor(history.validation));
    c.metadata["repetition"] = std::to_string(r);
    c.metadata["seed"] = std::to_string(seed);
    c.metadata["best_epoch"] = std::to_string(history.best_epoch);
    stamp(c, *this, Stage::kTrainNext);
    write_checkpoint(out, c);
    *log_ << "[train-next] " << config_.next_mode << " r" << r << ": " << history.epochs_run
          << " epochs, best validation MRR "
          << (history.validation.empty() ? 0.0 : history.validation[history.best_epoch]) << " -> "
          << out.filename().string() << "\n";
  }
}

EvalReport Pipeline::evaluate(bool force) {
  verify_chain(Stage::kTrainNext);
  const fs::path out = artifact_path(Stage::kEvaluate);
  if (fs::exists(out) && !force) {
    std::ifstream in(out);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    *log_ << "[evaluate] reusing " << out.filename().string() << "\n";
    return parse_report(text);
  }
  const SplitCorpus corpus = load_corpus(artifact_path(Stage::kIngest), stage_hash(Stage::kIngest));
  const Checkpoint predictor = load_checked(artifact_path(Stage::kTrainContext), Stage::kTrainContext,
                                            stage_hash(Stage::kTrainContext));
  const auto test = build_prefix_examples(corpus, Split::kTest, config_.max_seq_len);
  if (test.empty()) throw std::runtime_error("evaluate: the corpus has no test interactions");
  const ContextLists test_ctx = contexts_for(extra(predictor, "predictions"), test, config_.top_k_contexts);

  EvalReport report;
  report.config_hash = stage_hash(Stage::kEvaluate);
  for (std::size_t r = 0; r < config_.repetitions; ++r) {
    const Checkpoint c = load_checked(artifact_path(Stage::kTrainNext, r), Stage::kTrainNext,
                                      stage_hash(Stage::kTrainNext));
    const NextItemModel model = NextItemModel::from_checkpoint(c);
    const auto ranks = next_item_ranks(model, test, test_ctx, config_.threads);
    report.repetitions.push_back({config_.seed + r, mrr(ranks), recall_at_k(ranks, report.recall_k), ranks.size()});
    *log_ << "[evaluate] r" << r << ": MRR " << report.repetitions.back().mrr << ", Recall@10 "
          << report.repetitions.back().recall << "\n";

    if (r == 0) {
      // Ranked lists of the first repetition, top 20 per test interaction.
      std::ostringstream lines;
      for (std::size_t k = 0; k < test.size(); ++k) {
        const Vec scores = model.logits(test[k].user, test[k].prefix, test_ctx[k]);
        std::vector<std::size_t> order(scores.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        const std::size_t top = std::min<std::size_t>(20, order.size());
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(top), order.end(),
                          [&](std::size_t a, std::size_t b) {
                            return scores[a] != scores[b] ? scores[a] > scores[b] : a < b;
                          });
        ordered_json line;
        line["interaction"] = test[k].interaction;
        line["session"] = test[k].session;
        line["target"] = test[k].target_item;
        line["rank"] = ranks[k];
        ordered_json items = ordered_json::array();
        ordered_json values = ordered_json::array();
        for (std::size_t j = 0; j < top; ++j) {
          items.push_back(order[j]);
          values.push_back(scores[order[j]]);
        }
        line["items"] = items;
        line["scores"] = values;
        lines << line.dump() << "\n";
      }
      write_text(workdir_ / ("rankings-" + report.config_hash + ".jsonl"), lines.str());
    }
  }
  write_text(out, report_to_json(report, config_) + "\n");
  *log_ << "[evaluate] mean MRR " << report.mean_mrr() << ", mean Recall@10 " << report.mean_recall()
        << " -> " << out.filename().string() << "\n";
  return report;
}

void Pipeline::ensure(Stage stage, const std::optional<fs::path>& raw_log) {
  if (raw_log) {
    ingest(*raw_log, false);
  } else {
    require(Stage::kIngest, artifact_path(Stage::kIngest));
  }
  if (stage == Stage::kIngest) return;
  embed(false);
  if (stage == Stage::kEmbed) return;
  contextualize(false);
  if (stage == Stage::kContextualize) return;
  train_context(false);
  if (stage == Stage::kTrainContext) return;
  train_next(false);
  if (stage == Stage::kTrainNext) return;
  evaluate(false);
}

void Pipeline::verify_chain(Stage stage) const {
  for (int s = 0; s <= static_cast<int>(stage); ++s) {
    const Stage st = static_cast<Stage>(s);
    const std::string hash = stage_hash(st);
    if (st == Stage::kIngest) {
      const fs::path path = artifact_path(st);
      require(st, path);
      std::ifstream in(path);
      std::string header;
      std::getline(in, header);
      const auto j = nlohmann::json::parse(header);
      if (j.value("config_hash", std::string()) != hash) {
        throw FormatError(path.string() + " does not carry hash " + hash);
      }
    } else if (st == Stage::kEvaluate) {
      require(st, artifact_path(st));
    } else {
      const std::size_t copies = st == Stage::kTrainNext ? config_.repetitions : 1;
      for (std::size_t r = 0; r < copies; ++r) {
        const Checkpoint c = load_checked(artifact_path(st, r), st, hash);
        if (c.meta("parent_hash") != stage_hash(previous(st))) {
          throw FormatError(artifact_path(st, r).string() + " descends from a different " +
                            stage_name(previous(st)) + " artifact");
        }
      }
    }
  }
}

AblationReport Pipeline::ablate(const std::optional<fs::path>& raw_log) {
  if (config_.repetitions < 2) throw ConfigError("ablate needs repetitions >= 2 for the t-test");
  PipelineConfig with = config_;
  with.next_mode = mode_name(NextItemMode::kWithContext);
  PipelineConfig without = config_;
  without.next_mode = mode_name(NextItemMode::kAblation);
  Pipeline a(with, workdir_, *log_);
  Pipeline b(without, workdir_, *log_);
  a.ensure(Stage::kTrainNext, raw_log);
  b.ensure(Stage::kTrainNext, std::nullopt);
  AblationReport report;
  report.with_context = a.evaluate();
  report.ablation = b.evaluate();
  report.mrr_test = t_test_one_tailed(report.with_context.mrr_values(), report.ablation.mrr_values());
  report.recall_test =
      t_test_one_tailed(report.with_context.recall_values(), report.ablation.recall_values());
  const std::string h = fnv1a_hex(report.with_context.config_hash + report.ablation.config_hash);
  const fs::path out = workdir_ / ("ablation-" + h + ".json");
  write_text(out, ablation_to_json(report, config_) + "\n");
  *log_ << "[ablate] MRR " << report.with_context.mean_mrr() << " vs " << report.ablation.mean_mrr()
        << " (t " << report.mrr_test.t << ", p " << report.mrr_test.p << ") -> "
        << out.filename().string() << "\n";
  return report;
}

std::vector<SweepRow> Pipeline::sweep(const std::string& key, const std::vector<std::string>& values,
                                      const std::optional<fs::path>& raw_log) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<PipelineConfig> configs;
  for (const std::string& v : values) {
    PipelineConfig c = config_;
    if (key == "embedding_dim") {
      c.set("user_dim", v);
      c.set("item_dim", v);
    } else {
      c.set(key, v);
    }
    c.validate();
    configs.push_back(std::move(c));
  }
  if (raw_log) ingest(*raw_log, false);
  std::vector<SweepRow> rows;
  std::string hashes;
  for (std::size_t k = 0; k < values.size(); ++k) {
    *log_ << "[sweep] " << key << "=" << values[k] << "\n";
    Pipeline p(configs[k], workdir_, *log_);
    p.ensure(Stage::kTrainNext, std::nullopt);
    rows.push_back({values[k], p.evaluate()});
    hashes += rows.back().report.config_hash;
  }
  const fs::path out = workdir_ / ("sweep-" + key + "-" + fnv1a_hex(hashes) + ".json");
  write_text(out, sweep_to_json(key, rows, config_) + "\n");
  *log_ << "[sweep] " << rows.size() << " rows -> " << out.filename().string() << "\n";
  return rows;
}

void Pipeline::export_artifact(const std::string& what, const fs::path& out_path) const {
  const SplitCorpus corpus = load_corpus(artifact_path(Stage::kIngest), stage_hash(Stage::kIngest));
  std::ostringstream out;
  out.precision(17);
  if (what == "embeddings") {
    const Checkpoint encoder = load_checked(artifact_path(Stage::kEmbed), Stage::kEmbed, stage_hash(Stage::kEmbed));
    const CorpusEmbeddings ce = stored_embeddings(encoder);
    out << "session_id,split";
    for (std::size_t d = 0; d < ce.embeddings.cols(); ++d) out << ",c" << d;
    out << "\n";
    for (const Session& s : corpus.sessions) {
      if (ce.source[s.id] == EmbeddingSource::kUnavailable) continue;
      out << s.id << "," << split_name(corpus.session_split(s.id));
      for (double v : ce.embeddings.row(s.id)) out << "," << v;
      out << "\n";
    }
  } else if (what == "clusters") {
    const Checkpoint encoder = load_checked(artifact_path(Stage::kEmbed), Stage::kEmbed, stage_hash(Stage::kEmbed));
    const Checkpoint contexts = load_checked(artifact_path(Stage::kContextualize), Stage::kContextualize,
                                             stage_hash(Stage::kContextualize));
    const Tensor& embeddings = extra(encoder, "session_embeddings");
    const Tensor& centers = contexts.params.value(contexts.params.find("centers"));
    const std::vector<std::int32_t> labels = stored_labels(contexts);
    out << "session_id,context_id,distance_to_center\n";
    for (const Session& s : corpus.sessions) {
      if (labels[s.id] < 0) continue;
      const auto e = embeddings.row(s.id);
      const auto c = centers.row(static_cast<std::size_t>(labels[s.id]));
      double d2 = 0.0;
      for (std::size_t d = 0; d < e.size(); ++d) d2 += (e[d] - c[d]) * (e[d] - c[d]);
      out << s.id << "," << labels[s.id] << "," << std::sqrt(d2) << "\n";
    }
  } else if (what == "context-predictions") {
    const Checkpoint predictor = load_checked(artifact_path(Stage::kTrainContext), Stage::kTrainContext,
                                              stage_hash(Stage::kTrainContext));
    const Tensor& predictions = extra(predictor, "predictions");
    const std::size_t k = config_.top_k_contexts;
    out << "session_id,prefix_len";
    for (std::size_t j = 0; j < k; ++j) out << ",context" << j;
    for (std::size_t j = 0; j < k; ++j) out << ",probability" << j;
    out << "\n";
    for (std::size_t i = 0; i < corpus.interactions.size(); ++i) {
      const auto row = predictions.row(i);
      const auto ids = top_k_contexts(row, k);
      out << corpus.session_of[i] << ","
          << std::min<std::size_t>(corpus.position_of[i], config_.max_seq_len);
      for (std::uint32_t id : ids) out << "," << id;
      for (std::uint32_t id : ids) out << "," << row[id];
      out << "\n";
    }
  } else {
    throw ConfigError("unknown export '" + what + "' (embeddings, clusters, context-predictions)");
  }
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_text(out_path, out.str());
}

std::string report_to_json(const EvalReport& report, const PipelineConfig& config, int indent) {
  ordered_json j = report_json(report);
  j["next_mode"] = config.next_mode;
  j["config"] = config_json(config);
  return j.dump(indent);
}

std::string ablation_to_json(const AblationReport& report, const PipelineConfig& config) {
  ordered_json j;
  j["with_context"] = report_json(report.with_context);
  j["ablation"] = report_json(report.ablation);
  j["mrr_ratio"] = report.ablation.mean_mrr() > 0 ? report.with_context.mean_mrr() / report.ablation.mean_mrr()
                                                  : 0.0;
  j["mrr_test"] = ttest_json(report.mrr_test);
  j["recall_test"] = ttest_json(report.recall_test);
  j["config"] = config_json(config);
  return j.dump(2);
}

std::string sweep_to_json(const std::string& key, const std::vector<SweepRow>& rows,
                          const PipelineConfig& config) {
  ordered_json j;
  j["key"] = key;
  ordered_json out = ordered_json::array();
  for (const SweepRow& row : rows) {
    ordered_json r = report_json(row.report);
    r["value"] = row.value;
    out.push_back(r);
  }
  j["rows"] = out;
  j["config"] = config_json(config);
  return j.dump(2);
}

}  // namespace iscon
