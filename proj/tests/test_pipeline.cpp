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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "fixtures.hpp"
#include "iscon/checkpoint.hpp"
#include "iscon/pipeline.hpp"

using namespace iscon;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  explicit TempDir(const std::string& tag)
      : path_(fs::temp_directory_path() / ("iscon-" + tag + "-" + std::to_string(::getpid()))) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Small enough that a full run takes a second or two.
PipelineConfig tiny_config() {
  PipelineConfig c;
  c.session_emb_dim = 8;
  c.sage_base_dim = 8;
  c.sage_epochs = 2;
  c.sage_batch = 128;
  c.num_contexts = 4;
  c.kmeans_restarts = 2;
  c.top_k_contexts = 2;
  c.user_dim = 4;
  c.item_dim = 4;
  c.context_dim = 4;
  c.lstm_hidden = 4;
  c.max_seq_len = 5;
  c.lr = 0.01;
  c.batch = 64;
  c.max_epochs = 2;
  c.patience = 2;
  c.repetitions = 2;
  c.seed = 3;
  return c;
}

fs::path write_synth(const fs::path& dir, std::uint64_t seed = 5) {
  SynthOptions o = fixture::tiny_synth(12, 3, 6, 12, seed);
  const fs::path log = dir / "synth.csv";
  std::ofstream out(log), side(dir / "synth.labels.csv");
  synthesize(o, out, side);
  return log;
}

int run_cli(const std::string& args, const fs::path& capture) {
  const std::string cmd = std::string(ISCON_CLI_PATH) + " " + args + " > " + capture.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, EveryKeyRoundTripsThroughText) {
  PipelineConfig a = tiny_config();
  a.delimiter = ";";
  a.next_mode = "ablation";
  a.has_header = true;
  std::istringstream in(a.to_text());
  PipelineConfig b;
  b.load_text(in);
  EXPECT_EQ(b.to_text(), a.to_text());
  for (const std::string& key : PipelineConfig::keys()) EXPECT_EQ(b.get(key), a.get(key)) << key;
}

TEST(Config, TextFormat) {
  std::istringstream in("# comment\nnum_contexts = 12  # trailing\n\nlr=0.5\ndelimiter=#\nhas_header=yes\n");
  PipelineConfig c;
  c.load_text(in);
  EXPECT_EQ(c.num_contexts, 12u);
  EXPECT_EQ(c.lr, 0.5);
  EXPECT_EQ(c.delimiter, "#");
  EXPECT_TRUE(c.has_header);
}

TEST(Config, RejectsBadInput) {
  PipelineConfig c;
  EXPECT_THROW(c.set("no_such_key", "1"), ConfigError);
  EXPECT_THROW(c.set("num_contexts", "ten"), ConfigError);
  EXPECT_THROW(c.set("num_contexts", "-3"), ConfigError);
  EXPECT_THROW(c.set("has_header", "maybe"), ConfigError);
  std::istringstream bad("num_contexts\n");
  EXPECT_THROW(c.load_text(bad), ConfigError);
}

TEST(Config, Validation) {
  EXPECT_NO_THROW(PipelineConfig{}.validate());
  auto invalid = [](const std::string& key, const std::string& value) {
    PipelineConfig c;
    c.set(key, value);
    return c;
  };
  EXPECT_THROW(invalid("top_k_contexts", "41").validate(), ConfigError);
  EXPECT_THROW(invalid("user_dim", "0").validate(), ConfigError);
  EXPECT_THROW(invalid("lr", "0").validate(), ConfigError);
  EXPECT_THROW(invalid("train_frac", "1.5").validate(), ConfigError);
  EXPECT_THROW(invalid("delimiter", ";;").validate(), ConfigError);
  EXPECT_THROW(invalid("next_mode", "other").validate(), ConfigError);
  EXPECT_THROW(invalid("item_column", "0").validate(), ConfigError);
  EXPECT_NO_THROW(invalid("delimiter", "\\t").validate());
}

TEST(Config, SeedFromEnvironment) {
  PipelineConfig c;
  ::setenv("ISCON_SEED", "1234", 1);
  c.apply_environment();
  ::unsetenv("ISCON_SEED");
  EXPECT_EQ(c.seed, 1234u);
  c.seed = 9;
  c.apply_environment();
  EXPECT_EQ(c.seed, 9u);
}

TEST(StageHash, ScopedToStageInputs) {
  TempDir dir("hash");
  std::ostringstream log;
  const PipelineConfig base = tiny_config();
  Pipeline p(base, dir.path(), log);
  p.ingest(write_synth(dir.path()));
  auto with = [&](const std::string& key, const std::string& value) {
    PipelineConfig c = base;
    c.set(key, value);
    return Pipeline(c, dir.path(), log);
  };
  auto same = [&](const Pipeline& q, Stage s) { return q.stage_hash(s) == p.stage_hash(s); };

  const Pipeline lr = with("lr", "0.02");
  EXPECT_TRUE(same(lr, Stage::kContextualize));
  EXPECT_FALSE(same(lr, Stage::kTrainContext));
  EXPECT_FALSE(same(lr, Stage::kEvaluate));

  const Pipeline mode = with("next_mode", "ablation");
  EXPECT_TRUE(same(mode, Stage::kTrainContext));
  EXPECT_FALSE(same(mode, Stage::kTrainNext));

  const Pipeline sage = with("sage_lr", "0.5");
  EXPECT_TRUE(same(sage, Stage::kIngest));
  EXPECT_FALSE(same(sage, Stage::kEmbed));
  EXPECT_FALSE(same(sage, Stage::kTrainNext));

  const Pipeline idle = with("idle_threshold_s", "60");
  EXPECT_FALSE(same(idle, Stage::kIngest));

  EXPECT_EQ(with("threads", "1").stage_hash(Stage::kEvaluate), p.stage_hash(Stage::kEvaluate));
}

TEST(Synth, DeterministicAndWithinVocabulary) {
  SynthOptions o;
  std::ostringstream log1, side1, log2, side2, log3, side3;
  synthesize(o, log1, side1);
  synthesize(o, log2, side2);
  EXPECT_EQ(log1.str(), log2.str());
  EXPECT_EQ(side1.str(), side2.str());
  o.seed = 8;
  synthesize(o, log3, side3);
  EXPECT_NE(log1.str(), log3.str());

  std::istringstream in(log1.str());
  const InteractionLog parsed = parse_log(in, LogSchema{});
  EXPECT_TRUE(parsed.skipped.empty());
  EXPECT_EQ(parsed.users.size(), 50u);
  EXPECT_LE(parsed.items.size(), 240u);
  for (const std::string& raw : parsed.items.raw) EXPECT_LT(std::stoul(raw), 240u);
}

TEST(Synth, SidecarCoversEverySession) {
  const auto pc = fixture::planted_corpus(SynthOptions{});
  EXPECT_EQ(pc.corpus.sessions.size(), 50u * 40u);
  for (std::int32_t label : pc.planted) {
    EXPECT_GE(label, 0);
    EXPECT_LT(label, 8);
  }
}

TEST(Synth, PlantedContextsOwnDisjointItems) {
  const auto pc = fixture::planted_corpus(fixture::tiny_synth(10, 4, 5, 10));
  for (const Session& s : pc.corpus.sessions) {
    for (ItemId i : s.items) {
      EXPECT_EQ(std::stoul(pc.corpus.items.raw[i]) / 5, std::size_t(pc.planted[s.id]));
    }
  }
}

class PipelineRun : public ::testing::Test {
 protected:
  void SetUp() override { raw_ = write_synth(dir_.path()); }
  TempDir dir_{"pipe"};
  fs::path raw_;
  std::ostringstream log_;
};

TEST_F(PipelineRun, FullRunThenReuse) {
  const fs::path work = dir_.path() / "work";
  Pipeline p(tiny_config(), work, log_);
  p.ensure(Stage::kTrainNext, raw_);
  const EvalReport report = p.evaluate();
  ASSERT_EQ(report.repetitions.size(), 2u);
  EXPECT_GT(report.mean_mrr(), 0.0);
  EXPECT_LE(report.mean_mrr(), 1.0);
  EXPECT_TRUE(fs::exists(p.artifact_path(Stage::kEvaluate)));
  for (std::size_t r = 0; r < 2; ++r) EXPECT_TRUE(fs::exists(p.artifact_path(Stage::kTrainNext, r)));
  EXPECT_NO_THROW(p.verify_chain(Stage::kEvaluate));

  const std::string metrics = slurp(p.artifact_path(Stage::kEvaluate));
  std::ostringstream again;
  Pipeline q(tiny_config(), work, again);
  q.ensure(Stage::kTrainNext, raw_);
  q.evaluate();
  EXPECT_NE(again.str().find("[embed] reusing"), std::string::npos);
  EXPECT_NE(again.str().find("[evaluate] reusing"), std::string::npos);
  EXPECT_EQ(slurp(q.artifact_path(Stage::kEvaluate)), metrics);
}

TEST_F(PipelineRun, EvaluateBeforeTrainNextNamesTheStage) {
  Pipeline p(tiny_config(), dir_.path() / "work", log_);
  p.ensure(Stage::kTrainContext, raw_);
  try {
    p.evaluate();
    FAIL() << "evaluate ran without next-item checkpoints";
  } catch (const MissingArtifact& e) {
    EXPECT_EQ(e.required_stage(), "train-next");
    EXPECT_NE(std::string(e.what()).find("train-next"), std::string::npos);
  }
}

TEST_F(PipelineRun, RefusesForeignArtifact) {
  const fs::path work = dir_.path() / "work";
  Pipeline a(tiny_config(), work, log_);
  a.ensure(Stage::kTrainContext, raw_);
  PipelineConfig other = tiny_config();
  other.lr = 0.02;
  Pipeline b(other, work, log_);
  EXPECT_THROW(b.verify_chain(Stage::kTrainContext), MissingArtifact);
  fs::copy_file(a.artifact_path(Stage::kTrainContext), b.artifact_path(Stage::kTrainContext));
  EXPECT_THROW(b.verify_chain(Stage::kTrainContext), FormatError);
  EXPECT_THROW(b.train_next(), FormatError);
}

TEST_F(PipelineRun, RefusesDifferentRawLog) {
  const fs::path work = dir_.path() / "work";
  Pipeline p(tiny_config(), work, log_);
  p.ingest(raw_);
  const fs::path other = dir_.path() / "other";
  fs::create_directories(other);
  const fs::path raw2 = write_synth(other, 99);
  EXPECT_ANY_THROW(p.ingest(raw2));
  EXPECT_NO_THROW(p.ingest(raw2, true));
}

TEST_F(PipelineRun, SweepGivesOneRowPerValue) {
  PipelineConfig c = tiny_config();
  c.repetitions = 1;
  Pipeline p(c, dir_.path() / "work", log_);
  const auto values = default_sweep_values("num_contexts");
  ASSERT_EQ(values, (std::vector<std::string>{"10", "20", "40", "60", "80"}));
  const auto rows = p.sweep("num_contexts", values, raw_);
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t k = 0; k < 5; ++k) {
    EXPECT_EQ(rows[k].value, values[k]);
    EXPECT_EQ(rows[k].report.repetitions.size(), 1u);
  }
  EXPECT_THROW(p.sweep("num_contexts", {"4", "0"}, raw_), ConfigError);
}

TEST_F(PipelineRun, ExportsCsv) {
  Pipeline p(tiny_config(), dir_.path() / "work", log_);
  p.ensure(Stage::kTrainContext, raw_);
  const fs::path out = dir_.path() / "clusters.csv";
  p.export_artifact("clusters", out);
  std::istringstream in(slurp(out));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "session_id,context_id,distance_to_center");
  std::size_t rows = 0;
  while (std::getline(in, line)) ++rows;
  EXPECT_GT(rows, 0u);
  EXPECT_THROW(p.export_artifact("nonsense", out), ConfigError);
}

TEST_F(PipelineRun, CliExitCodes) {
  const fs::path work = dir_.path() / "cli";
  const fs::path out = dir_.path() / "cli.out";
  const std::string common = "-w " + work.string() +
                             " --session_emb_dim 8 --sage_base_dim 8 --sage_epochs 2 --num_contexts 4"
                             " --top_k_contexts 2 --user_dim 4 --item_dim 4 --context_dim 4 --lstm_hidden 4"
                             " --max_epochs 2 --repetitions 2 --kmeans_restarts 2";
  EXPECT_EQ(run_cli(common + " ingest -i " + raw_.string(), out), 0) << slurp(out);
  for (const char* stage : {"embed", "contextualize", "train-context"}) {
    EXPECT_EQ(run_cli(common + " " + stage, out), 0) << slurp(out);
  }
  EXPECT_EQ(run_cli(common + " evaluate", out), 3) << slurp(out);
  EXPECT_NE(slurp(out).find("train-next"), std::string::npos);
  EXPECT_EQ(run_cli(common + " --top_k_contexts 9 embed", out), 2) << slurp(out);
  EXPECT_EQ(run_cli(common + " --no_such_flag 1 embed", out), 2);
  EXPECT_EQ(run_cli(common + " pipeline -i " + raw_.string(), out), 0) << slurp(out);
  EXPECT_NE(slurp(out).find("\"mean_mrr\""), std::string::npos);
}
