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

// iscon command-line driver.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iscon/checkpoint.hpp"
#include "iscon/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfigFailure = 2, kMissingStage = 3 };

struct Options {
  std::string config_file;
  std::string workdir = "iscon-work";
  std::string input;
  bool force = false;
  std::map<std::string, std::string> overrides;
};

iscon::PipelineConfig resolve(const Options& o) {
  iscon::PipelineConfig config;
  if (!o.config_file.empty()) config.load_file(o.config_file);
  config.apply_environment();
  for (const auto& [key, value] : o.overrides) config.set(key, value);
  config.validate();
  return config;
}

std::optional<std::filesystem::path> input_path(const Options& o) {
  if (o.input.empty()) return std::nullopt;
  return std::filesystem::path(o.input);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"iscon: session-context pipeline for next-item prediction"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("-c,--config", o.config_file, "key=value config file");
  app.add_option("-w,--workdir", o.workdir, "artifact directory")->capture_default_str();
  app.add_flag("-f,--force", o.force, "recompute the stage even if its artifact exists");
  for (const std::string& key : iscon::PipelineConfig::keys()) {
    app.add_option_function<std::string>(
           "--" + key, [&o, key](const std::string& v) { o.overrides[key] = v; },
           "config override (default " + iscon::PipelineConfig().get(key) + ")")
        ->group("Config keys")
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  }

  auto* ingest = app.add_subcommand("ingest", "parse, sessionize and split a raw log");
  ingest->add_option("-i,--input", o.input, "raw interaction log")->required();
  app.add_subcommand("embed", "train the session graph encoder");
  app.add_subcommand("contextualize", "cluster session embeddings into contexts");
  app.add_subcommand("train-context", "train the context predictor");
  app.add_subcommand("train-next", "train the next-item model, one checkpoint per repetition");
  app.add_subcommand("evaluate", "score the test split and write the metrics report");

  auto* pipeline = app.add_subcommand("pipeline", "run every missing stage through evaluate");
  pipeline->add_option("-i,--input", o.input, "raw interaction log (needed on first run)");

  auto* ablate = app.add_subcommand("ablate", "compare with and without context embeddings");
  ablate->add_option("-i,--input", o.input, "raw interaction log (needed on first run)");

  std::string sweep_key;
  std::vector<std::string> sweep_values;
  auto* sweep = app.add_subcommand("sweep", "grid one hyperparameter, others fixed");
  sweep->add_option("-k,--key", sweep_key, "num_contexts, top_k_contexts, embedding_dim, context_dim, ...")
      ->required();
  sweep->add_option("-v,--values", sweep_values, "grid values (comma separated)")->delimiter(',');
  sweep->add_option("-i,--input", o.input, "raw interaction log (needed on first run)");

  std::string export_what;
  std::string export_out;
  auto* exp = app.add_subcommand("export", "write embeddings, clusters or context predictions as CSV");
  exp->add_option("what", export_what, "embeddings | clusters | context-predictions")
      ->required()
      ->check(CLI::IsMember({"embeddings", "clusters", "context-predictions"}));
  exp->add_option("-o,--out", export_out, "output CSV")->required();

  iscon::SynthOptions synth_options;
  std::string synth_out;
  std::string synth_sidecar;
  auto* synth = app.add_subcommand("synth", "generate a planted-context log");
  synth->add_option("-o,--out", synth_out, "log output")->required();
  synth->add_option("--sidecar", synth_sidecar, "planted labels output (default <out>.labels.csv)");
  synth->add_option("--users", synth_options.num_users)->capture_default_str();
  synth->add_option("--contexts", synth_options.num_contexts)->capture_default_str();
  synth->add_option("--items-per-context", synth_options.items_per_context)->capture_default_str();
  synth->add_option("--sessions-per-user", synth_options.sessions_per_user)->capture_default_str();
  synth->add_option("--stickiness", synth_options.stickiness)->capture_default_str();
  synth->add_option("--zipf", synth_options.zipf_exponent)->capture_default_str();
  synth->add_option("--synth-seed", synth_options.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help and friends exit 0; anything else is a usage error.
    return app.exit(e) == 0 ? kOk : kConfigFailure;
  }

  try {
    if (synth->parsed()) {
      if (synth_sidecar.empty()) synth_sidecar = synth_out + ".labels.csv";
      std::ofstream log(synth_out, std::ios::binary);
      std::ofstream sidecar(synth_sidecar, std::ios::binary);
      if (!log || !sidecar) throw std::runtime_error("cannot write synth outputs");
      iscon::synthesize(synth_options, log, sidecar);
      std::cerr << "wrote " << synth_out << " and " << synth_sidecar << "\n";
      return kOk;
    }

    iscon::Pipeline p(resolve(o), o.workdir, std::cerr);
    using iscon::Stage;
    if (ingest->parsed()) {
      p.ingest(o.input, o.force);
    } else if (app.got_subcommand("embed")) {
      p.embed(o.force);
    } else if (app.got_subcommand("contextualize")) {
      p.contextualize(o.force);
    } else if (app.got_subcommand("train-context")) {
      p.train_context(o.force);
    } else if (app.got_subcommand("train-next")) {
      p.train_next(o.force);
    } else if (app.got_subcommand("evaluate")) {
      const iscon::EvalReport report = p.evaluate(o.force);
      std::cout << iscon::report_to_json(report, p.config()) << "\n";
    } else if (pipeline->parsed()) {
      p.ensure(Stage::kTrainNext, input_path(o));
      std::cout << iscon::report_to_json(p.evaluate(), p.config()) << "\n";
    } else if (ablate->parsed()) {
      std::cout << iscon::ablation_to_json(p.ablate(input_path(o)), p.config()) << "\n";
    } else if (sweep->parsed()) {
      if (sweep_values.empty()) sweep_values = iscon::default_sweep_values(sweep_key);
      std::cout << iscon::sweep_to_json(sweep_key, p.sweep(sweep_key, sweep_values, input_path(o)),
                                        p.config())
                << "\n";
    } else if (exp->parsed()) {
      p.export_artifact(export_what, export_out);
    }
    return kOk;
  } catch (const iscon::MissingArtifact& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kMissingStage;
  } catch (const iscon::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
