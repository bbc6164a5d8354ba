// Copyright 2026 The mosanet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// mosanet: feature caching, training, prediction, evaluation and embedding
// analysis from one config file.
//
// Exit codes: 0 success, 2 config or usage error, 3 data error,
// 4 numeric failure.

#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "mosanet/mosanet.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code(mosanet::ErrorCategory c) {
  switch (c) {
    case mosanet::ErrorCategory::kConfig: return kExitConfig;
    case mosanet::ErrorCategory::kData: return kExitData;
    case mosanet::ErrorCategory::kNumeric: return kExitNumeric;
  }
  return kExitData;
}

const char* category_name(mosanet::ErrorCategory c) {
  switch (c) {
    case mosanet::ErrorCategory::kConfig: return "config error";
    case mosanet::ErrorCategory::kData: return "data error";
    case mosanet::ErrorCategory::kNumeric: return "numeric failure";
  }
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mosanet: non-intrusive speech quality and intelligibility assessment"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", mosanet::kVersion);

  std::string config_path;
  std::string log_level = "info";
  mosanet::CommandArgs args;
  std::string out, manifest, checkpoint, predictions;
  std::uint64_t seed = 0;
  int synth_count = 50;
  double synth_min = 0.5, synth_max = 2.0;
  bool synth_pairs = false;

  app.add_option("--log-level", log_level, "trace|debug|info|warn|error|off")->capture_default_str();

  auto add_config = [&](CLI::App* c) { c->add_option("--config", config_path, "INI config file"); };
  auto add_out = [&](CLI::App* c) { c->add_option("--out", out, "output directory"); };
  auto add_seed = [&](CLI::App* c) { return c->add_option("--seed", seed, "overrides train.seed"); };

  auto* prepare = app.add_subcommand("prepare", "extract and cache features for the train/valid sets");
  add_config(prepare);
  prepare->add_option("--manifest", manifest, "training manifest (overrides paths.train_manifest)");
  add_out(prepare);
  auto* prepare_seed = add_seed(prepare);

  auto* train = app.add_subcommand("train", "fit a model; writes checkpoints and a training report");
  add_config(train);
  train->add_option("--manifest", manifest, "training manifest (overrides paths.train_manifest)");
  train->add_option("--checkpoint", checkpoint, "initialize from this checkpoint (train.init_mode applies)");
  add_out(train);
  auto* train_seed = add_seed(train);

  auto* predict = app.add_subcommand("predict", "score a manifest with a checkpoint");
  add_config(predict);
  predict->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  predict->add_option("--manifest", manifest, "manifest to score")->required();
  add_out(predict);

  auto* evaluate = app.add_subcommand("evaluate", "compare predictions with manifest labels");
  add_config(evaluate);
  evaluate->add_option("--predictions", predictions, "predictions CSV")->required();
  evaluate->add_option("--manifest", manifest, "labelled manifest")->required();
  add_out(evaluate);

  auto* analyze = app.add_subcommand("analyze", "clean/degraded embedding distances and encoder correlations");
  add_config(analyze);
  analyze->add_option("--manifest", manifest, "manifest with pair_id links")->required();
  add_out(analyze);

  auto* show = app.add_subcommand("show-config", "print the resolved configuration with all defaults");
  add_config(show);

  auto* synth = app.add_subcommand("synthesize", "write a seeded synthetic corpus (wav/ and manifest.csv)");
  synth->add_option("--out", out, "output directory")->required();
  synth->add_option("--count", synth_count, "number of utterances")->capture_default_str();
  synth->add_option("--min-seconds", synth_min, "shortest duration")->capture_default_str();
  synth->add_option("--max-seconds", synth_max, "longest duration")->capture_default_str();
  auto* synth_seed = synth->add_option("--seed", seed, "corpus seed");
  synth->add_flag("--pairs", synth_pairs, "add a degraded copy of each utterance linked by pair_id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
  args.out = out;
  args.manifest = manifest;
  args.checkpoint = checkpoint;
  args.predictions = predictions;
  if (prepare_seed->count() || train_seed->count()) args.seed = seed;

  try {
    const mosanet::RunConfig cfg =
        config_path.empty() ? mosanet::RunConfig{} : mosanet::load_config(config_path);

    if (*show) {
      std::cout << mosanet::serialize_config(cfg, true);
    } else if (*prepare) {
      const auto report = mosanet::cmd_prepare(cfg, args);
      std::cout << report.dump(2) << "\n";
    } else if (*train) {
      const auto summary = mosanet::cmd_train(cfg, args);
      std::cout << summary.dump(2) << "\n";
    } else if (*predict) {
      const auto rows = mosanet::cmd_predict(cfg, args);
      spdlog::info("wrote {} predictions", rows.size());
    } else if (*evaluate) {
      const auto rep = mosanet::cmd_evaluate(cfg, args);
      std::cout << mosanet::format_report(rep);
    } else if (*analyze) {
      const auto res = mosanet::cmd_analyze(cfg, args);
      spdlog::info("{} distances over {} encoder(s); {} utterance(s) skipped", res.distances.size(),
                   res.correlations.encoder_ids.size(), res.skipped.size());
      std::cout << mosanet::serialize_correlations(res.correlations);
    } else if (*synth) {
      mosanet::SyntheticOptions opts;
      opts.count = synth_count;
      opts.min_seconds = synth_min;
      opts.max_seconds = synth_max;
      opts.degraded_pairs = synth_pairs;
      if (synth_seed->count()) opts.seed = seed;
      if (opts.count < 1 || !(opts.min_seconds > 0) || opts.max_seconds < opts.min_seconds) {
        throw mosanet::ArgumentError("synthesize: need count >= 1 and 0 < min-seconds <= max-seconds");
      }
      const auto m = mosanet::write_synthetic_corpus(out, opts);
      spdlog::info("wrote {} utterances to {}", m.size(), out);
    }
  } catch (const mosanet::Error& e) {
    std::fprintf(stderr, "mosanet: %s: %s\n", category_name(e.category()), e.what());
    return exit_code(e.category());
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "mosanet: data error: %s\n", e.what());
    return kExitData;
  }
  return 0;
}
