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

// The pipeline commands behind the mosanet tool. Each takes a resolved
// RunConfig plus the command-line overrides and writes its artifacts, with
// the resolved config, into one output directory.

#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mosanet/analysis.hpp"
#include "mosanet/checkpoint.hpp"
#include "mosanet/config.hpp"
#include "mosanet/data.hpp"
#include "mosanet/encoder.hpp"
#include "mosanet/features.hpp"
#include "mosanet/metrics.hpp"
#include "mosanet/model.hpp"
#include "mosanet/synthetic.hpp"
#include "mosanet/training.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

struct CommandArgs {
  std::filesystem::path out;         // empty: paths.output_dir
  std::filesystem::path manifest;    // overrides paths.train_manifest where relevant
  std::filesystem::path checkpoint;  // predict: weights; train: init checkpoint
  std::filesystem::path predictions;
  std::optional<std::uint64_t> seed;
};

namespace cmd_detail {

inline std::filesystem::path out_dir(const RunConfig& cfg, const CommandArgs& a) {
  return a.out.empty() ? std::filesystem::path(cfg.paths.output_dir) : a.out;
}

inline std::filesystem::path cache_dir(const RunConfig& cfg, const std::filesystem::path& out) {
  return cfg.paths.cache_dir.empty() ? out / "cache" : std::filesystem::path(cfg.paths.cache_dir);
}

inline RunConfig with_overrides(RunConfig cfg, const CommandArgs& a) {
  if (a.seed) cfg.train.seed = *a.seed;
  if (!a.manifest.empty()) cfg.paths.train_manifest = std::filesystem::absolute(a.manifest).string();
  if (!a.out.empty()) cfg.paths.output_dir = std::filesystem::absolute(a.out).string();
  return cfg;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_file_atomic(path, j.dump(2) + "\n");
}

// Training and validation manifests: the configured pair, or a seeded split
// of the training manifest.
inline ManifestSplit resolve_manifests(const RunConfig& cfg) {
  if (cfg.paths.train_manifest.empty()) throw ConfigError("no training manifest (paths.train_manifest or --manifest)");
  const Manifest train = load_manifest(cfg.paths.train_manifest);
  if (!cfg.paths.valid_manifest.empty()) return {train, load_manifest(cfg.paths.valid_manifest)};
  ManifestSplit s = split_manifest(train, 1.0 - cfg.valid_fraction, cfg.train.seed);
  return s;
}

inline std::vector<Example> load_examples(const Manifest& m, FeatureCache& cache) {
  std::vector<Example> out;
  out.reserve(m.size());
  for (const auto& r : m.records) {
    out.push_back({cache.get(r), {r.quality, r.intelligibility}, r.system_id});
  }
  return out;
}

template <typename S>
nlohmann::json train_impl(const RunConfig& cfg, const std::filesystem::path& out, const std::vector<Example>& train,
                          const std::vector<Example>& valid) {
  ModelWeights<S> w = init_weights<S>(cfg.topology(), cfg.train.seed);
  nlohmann::json summary;
  if (!cfg.train.init_checkpoint.empty()) {
    const InitReport rep = init_from_checkpoint(&w, cfg.train.init_checkpoint, cfg.train.init_mode);
    spdlog::info("initialized {} of {} parameter tensors from {} ({:.1f}% of values)", rep.copied.size(),
                 rep.copied.size() + rep.untouched.size(), cfg.train.init_checkpoint, 100.0 * rep.copied_fraction());
    summary["init"] = {{"checkpoint", cfg.train.init_checkpoint},
                       {"mode", to_string(rep.mode)},
                       {"copied", rep.copied},
                       {"untouched", rep.untouched},
                       {"copied_fraction", rep.copied_fraction()}};
  }
  spdlog::info("model has {} parameters ({})", w.parameter_count(), to_string(cfg.train.precision));
  FitOptions opts;
  opts.out_dir = out;
  opts.feature_config = cfg.feature_config();
  const FitResult<S> res = fit(std::move(w), std::span<const Example>(train), std::span<const Example>(valid),
                               cfg.loss, cfg.train, opts);
  summary["parameter_count"] = res.best_weights.parameter_count();
  summary["epochs_run"] = res.history.size();
  summary["best_epoch"] = res.best_epoch;
  summary["best_valid_loss"] =
      std::isfinite(res.best_valid_loss) ? nlohmann::json(res.best_valid_loss) : nlohmann::json(nullptr);
  summary["stop_reason"] = res.stop_reason;
  summary["best_checkpoint"] = (out / kBestCheckpointFile).string();
  return summary;
}

template <typename S>
std::vector<PredictionRow> predict_impl(const std::filesystem::path& checkpoint, const RunConfig& cfg,
                                        const Manifest& m, FeatureCache& cache) {
  const LoadedCheckpoint<S> ck = load_checkpoint<S>(checkpoint);
  if (ck.info.feature_config != cfg.feature_config()) {
    throw ConfigError(checkpoint.string() + ": checkpoint was trained with features " + ck.info.feature_config.dump() +
                      " but the config gives " + cfg.feature_config().dump());
  }
  std::vector<PredictionRow> rows;
  for (const auto& r : m.records) {
    const FeatureBundle b = cache.get(r);
    const Prediction p = detail::with_utterance(r.utterance_id, [&] { return forward(b, ck.weights); });
    rows.push_back({r.utterance_id, p.utterance_quality, p.utterance_intelligibility});
  }
  return rows;
}

inline std::string checkpoint_precision(const std::filesystem::path& path) {
  const Archive ar = Archive::load(path);
  return checkpoint_info(ar, path.string()).precision;
}

}  // namespace cmd_detail

// Extracts and caches features for the training and validation sets.
inline nlohmann::json cmd_prepare(const RunConfig& base, const CommandArgs& a) {
  const RunConfig cfg = cmd_detail::with_overrides(base, a);
  const auto out = cmd_detail::out_dir(cfg, a);
  const ManifestSplit sets = cmd_detail::resolve_manifests(cfg);
  const auto backend = make_backend(cfg.encoder);
  FeatureCache cache(cmd_detail::cache_dir(cfg, out), cfg.stft, *backend);
  for (const auto* m : {&sets.first, &sets.second}) {
    for (const auto& r : m->records) cache.get(r);
  }
  std::filesystem::create_directories(out);
  save_manifest(sets.first, out / "train_manifest.csv");
  save_manifest(sets.second, out / "valid_manifest.csv");
  const nlohmann::json report = {{"train_utterances", sets.first.size()},
                                 {"valid_utterances", sets.second.size()},
                                 {"cache_dir", cmd_detail::cache_dir(cfg, out).string()},
                                 {"cache_hits", cache.stats().hits},
                                 {"cache_misses", cache.stats().misses},
                                 {"cache_recomputed", cache.stats().recomputed}};
  cmd_detail::write_json(out / "prepare_report.json", report);
  write_resolved_config(cfg, out);
  return report;
}

inline nlohmann::json cmd_train(const RunConfig& base, const CommandArgs& a) {
  RunConfig cfg = cmd_detail::with_overrides(base, a);
  if (!a.checkpoint.empty()) cfg.train.init_checkpoint = std::filesystem::absolute(a.checkpoint).string();
  const auto out = cmd_detail::out_dir(cfg, a);
  const ManifestSplit sets = cmd_detail::resolve_manifests(cfg);
  if (sets.second.empty()) throw ArgumentError("validation set is empty");
  const auto backend = make_backend(cfg.encoder);
  FeatureCache cache(cmd_detail::cache_dir(cfg, out), cfg.stft, *backend);
  const auto train = cmd_detail::load_examples(sets.first, cache);
  const auto valid = cmd_detail::load_examples(sets.second, cache);
  std::filesystem::create_directories(out);
  write_resolved_config(cfg, out);
  nlohmann::json summary = cfg.train.precision == Precision::kFloat32
                               ? cmd_detail::train_impl<float>(cfg, out, train, valid)
                               : cmd_detail::train_impl<double>(cfg, out, train, valid);
  cmd_detail::write_json(out / "train_summary.json", summary);
  return summary;
}

inline std::vector<PredictionRow> cmd_predict(const RunConfig& base, const CommandArgs& a) {
  const RunConfig cfg = cmd_detail::with_overrides(base, a);
  if (a.checkpoint.empty()) throw ConfigError("predict needs --checkpoint");
  if (a.manifest.empty()) throw ConfigError("predict needs --manifest");
  const auto out = cmd_detail::out_dir(cfg, a);
  const Manifest m = load_manifest(a.manifest);
  const auto backend = make_backend(cfg.encoder);
  FeatureCache cache(cmd_detail::cache_dir(cfg, out), cfg.stft, *backend);
  const std::string precision = cmd_detail::checkpoint_precision(a.checkpoint);
  const auto rows = precision == "float32" ? cmd_detail::predict_impl<float>(a.checkpoint, cfg, m, cache)
                                           : cmd_detail::predict_impl<double>(a.checkpoint, cfg, m, cache);
  std::filesystem::create_directories(out);
  save_predictions(rows, out / "predictions.csv");
  write_resolved_config(cfg, out);
  return rows;
}

inline EvalReport cmd_evaluate(const RunConfig& base, const CommandArgs& a) {
  const RunConfig cfg = cmd_detail::with_overrides(base, a);
  if (a.predictions.empty()) throw ConfigError("evaluate needs --predictions");
  if (a.manifest.empty()) throw ConfigError("evaluate needs --manifest");
  const auto rows = load_predictions(a.predictions);
  const Manifest m = load_manifest(a.manifest, LoadMode::kLazy);
  const EvalReport rep = evaluate(rows, m);
  if (!a.out.empty()) {
    std::filesystem::create_directories(a.out);
    cmd_detail::write_json(a.out / "eval_report.json", to_json(rep));
    write_file_atomic(a.out / "eval_report.txt", format_report(rep));
    write_resolved_config(cfg, a.out);
  }
  return rep;
}

inline AnalysisResult cmd_analyze(const RunConfig& base, const CommandArgs& a) {
  const RunConfig cfg = cmd_detail::with_overrides(base, a);
  if (cfg.paths.train_manifest.empty()) throw ConfigError("analyze needs --manifest");
  const auto out = cmd_detail::out_dir(cfg, a);
  const Manifest m = load_manifest(cfg.paths.train_manifest);
  std::vector<std::unique_ptr<EncoderBackend>> owned;
  std::vector<const EncoderBackend*> backends;
  for (const auto& spec : cfg.analysis_specs()) {
    owned.push_back(make_backend(spec));
    backends.push_back(owned.back().get());
  }
  AnalysisOptions opts;
  opts.correlation = cfg.correlation;
  AnalysisResult res = run_analysis(m, backends, out, opts);
  write_resolved_config(cfg, out);
  return res;
}

}  // namespace mosanet
