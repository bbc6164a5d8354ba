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

// Optimization loop: minibatch steps, validation, best-checkpoint selection
// and a per-epoch JSON-lines report.

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mosanet/checkpoint.hpp"
#include "mosanet/error.hpp"
#include "mosanet/features.hpp"
#include "mosanet/loss.hpp"
#include "mosanet/metrics.hpp"
#include "mosanet/model.hpp"
#include "mosanet/optim.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

enum class Precision { kFloat32, kFloat64 };

inline const char* to_string(Precision p) { return p == Precision::kFloat32 ? "float32" : "float64"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "float32") return Precision::kFloat32;
  if (s == "float64") return Precision::kFloat64;
  throw ConfigError("unknown precision '" + s + "' (expected float32 or float64)");
}

struct TrainConfig {
  double learning_rate = 1e-5;
  int max_epochs = 100;
  int batch_size = 1;
  std::uint64_t seed = 0;
  int early_stop_patience = 10;  // epochs without validation improvement; 0 disables
  double stop_loss = 0.0;        // stop once the epoch's training loss is below this; 0 disables
  std::string init_checkpoint;   // empty: fresh initialization
  InitMode init_mode = InitMode::kFull;
  Precision precision = Precision::kFloat32;

  void validate() const {
    if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate must be > 0");
    if (max_epochs < 0) throw ConfigError("train.max_epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (early_stop_patience < 0) throw ConfigError("train.early_stop_patience must be >= 0");
    if (!(stop_loss >= 0)) throw ConfigError("train.stop_loss must be >= 0");
  }
};

// One training or validation item with its features already extracted.
struct Example {
  FeatureBundle features;
  Labels labels;
  std::string system_id;
};

namespace detail {

// Re-raises a numeric failure with the utterance that caused it.
template <typename F>
auto with_utterance(const std::string& utterance_id, F&& f) {
  try {
    return f();
  } catch (const NumericError& e) {
    throw NumericError("utterance '" + utterance_id + "': " + e.what());
  }
}

}  // namespace detail

// One optimizer update on the mean loss of the batch. Returns the batch loss
// measured before the update. On a non-finite loss or gradient the step is
// abandoned and the weights are left unchanged.
template <typename S>
double train_step(ModelWeights<S>* w, Adam<S>* opt, std::span<const Example* const> batch, const LossConfig& cfg,
                  double learning_rate) {
  if (batch.empty()) throw ArgumentError("train_step: empty batch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  ModelWeights<S> grads = w->zeros_like();
  double loss_sum = 0.0;
  for (const Example* ex : batch) {
    const std::string& id = ex->features.utterance_id;
    const double loss = detail::with_utterance(
        id, [&] { return loss_and_gradient(ex->features, ex->labels, *w, cfg, &grads, scale); });
    if (!std::isfinite(loss)) throw NumericError("utterance '" + id + "': non-finite loss");
    if (!grads.all_finite()) throw NumericError("utterance '" + id + "': non-finite gradient");
    loss_sum += loss;
  }
  if (learning_rate != 0.0) opt->step(w, grads, learning_rate);
  return loss_sum * scale;
}

template <typename S>
double train_step(ModelWeights<S>* w, Adam<S>* opt, std::span<const Example> batch, const LossConfig& cfg,
                  double learning_rate) {
  std::vector<const Example*> ptrs;
  for (const auto& e : batch) ptrs.push_back(&e);
  return train_step(w, opt, std::span<const Example* const>(ptrs), cfg, learning_rate);
}

template <typename S>
std::vector<Prediction> predict_all(std::span<const Example> examples, const ModelWeights<S>& w) {
  std::vector<Prediction> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back(detail::with_utterance(ex.features.utterance_id, [&] { return forward(ex.features, w); }));
  }
  return out;
}

struct SetScores {
  double loss = 0.0;
  double lcc_q = std::numeric_limits<double>::quiet_NaN();
  double srcc_q = std::numeric_limits<double>::quiet_NaN();
  double lcc_i = std::numeric_limits<double>::quiet_NaN();
  double srcc_i = std::numeric_limits<double>::quiet_NaN();
};

// Mean loss and utterance-level correlations of a model on a labelled set.
// Correlations are NaN where undefined (fewer than two items, or constant
// scores).
template <typename S>
SetScores score_set(std::span<const Example> examples, const ModelWeights<S>& w, const LossConfig& cfg) {
  if (examples.empty()) throw ArgumentError("score_set: empty set");
  const auto preds = predict_all(examples, w);
  SetScores s;
  std::vector<double> pq, tq, pi, ti;
  for (std::size_t n = 0; n < examples.size(); ++n) {
    s.loss += compute_loss(preds[n], examples[n].labels, cfg);
    pq.push_back(preds[n].utterance_quality);
    tq.push_back(examples[n].labels.quality);
    pi.push_back(preds[n].utterance_intelligibility);
    ti.push_back(examples[n].labels.intelligibility);
  }
  s.loss /= static_cast<double>(examples.size());
  auto safe = [](double (*f)(std::span<const double>, std::span<const double>), const std::vector<double>& a,
                 const std::vector<double>& b) {
    try {
      return f(a, b);
    } catch (const Error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  s.lcc_q = safe(lcc, pq, tq);
  s.srcc_q = safe(srcc, pq, tq);
  s.lcc_i = safe(lcc, pi, ti);
  s.srcc_i = safe(srcc, pi, ti);
  return s;
}

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double valid_lcc_q = 0.0;
  double valid_srcc_q = 0.0;
  double valid_lcc_i = 0.0;
  double valid_srcc_i = 0.0;

  nlohmann::json to_json() const {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    return {{"epoch", epoch},
            {"train_loss", num(train_loss)},
            {"valid_loss", num(valid_loss)},
            {"valid_lcc_q", num(valid_lcc_q)},
            {"valid_srcc_q", num(valid_srcc_q)},
            {"valid_lcc_i", num(valid_lcc_i)},
            {"valid_srcc_i", num(valid_srcc_i)}};
  }
};

inline constexpr const char* kReportFile = "train_report.jsonl";
inline constexpr const char* kBestCheckpointFile = "best.ckpt";
inline constexpr const char* kLastCheckpointFile = "last.ckpt";

struct FitOptions {
  std::filesystem::path out_dir;  // empty: nothing is written
  nlohmann::json feature_config = nlohmann::json::object();
  std::function<void(const EpochRecord&)> on_epoch;
};

template <typename S>
struct FitResult {
  ModelWeights<S> best_weights;
  ModelWeights<S> final_weights;
  std::vector<EpochRecord> history;
  int best_epoch = -1;  // -1 when no epoch ran
  double best_valid_loss = std::numeric_limits<double>::infinity();
  std::string stop_reason;
};

inline std::string serialize_report(std::span<const EpochRecord> history) {
  std::string out;
  for (const auto& r : history) out += r.to_json().dump() + "\n";
  return out;
}

// Trains from init. Deterministic given the seed. The best checkpoint is the
// one with the lowest validation loss; with max_epochs = 0 it is init itself.
template <typename S>
FitResult<S> fit(ModelWeights<S> init, std::span<const Example> train, std::span<const Example> valid,
                 const LossConfig& loss_cfg, const TrainConfig& cfg, const FitOptions& opts = {}) {
  cfg.validate();
  loss_cfg.validate();
  if (train.empty()) throw ArgumentError("fit: training set is empty");
  if (valid.empty()) throw ArgumentError("fit: validation set is empty");

  FitResult<S> res;
  res.best_weights = init;
  ModelWeights<S> w = std::move(init);
  Adam<S> opt(w);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  const bool write = !opts.out_dir.empty();
  if (write) std::filesystem::create_directories(opts.out_dir);
  auto save = [&](const ModelWeights<S>& m, const char* name, int epoch) {
    if (!write) return;
    save_checkpoint(opts.out_dir / name, m, opts.feature_config, {{"epoch", epoch}, {"seed", cfg.seed}});
  };
  auto write_report = [&] {
    if (write) write_file_atomic(opts.out_dir / kReportFile, serialize_report(res.history));
  };

  if (cfg.max_epochs == 0) {
    res.stop_reason = "max_epochs is 0";
    res.final_weights = w;
    save(w, kBestCheckpointFile, -1);
    save(w, kLastCheckpointFile, -1);
    write_report();
    return res;
  }

  int since_best = 0;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::vector<const Example*> batch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      batch.clear();
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
      loss_sum += train_step(&w, &opt, std::span<const Example* const>(batch), loss_cfg, cfg.learning_rate) *
                  static_cast<double>(batch.size());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    const SetScores vs = score_set(valid, w, loss_cfg);
    rec.valid_loss = vs.loss;
    rec.valid_lcc_q = vs.lcc_q;
    rec.valid_srcc_q = vs.srcc_q;
    rec.valid_lcc_i = vs.lcc_i;
    rec.valid_srcc_i = vs.srcc_i;
    res.history.push_back(rec);
    spdlog::info("epoch {} train_loss {:.6f} valid_loss {:.6f} valid_lcc_q {:.4f} valid_lcc_i {:.4f}", epoch,
                 rec.train_loss, rec.valid_loss, rec.valid_lcc_q, rec.valid_lcc_i);
    if (opts.on_epoch) opts.on_epoch(rec);

    if (rec.valid_loss < res.best_valid_loss) {
      res.best_valid_loss = rec.valid_loss;
      res.best_epoch = epoch;
      res.best_weights = w;
      since_best = 0;
      save(w, kBestCheckpointFile, epoch);
    } else {
      ++since_best;
    }
    write_report();

    if (cfg.stop_loss > 0 && rec.train_loss < cfg.stop_loss) {
      res.stop_reason = "training loss below stop_loss";
      break;
    }
    if (cfg.early_stop_patience > 0 && since_best >= cfg.early_stop_patience) {
      res.stop_reason = "no validation improvement for " + std::to_string(since_best) + " epochs";
      spdlog::info("early stop: {}", res.stop_reason);
      break;
    }
  }
  if (res.stop_reason.empty()) res.stop_reason = "max_epochs reached";
  res.final_weights = w;
  save(w, kLastCheckpointFile, res.history.back().epoch);
  return res;
}

}  // namespace mosanet
