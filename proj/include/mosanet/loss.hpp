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

// Multi-task objective combining utterance-level and frame-level errors.
// For one utterance with F frames, per task:
//
//   L_task = (y - mean(p))^2 + (alpha / F) * sum_l (y - p_l)^2
//
// and the total is gamma_q * L_quality + gamma_i * L_intelligibility. The
// utterance label is the target of every frame. Batch loss is the mean over
// utterances, each with its own F (no padding).

#pragma once

#include <span>
#include <string>
#include <vector>

#include "mosanet/data.hpp"
#include "mosanet/error.hpp"
#include "mosanet/model.hpp"

namespace mosanet {

struct LossConfig {
  double gamma_quality = 1.0;
  double gamma_intelligibility = 1.0;
  double alpha_quality = 1.0;
  double alpha_intelligibility = 1.0;

  void validate() const {
    if (!(gamma_quality >= 0 && gamma_intelligibility >= 0 && alpha_quality >= 0 && alpha_intelligibility >= 0)) {
      throw ConfigError("loss weights must be non-negative");
    }
  }
};

struct Labels {
  double quality = 0.0;
  double intelligibility = 0.0;
};

struct LossTerms {
  double quality = 0.0;          // L_quality, unweighted
  double intelligibility = 0.0;  // L_intelligibility, unweighted
  double total = 0.0;
};

// Unweighted single-task term.
inline double task_loss(double label, double utterance, std::span<const double> frames, double alpha) {
  const double u = label - utterance;
  double frame_sum = 0.0;
  for (double p : frames) frame_sum += (label - p) * (label - p);
  return u * u + alpha / static_cast<double>(frames.size()) * frame_sum;
}

inline LossTerms compute_loss_terms(const Prediction& pred, const Labels& y, const LossConfig& cfg) {
  if (pred.frame_count < 1 || pred.frame_quality.size() != pred.frame_count ||
      pred.frame_intelligibility.size() != pred.frame_count) {
    throw ArgumentError("prediction must have at least one frame per task");
  }
  validate_labels(y.quality, y.intelligibility, "loss labels");
  LossTerms t;
  t.quality = task_loss(y.quality, pred.utterance_quality, pred.frame_quality, cfg.alpha_quality);
  t.intelligibility = task_loss(y.intelligibility, pred.utterance_intelligibility, pred.frame_intelligibility,
                                cfg.alpha_intelligibility);
  t.total = cfg.gamma_quality * t.quality + cfg.gamma_intelligibility * t.intelligibility;
  return t;
}

inline double compute_loss(const Prediction& pred, const Labels& y, const LossConfig& cfg) {
  return compute_loss_terms(pred, y, cfg).total;
}

// Mean of per-utterance losses.
inline double batch_loss(std::span<const Prediction> preds, std::span<const Labels> labels, const LossConfig& cfg) {
  if (preds.empty() || preds.size() != labels.size()) throw ArgumentError("batch sizes do not match");
  double sum = 0.0;
  for (std::size_t n = 0; n < preds.size(); ++n) sum += compute_loss(preds[n], labels[n], cfg);
  return sum / static_cast<double>(preds.size());
}

// d(loss)/d(frame score) for each task. The utterance score is the frame
// mean, so the utterance term spreads evenly across frames.
struct FrameGradients {
  std::vector<double> quality;
  std::vector<double> intelligibility;
};

inline FrameGradients loss_gradient(const Prediction& pred, const Labels& y, const LossConfig& cfg,
                                    double scale = 1.0) {
  const double f = static_cast<double>(pred.frame_count);
  auto task = [f, scale](double label, double utterance, const std::vector<double>& frames, double alpha,
                         double gamma) {
    std::vector<double> g(frames.size());
    const double utt_term = 2.0 * (utterance - label) / f;
    for (std::size_t l = 0; l < frames.size(); ++l) {
      g[l] = scale * gamma * (utt_term + 2.0 * alpha / f * (frames[l] - label));
    }
    return g;
  };
  return {task(y.quality, pred.utterance_quality, pred.frame_quality, cfg.alpha_quality, cfg.gamma_quality),
          task(y.intelligibility, pred.utterance_intelligibility, pred.frame_intelligibility,
               cfg.alpha_intelligibility, cfg.gamma_intelligibility)};
}

// Loss of one utterance; accumulates scale * d(loss)/d(weights) into grads.
template <typename S>
double loss_and_gradient(const FeatureBundle& bundle, const Labels& y, const ModelWeights<S>& w,
                         const LossConfig& cfg, ModelWeights<S>* grads, double scale = 1.0) {
  ForwardTape<S> tape;
  const Prediction pred = forward(bundle, w, &tape);
  const double loss = compute_loss(pred, y, cfg);
  const FrameGradients g = loss_gradient(pred, y, cfg, scale);
  backward(tape, w, g.quality, g.intelligibility, grads);
  return loss;
}

}  // namespace mosanet
