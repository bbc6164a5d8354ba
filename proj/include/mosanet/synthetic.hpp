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

// Seeded synthetic corpus: tone mixtures in noise with random labels. Used by
// the tests, the overfit probe and CLI smoke runs.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "mosanet/audio.hpp"
#include "mosanet/data.hpp"
#include "mosanet/loss.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

struct SyntheticOptions {
  int count = 50;
  double min_seconds = 0.5;
  double max_seconds = 2.0;
  std::uint64_t seed = 2024;
  bool degraded_pairs = false;  // also emit <id>-deg, a noisier copy with pair_id = <id>
};

struct SyntheticUtterance {
  std::string utterance_id;
  std::string system_id;
  Waveform wave;
  Labels labels;
};

inline std::vector<float> synth_signal(Rng& rng, double seconds) {
  const auto n = static_cast<std::size_t>(seconds * kPipelineSampleRate);
  std::vector<float> x(n, 0.0f);
  const int tones = 1 + static_cast<int>(rng.below(3));
  std::vector<std::array<double, 3>> params;  // freq, amplitude, phase
  for (int i = 0; i < tones; ++i) {
    params.push_back({rng.uniform(100.0, 6000.0), rng.uniform(0.05, 0.4), rng.uniform(0.0, 2 * std::numbers::pi)});
  }
  const double noise = rng.uniform(0.002, 0.15);
  const double am_rate = rng.uniform(0.0, 8.0);
  const double am_depth = rng.uniform(0.0, 0.8);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kPipelineSampleRate;
    double v = 0.0;
    for (const auto& p : params) v += p[1] * std::sin(2 * std::numbers::pi * p[0] * t + p[2]);
    v *= 1.0 - am_depth * 0.5 * (1.0 + std::sin(2 * std::numbers::pi * am_rate * t));
    v += noise * rng.normal();
    x[i] = static_cast<float>(std::clamp(v, -1.0, 1.0));
  }
  return x;
}

inline std::vector<SyntheticUtterance> make_synthetic_corpus(const SyntheticOptions& opts) {
  static constexpr std::array<const char*, 5> kSystems = {"clean", "noisy", "FCN", "MMSE", "Transformer"};
  Rng rng(opts.seed);
  std::vector<SyntheticUtterance> out;
  for (int i = 0; i < opts.count; ++i) {
    SyntheticUtterance u;
    char id[32];
    std::snprintf(id, sizeof(id), "syn%03d", i);
    u.utterance_id = id;
    u.system_id = kSystems[static_cast<std::size_t>(i) % kSystems.size()];
    const double seconds = rng.uniform(opts.min_seconds, opts.max_seconds);
    u.wave.samples = synth_signal(rng, seconds);
    u.wave.sample_rate = kPipelineSampleRate;
    u.labels.quality = rng.uniform(kQualityMin, kQualityMax);
    u.labels.intelligibility = rng.uniform(kIntelligibilityMin, kIntelligibilityMax);
    out.push_back(std::move(u));
  }
  return out;
}

// Writes <dir>/wav/<id>.wav and <dir>/manifest.csv; returns the manifest.
inline Manifest write_synthetic_corpus(const std::filesystem::path& dir, const SyntheticOptions& opts) {
  Manifest m;
  Rng noise_rng(opts.seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& u : make_synthetic_corpus(opts)) {
    const auto wav = dir / "wav" / (u.utterance_id + ".wav");
    write_wav(wav, u.wave.samples, u.wave.sample_rate);
    UtteranceRecord r;
    r.utterance_id = u.utterance_id;
    r.audio_path = std::filesystem::absolute(wav);
    r.quality = u.labels.quality;
    r.intelligibility = u.labels.intelligibility;
    r.system_id = u.system_id;
    if (opts.degraded_pairs) {
      UtteranceRecord d = r;
      d.utterance_id = u.utterance_id + "-deg";
      const auto dwav = dir / "wav" / (d.utterance_id + ".wav");
      const double level = noise_rng.uniform(0.05, 0.3);
      std::vector<float> x = u.wave.samples;
      for (auto& v : x) v = static_cast<float>(std::clamp(v + level * noise_rng.normal(), -1.0, 1.0));
      write_wav(dwav, x, u.wave.sample_rate);
      d.audio_path = std::filesystem::absolute(dwav);
      d.quality = std::max(kQualityMin, r.quality - 4.0 * level);
      d.intelligibility = std::max(kIntelligibilityMin, r.intelligibility - level);
      d.system_id = "degraded";
      d.pair_id = r.utterance_id;
      m.records.push_back(std::move(r));
      m.records.push_back(std::move(d));
      continue;
    }
    m.records.push_back(std::move(r));
  }
  save_manifest(m, dir / "manifest.csv");
  return m;
}

}  // namespace mosanet
