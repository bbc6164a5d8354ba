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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "mosanet/archive.hpp"
#include "mosanet/audio.hpp"
#include "mosanet/data.hpp"
#include "mosanet/encoder.hpp"
#include "mosanet/stft.hpp"

namespace mosanet {

// The non-trainable model inputs of one utterance: power spectrogram, frozen
// encoder embedding, and the waveform for the learnable filter bank.
struct FeatureBundle {
  std::string utterance_id;
  RowMatrix<float> ps;  // T1 x (fft_size/2+1), power
  RowMatrix<float> ws;  // T3 x D
  std::vector<float> waveform;
  int sample_rate = kPipelineSampleRate;
  std::string encoder_id;
  std::string layer_tag;

  bool operator==(const FeatureBundle& o) const {
    return utterance_id == o.utterance_id && ps == o.ps && ws == o.ws && waveform == o.waveform &&
           sample_rate == o.sample_rate && encoder_id == o.encoder_id && layer_tag == o.layer_tag;
  }
};

inline FeatureBundle compute_features(const std::string& utterance_id, const Waveform& wave, const StftConfig& cfg,
                                      const EncoderBackend& backend) {
  FeatureBundle b;
  b.utterance_id = utterance_id;
  b.ps = compute_power_spectrogram(wave.samples, wave.sample_rate, cfg);
  EncoderEmbedding e = extract_embedding(wave, backend);
  b.ws = std::move(e.values);
  b.encoder_id = std::move(e.encoder_id);
  b.layer_tag = std::move(e.layer_tag);
  b.waveform = wave.samples;
  b.sample_rate = wave.sample_rate;
  return b;
}

// Per-utterance on-disk cache of FeatureBundles. Entries are keyed by the
// STFT config, the encoder identity and layer, the encoder parameter
// fingerprint and the utterance/audio identity; writes are atomic.
class FeatureCache {
 public:
  struct Stats {
    std::size_t hits = 0;
    std::size_t misses = 0;
    std::size_t recomputed = 0;  // corrupt or stale entries replaced
  };

  FeatureCache(std::filesystem::path dir, StftConfig cfg, const EncoderBackend& backend)
      : dir_(std::move(dir)), cfg_(cfg), backend_(backend) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec || !std::filesystem::is_directory(dir_)) {
      throw IoError("cache directory " + dir_.string() + " is not writable");
    }
  }

  std::uint64_t key(const UtteranceRecord& r) const {
    return Fnv1a()
        .add(cfg_.hash())
        .add(backend_.encoder_id())
        .add(backend_.layer_tag())
        .add(backend_.fingerprint())
        .add(r.utterance_id)
        .add(std::filesystem::absolute(r.audio_path).lexically_normal().string())
        .digest();
  }

  std::filesystem::path entry_path(const UtteranceRecord& r) const {
    std::string name;
    for (char c : r.utterance_id) name += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return dir_ / (name + "-" + to_hex(key(r)) + ".mfb");
  }

  FeatureBundle get(const UtteranceRecord& r) {
    const auto path = entry_path(r);
    if (std::filesystem::exists(path)) {
      try {
        FeatureBundle b = read_entry(path, r);
        ++stats_.hits;
        return b;
      } catch (const Error& e) {
        spdlog::warn("feature cache entry {} unusable ({}); recomputing", path.string(), e.what());
        ++stats_.recomputed;
      }
    } else {
      ++stats_.misses;
    }
    FeatureBundle b = compute_features(r.utterance_id, load_audio(r.audio_path), cfg_, backend_);
    write_entry(path, r, b);
    // Hand back exactly what a later cache hit would return.
    return read_entry(path, r);
  }

  const Stats& stats() const { return stats_; }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  nlohmann::json expected_metadata(const UtteranceRecord& r) const {
    return {{"cfg_hash", to_hex(cfg_.hash())},
            {"encoder_id", backend_.encoder_id()},
            {"layer_tag", backend_.layer_tag()},
            {"encoder_fingerprint", to_hex(backend_.fingerprint())},
            {"utterance_id", r.utterance_id},
            {"tool_version", kVersion}};
  }

  void write_entry(const std::filesystem::path& path, const UtteranceRecord& r, const FeatureBundle& b) const {
    Archive ar;
    ar.metadata = expected_metadata(r);
    ar.metadata["sample_rate"] = b.sample_rate;
    ar.put<float>("ps", {static_cast<std::size_t>(b.ps.rows()), static_cast<std::size_t>(b.ps.cols())},
                  {b.ps.data(), static_cast<std::size_t>(b.ps.size())});
    ar.put<float>("ws", {static_cast<std::size_t>(b.ws.rows()), static_cast<std::size_t>(b.ws.cols())},
                  {b.ws.data(), static_cast<std::size_t>(b.ws.size())});
    ar.put<float>("waveform", {b.waveform.size()}, b.waveform);
    ar.save(path);
  }

  FeatureBundle read_entry(const std::filesystem::path& path, const UtteranceRecord& r) const {
    const Archive ar = Archive::load(path);
    const nlohmann::json expected = expected_metadata(r);
    for (const auto& [k, v] : expected.items()) {
      if (!ar.metadata.contains(k) || ar.metadata.at(k) != v) {
        throw ParseError("metadata field '" + k + "' does not match");
      }
    }
    auto matrix = [&ar](const std::string& name) {
      const NamedArray& a = ar.array(name);
      if (a.shape.size() != 2) throw ParseError("array '" + name + "' is not 2-D");
      RowMatrix<float> m(a.shape[0], a.shape[1]);
      const auto v = ar.values<float>(name);
      std::copy(v.begin(), v.end(), m.data());
      return m;
    };
    FeatureBundle b;
    b.utterance_id = r.utterance_id;
    b.ps = matrix("ps");
    b.ws = matrix("ws");
    b.waveform = ar.values<float>("waveform");
    b.sample_rate = ar.metadata.value("sample_rate", kPipelineSampleRate);
    b.encoder_id = backend_.encoder_id();
    b.layer_tag = backend_.layer_tag();
    if (b.ps.cols() != cfg_.num_bins() || b.ws.cols() != backend_.dim()) {
      throw ParseError("cached array shapes do not match the configuration");
    }
    return b;
  }

  std::filesystem::path dir_;
  StftConfig cfg_;
  const EncoderBackend& backend_;
  Stats stats_;
};

inline FeatureBundle cache_features(const UtteranceRecord& record, const StftConfig& cfg,
                                    const EncoderBackend& backend, const std::filesystem::path& cache_dir) {
  FeatureCache cache(cache_dir, cfg, backend);
  return cache.get(record);
}

}  // namespace mosanet
