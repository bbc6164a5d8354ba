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

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include "mosanet/error.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

template <typename S>
using RowMatrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class WindowShape { kHamming };

struct StftConfig {
  int fft_size = 512;
  double window_ms = 32.0;
  double hop_ms = 16.0;
  WindowShape window = WindowShape::kHamming;

  int window_samples(int sample_rate) const {
    return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
  }
  int hop_samples(int sample_rate) const {
    return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
  }
  int num_bins() const { return fft_size / 2 + 1; }

  void validate(int sample_rate) const {
    if (fft_size < 2) throw ConfigError("stft.fft_size must be at least 2");
    if (window_samples(sample_rate) < 1) throw ConfigError("stft.window_ms gives an empty window");
    if (fft_size < window_samples(sample_rate)) {
      throw ConfigError("stft.fft_size must be >= the window length in samples");
    }
    if (hop_samples(sample_rate) <= 0) throw ConfigError("stft.hop_ms must be positive");
  }

  std::uint64_t hash() const {
    return Fnv1a().add(std::string_view("stft")).add(fft_size).add(window_ms).add(hop_ms)
        .add(static_cast<int>(window)).digest();
  }
};

// 1 + floor((n - window) / hop) for n >= window, else 0.
inline int num_frames(std::size_t n_samples, int window, int hop) {
  if (n_samples < static_cast<std::size_t>(window)) return 0;
  return 1 + static_cast<int>((n_samples - window) / hop);
}

// Periodic Hamming window.
inline std::vector<double> hamming_window(int length) {
  std::vector<double> w(length);
  for (int i = 0; i < length; ++i) {
    w[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / length);
  }
  return w;
}

// Squared-magnitude STFT, one row per frame, fft_size/2+1 columns.
// Frames start at multiples of the hop; no padding at either end.
inline RowMatrix<float> compute_power_spectrogram(std::span<const float> waveform, int sample_rate,
                                                  const StftConfig& cfg) {
  cfg.validate(sample_rate);
  const int win = cfg.window_samples(sample_rate);
  const int hop = cfg.hop_samples(sample_rate);
  if (waveform.size() < static_cast<std::size_t>(win)) {
    throw InputTooShortError("waveform has " + std::to_string(waveform.size()) +
                             " samples, shorter than one " + std::to_string(win) + "-sample window");
  }
  const int frames = num_frames(waveform.size(), win, hop);
  const int bins = cfg.num_bins();
  const auto window = hamming_window(win);

  RowMatrix<float> out(frames, bins);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(cfg.fft_size, 0.0);
  std::vector<std::complex<double>> spectrum;
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * hop;
    for (int i = 0; i < win; ++i) frame[i] = waveform[start + i] * window[i];
    fft.fwd(spectrum, frame);
    for (int f = 0; f < bins; ++f) out(t, f) = static_cast<float>(std::norm(spectrum[f]));
  }
  return out;
}

}  // namespace mosanet
