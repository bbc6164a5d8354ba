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

// RIFF/WAVE input and output, mono downmix and resampling.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "mosanet/error.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

inline constexpr int kPipelineSampleRate = 16000;

struct Waveform {
  std::vector<float> samples;  // mono, nominally in [-1, 1]
  int sample_rate = kPipelineSampleRate;
  std::filesystem::path source;  // empty for synthetic audio

  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

namespace detail {

template <typename T>
T read_le(const unsigned char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

}  // namespace detail

// Decodes PCM (8/16/24/32-bit) or IEEE float (32/64-bit) WAV data and
// averages all channels to mono.
inline Waveform decode_wav(std::string_view bytes, const std::string& name = "<memory>") {
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t size = bytes.size();
  if (size < 12 || std::memcmp(data, "RIFF", 4) != 0 || std::memcmp(data + 8, "WAVE", 4) != 0) {
    throw IoError(name + ": not a RIFF/WAVE file");
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* pcm = nullptr;
  std::size_t pcm_bytes = 0;
  std::size_t pos = 12;
  while (pos + 8 <= size) {
    const std::uint32_t chunk_size = detail::read_le<std::uint32_t>(data + pos + 4);
    const unsigned char* body = data + pos + 8;
    const std::size_t avail = size - pos - 8;
    if (std::memcmp(data + pos, "fmt ", 4) == 0) {
      if (chunk_size < 16 || avail < 16) throw IoError(name + ": truncated fmt chunk");
      format = detail::read_le<std::uint16_t>(body);
      channels = detail::read_le<std::uint16_t>(body + 2);
      rate = detail::read_le<std::uint32_t>(body + 4);
      bits = detail::read_le<std::uint16_t>(body + 14);
      if (format == 0xFFFE && chunk_size >= 26 && avail >= 26) {
        format = detail::read_le<std::uint16_t>(body + 24);  // WAVE_FORMAT_EXTENSIBLE subformat
      }
    } else if (std::memcmp(data + pos, "data", 4) == 0) {
      pcm = body;
      pcm_bytes = std::min<std::size_t>(chunk_size, avail);
    }
    pos += 8 + chunk_size + (chunk_size & 1);
  }
  if (channels == 0 || rate == 0) throw IoError(name + ": missing fmt chunk");
  if (pcm == nullptr) throw IoError(name + ": missing data chunk");
  const bool is_float = format == 3;
  if (!(format == 1 || is_float)) throw IoError(name + ": unsupported WAV encoding " + std::to_string(format));
  if (is_float ? (bits != 32 && bits != 64) : (bits != 8 && bits != 16 && bits != 24 && bits != 32)) {
    throw IoError(name + ": unsupported bit depth " + std::to_string(bits));
  }
  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = pcm_bytes / frame_bytes;

  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* p = pcm + i * frame_bytes + c * bytes_per_sample;
      double v = 0.0;
      if (is_float) {
        v = bits == 32 ? detail::read_le<float>(p) : detail::read_le<double>(p);
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = detail::read_le<std::int16_t>(p) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = p[0] | (p[1] << 8) | (p[2] << 16);
        if (s & 0x800000) s |= ~0xFFFFFF;
        v = s / 8388608.0;
      } else {
        v = detail::read_le<std::int32_t>(p) / 2147483648.0;
      }
      acc += v;
    }
    w.samples[i] = static_cast<float>(acc / channels);
  }
  return w;
}

// 16-bit PCM mono WAV; samples are clipped to [-1, 1].
inline std::string encode_wav_pcm16(const std::vector<float>& samples, int sample_rate) {
  std::string out;
  auto put32 = [&out](std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); };
  auto put16 = [&out](std::uint16_t v) { out.append(reinterpret_cast<const char*>(&v), 2); };
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  out += "RIFF";
  put32(36 + data_bytes);
  out += "WAVEfmt ";
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(sample_rate));
  put32(static_cast<std::uint32_t>(sample_rate) * 2);
  put16(2);
  put16(16);
  out += "data";
  put32(data_bytes);
  for (float s : samples) {
    const double c = std::clamp(static_cast<double>(s), -1.0, 1.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(c * 32767.0))));
  }
  return out;
}

inline void write_wav(const std::filesystem::path& path, const std::vector<float>& samples, int sample_rate) {
  write_file_atomic(path, encode_wav_pcm16(samples, sample_rate));
}

// Band-limited resampling with a Hann-windowed sinc kernel.
inline std::vector<float> resample(const std::vector<float>& in, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw ArgumentError("sample rates must be positive");
  if (from_rate == to_rate || in.empty()) return in;
  constexpr int kZeroCrossings = 16;
  const double ratio = static_cast<double>(to_rate) / from_rate;
  const double cutoff = std::min(1.0, ratio) * 0.97;  // relative to input Nyquist
  const double half_width = kZeroCrossings / cutoff;  // in input samples
  const auto n_out = static_cast<std::size_t>(std::floor(in.size() * ratio));
  std::vector<float> out(n_out);
  const auto n_in = static_cast<long long>(in.size());
  for (std::size_t j = 0; j < n_out; ++j) {
    const double t = j / ratio;
    const auto lo = static_cast<long long>(std::ceil(t - half_width));
    const auto hi = static_cast<long long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long long i = std::max(lo, 0LL); i <= std::min(hi, n_in - 1); ++i) {
      const double x = i - t;
      const double arg = std::numbers::pi * cutoff * x;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double window = 0.5 + 0.5 * std::cos(std::numbers::pi * x / half_width);
      acc += in[static_cast<std::size_t>(i)] * cutoff * sinc * window;
    }
    out[j] = static_cast<float>(acc);
  }
  return out;
}

// Reads a WAV file as 16 kHz mono.
inline Waveform load_audio(const std::filesystem::path& path) {
  Waveform w = decode_wav(read_file(path), path.string());
  if (w.sample_rate != kPipelineSampleRate) {
    w.samples = resample(w.samples, w.sample_rate, kPipelineSampleRate);
    w.sample_rate = kPipelineSampleRate;
  }
  w.source = path;
  return w;
}

}  // namespace mosanet
