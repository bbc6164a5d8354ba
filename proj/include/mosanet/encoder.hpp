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

// Frozen pretrained speech encoders. A backend maps a 16 kHz waveform to a
// T x D embedding matrix (feature extractor followed by encoder stack) and
// never changes its parameters once constructed.
//
// Two backends ship here:
//   StubBackend        - deterministic framing + fixed random projection,
//                        used by the tests and for pipeline smoke runs.
//   PrecomputedBackend - reads embeddings exported offline by a real encoder
//                        (one .npy file per audio file, keyed by file stem).

#pragma once

#include <atomic>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>
#include <regex>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mosanet/audio.hpp"
#include "mosanet/error.hpp"
#include "mosanet/stft.hpp"
#include "mosanet/util.hpp"

namespace mosanet {

struct EncoderEmbedding {
  RowMatrix<float> values;  // frames x dim
  std::string encoder_id;
  std::string layer_tag;

  Eigen::Index frames() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

class EncoderBackend {
 public:
  virtual ~EncoderBackend() = default;

  virtual const std::string& encoder_id() const = 0;
  virtual const std::string& layer_tag() const = 0;
  virtual int dim() const = 0;
  virtual int sample_rate() const { return kPipelineSampleRate; }
  // Identifies the frozen parameter state; changes invalidate caches.
  virtual std::uint64_t fingerprint() const = 0;

  EncoderEmbedding embed(const Waveform& w) const {
    if (w.sample_rate != sample_rate()) {
      throw ArgumentError("encoder '" + encoder_id() + "' expects " + std::to_string(sample_rate()) +
                          " Hz audio, got " + std::to_string(w.sample_rate) + " Hz");
    }
    calls_.fetch_add(1, std::memory_order_relaxed);
    EncoderEmbedding e{compute(w), encoder_id(), layer_tag()};
    if (e.dim() != dim()) {
      throw BackendError("encoder '" + encoder_id() + "' produced dim " + std::to_string(e.dim()) +
                         ", expected " + std::to_string(dim()));
    }
    return e;
  }

  // Number of embed() calls so far.
  std::size_t invocation_count() const { return calls_.load(std::memory_order_relaxed); }

 protected:
  virtual RowMatrix<float> compute(const Waveform& w) const = 0;

 private:
  mutable std::atomic<std::size_t> calls_{0};
};

struct StubBackendOptions {
  std::string encoder_id = "stub";
  std::string layer_tag = "final";
  int dim = 64;
  double frame_ms = 20.0;
  std::uint64_t seed = 1;
  double scale = 1.0;
};

class StubBackend final : public EncoderBackend {
 public:
  explicit StubBackend(StubBackendOptions opts = {}) : opts_(std::move(opts)) {
    if (opts_.dim <= 0) throw ConfigError("stub encoder dim must be positive");
    frame_len_ = static_cast<int>(std::lround(opts_.frame_ms * kPipelineSampleRate / 1000.0));
    if (frame_len_ <= 0) throw ConfigError("stub encoder frame_ms must be positive");
    projection_.resize(frame_len_, opts_.dim);
    Rng rng(opts_.seed);
    const double s = opts_.scale / std::sqrt(static_cast<double>(frame_len_));
    for (Eigen::Index i = 0; i < projection_.size(); ++i) {
      projection_.data()[i] = static_cast<float>(rng.normal() * s);
    }
  }

  const std::string& encoder_id() const override { return opts_.encoder_id; }
  const std::string& layer_tag() const override { return opts_.layer_tag; }
  int dim() const override { return opts_.dim; }
  int frame_length() const { return frame_len_; }

  std::span<const float> parameters() const {
    return {projection_.data(), static_cast<std::size_t>(projection_.size())};
  }

  std::uint64_t fingerprint() const override {
    return Fnv1a()
        .add(std::string_view("stub-v1"))
        .add(opts_.frame_ms)
        .add(projection_.data(), sizeof(float) * projection_.size())
        .digest();
  }

 protected:
  // ceil(n / frame_len) frames; the last frame is zero padded.
  RowMatrix<float> compute(const Waveform& w) const override {
    const std::size_t n = w.samples.size();
    const Eigen::Index frames = static_cast<Eigen::Index>((n + frame_len_ - 1) / frame_len_);
    RowMatrix<float> framed = RowMatrix<float>::Zero(frames, frame_len_);
    std::memcpy(framed.data(), w.samples.data(), n * sizeof(float));
    return framed * projection_;
  }

 private:
  StubBackendOptions opts_;
  int frame_len_ = 0;
  RowMatrix<float> projection_;
};

// Minimal reader for 2-D little-endian float32/float64 C-order .npy files.
inline RowMatrix<float> read_npy_matrix(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 10 || std::memcmp(bytes.data(), "\x93NUMPY", 6) != 0) {
    throw BackendError(path.string() + ": not an .npy file");
  }
  const int major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
    offset = 10;
  } else {
    if (bytes.size() < 12) throw BackendError(path.string() + ": truncated .npy header");
    std::uint32_t len;
    std::memcpy(&len, bytes.data() + 8, 4);
    header_len = len;
    offset = 12;
  }
  if (offset + header_len > bytes.size()) throw BackendError(path.string() + ": truncated .npy header");
  const std::string header = bytes.substr(offset, header_len);
  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([<|=]?)(f4|f8)')"))) {
    throw BackendError(path.string() + ": .npy dtype must be float32 or float64");
  }
  const bool f64 = m[2] == "f8";
  if (std::regex_search(header, std::regex(R"('fortran_order'\s*:\s*True)"))) {
    throw BackendError(path.string() + ": Fortran-ordered .npy is not supported");
  }
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(\s*(\d+)\s*,\s*(\d+)\s*,?\s*\))"))) {
    throw BackendError(path.string() + ": .npy array must be 2-D");
  }
  const auto rows = std::stoll(m[1]);
  const auto cols = std::stoll(m[2]);
  const std::size_t elem = f64 ? 8 : 4;
  const std::size_t data_off = offset + header_len;
  if (bytes.size() - data_off < static_cast<std::size_t>(rows * cols) * elem) {
    throw BackendError(path.string() + ": .npy data truncated");
  }
  RowMatrix<float> out(rows, cols);
  for (Eigen::Index i = 0; i < rows * cols; ++i) {
    if (f64) {
      double v;
      std::memcpy(&v, bytes.data() + data_off + i * 8, 8);
      out.data()[i] = static_cast<float>(v);
    } else {
      std::memcpy(out.data() + i, bytes.data() + data_off + i * 4, 4);
    }
  }
  return out;
}

class PrecomputedBackend final : public EncoderBackend {
 public:
  PrecomputedBackend(std::string encoder_id, std::string layer_tag, std::filesystem::path dir, int dim)
      : encoder_id_(std::move(encoder_id)), layer_tag_(std::move(layer_tag)), dir_(std::move(dir)), dim_(dim) {
    if (!std::filesystem::is_directory(dir_)) {
      throw BackendError("encoder '" + encoder_id_ + "' unavailable: embedding directory " + dir_.string() +
                         " does not exist");
    }
    if (dim_ <= 0) throw ConfigError("encoder '" + encoder_id_ + "': dim must be set for precomputed embeddings");
  }

  const std::string& encoder_id() const override { return encoder_id_; }
  const std::string& layer_tag() const override { return layer_tag_; }
  int dim() const override { return dim_; }
  std::uint64_t fingerprint() const override {
    return Fnv1a().add(std::string_view("precomputed-v1")).add(dir_.string()).add(layer_tag_).digest();
  }

 protected:
  RowMatrix<float> compute(const Waveform& w) const override {
    if (w.source.empty()) {
      throw BackendError("encoder '" + encoder_id_ + "' needs the source file name to find its embedding");
    }
    const auto path = dir_ / (w.source.stem().string() + ".npy");
    if (!std::filesystem::exists(path)) {
      throw BackendError("encoder '" + encoder_id_ + "': no embedding at " + path.string());
    }
    return read_npy_matrix(path);
  }

 private:
  std::string encoder_id_;
  std::string layer_tag_;
  std::filesystem::path dir_;
  int dim_;
};

struct EncoderSpec {
  std::string type = "stub";  // stub | precomputed
  std::string encoder_id = "stub";
  std::string layer_tag = "final";
  std::string weights_path;  // embedding directory for precomputed
  int dim = 64;
  std::uint64_t seed = 1;
  double scale = 1.0;
  double frame_ms = 20.0;
};

inline std::unique_ptr<EncoderBackend> make_backend(const EncoderSpec& spec) {
  if (spec.type == "stub") {
    return std::make_unique<StubBackend>(
        StubBackendOptions{spec.encoder_id, spec.layer_tag, spec.dim, spec.frame_ms, spec.seed, spec.scale});
  }
  if (spec.type == "precomputed") {
    return std::make_unique<PrecomputedBackend>(spec.encoder_id, spec.layer_tag, spec.weights_path, spec.dim);
  }
  throw ConfigError("unknown encoder type '" + spec.type + "' (expected stub or precomputed)");
}

inline EncoderEmbedding extract_embedding(const Waveform& w, const EncoderBackend& backend) {
  return backend.embed(w);
}

}  // namespace mosanet
