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

#include <gtest/gtest.h>

#include <cstring>

#include "test_support.hpp"

namespace mosanet {
namespace {

using testing::TempDir;

TEST(StftTest, ZeroWaveformGivesZeroMatrix) {
  const std::vector<float> zeros(16000, 0.0f);
  const auto ps = compute_power_spectrogram(zeros, kPipelineSampleRate, StftConfig{});
  EXPECT_EQ(ps.rows(), 61);
  EXPECT_EQ(ps.cols(), 257);
  EXPECT_TRUE((ps.array() == 0.0f).all());
}

TEST(StftTest, FrameCount) {
  EXPECT_EQ(num_frames(16000, 512, 256), 61);
  EXPECT_EQ(num_frames(511, 512, 256), 0);
  EXPECT_EQ(num_frames(512, 512, 256), 1);
  EXPECT_EQ(num_frames(767, 512, 256), 1);
  EXPECT_EQ(num_frames(768, 512, 256), 2);
  const auto ps = compute_power_spectrogram(std::vector<float>(16000, 0.1f), kPipelineSampleRate, StftConfig{});
  EXPECT_EQ(ps.rows(), 61);
}

TEST(StftTest, OneKilohertzPeaksAtBin32) {
  const Waveform w = testing::sine(1000.0, 1.0);
  const auto ps = compute_power_spectrogram(w.samples, w.sample_rate, StftConfig{});
  for (Eigen::Index t = 0; t < ps.rows(); ++t) {
    Eigen::Index arg;
    ps.row(t).maxCoeff(&arg);
    EXPECT_EQ(arg, 32) << "frame " << t;
  }
  // Direct DFT of the first windowed frame, computed offline in double.
  EXPECT_NEAR(ps(0, 32), 19110.2976, 19110.2976 * 1e-5);
  EXPECT_NEAR(ps(0, 31), 3466.8544, 3466.8544 * 1e-4);
}

TEST(StftTest, NonNegative) {
  Rng rng(3);
  std::vector<float> x(9000);
  for (auto& v : x) v = static_cast<float>(rng.normal());
  const auto ps = compute_power_spectrogram(x, kPipelineSampleRate, StftConfig{});
  EXPECT_TRUE((ps.array() >= 0.0f).all());
}

TEST(StftTest, TooShortIsAnError) {
  EXPECT_THROW(compute_power_spectrogram(std::vector<float>(511, 0.0f), kPipelineSampleRate, StftConfig{}),
               InputTooShortError);
}

TEST(StftTest, InvalidConfigIsAnError) {
  StftConfig c;
  c.fft_size = 256;  // shorter than the 512-sample window
  EXPECT_THROW(c.validate(kPipelineSampleRate), ConfigError);
  c = StftConfig{};
  c.hop_ms = 0;
  EXPECT_THROW(c.validate(kPipelineSampleRate), ConfigError);
}

// A unit sine whose period divides the hop gives identical frames, so the
// per-frame energy is constant.
TEST(StftTest, SteadyStateEnergyIsConstant) {
  const Waveform w = testing::sine(1000.0, 1.0);
  const auto ps = compute_power_spectrogram(w.samples, w.sample_rate, StftConfig{});
  const double e0 = ps.row(0).cast<double>().sum();
  for (Eigen::Index t = 1; t < ps.rows(); ++t) {
    EXPECT_NEAR(ps.row(t).cast<double>().sum(), e0, 1e-6 * e0) << "frame " << t;
  }
}

TEST(StftTest, OneHopDelayShiftsOneFrame) {
  Rng rng(17);
  std::vector<float> x(8000);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1, 1));
  std::vector<float> delayed(256, 0.0f);
  delayed.insert(delayed.end(), x.begin(), x.end());
  const auto a = compute_power_spectrogram(x, kPipelineSampleRate, StftConfig{});
  const auto b = compute_power_spectrogram(delayed, kPipelineSampleRate, StftConfig{});
  ASSERT_EQ(b.rows(), a.rows() + 1);
  const float scale = a.maxCoeff();
  for (Eigen::Index t = 0; t < a.rows(); ++t) {
    EXPECT_LE((a.row(t) - b.row(t + 1)).cwiseAbs().maxCoeff(), 1e-6f * scale) << "frame " << t;
  }
}

TEST(EncoderTest, EmbeddingIsDeterministic) {
  const StubBackend be(testing::stub_options(16));
  const Waveform w = testing::sine(220.0, 0.77, 0.3);
  const auto a = extract_embedding(w, be);
  const auto b = extract_embedding(w, be);
  ASSERT_EQ(a.values.size(), b.values.size());
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), sizeof(float) * a.values.size()), 0);
  EXPECT_EQ(a.encoder_id, "stub");
  EXPECT_EQ(a.layer_tag, "final");
  // A second backend with the same options is the same frozen encoder.
  const StubBackend again(testing::stub_options(16));
  EXPECT_EQ(again.fingerprint(), be.fingerprint());
  EXPECT_EQ(extract_embedding(w, again).values, a.values);
}

TEST(EncoderTest, StubFramesAt20Milliseconds) {
  const StubBackend be(testing::stub_options(8));
  for (std::size_t n : {1, 319, 320, 321, 16000, 16001, 23456}) {
    Waveform w;
    w.samples.assign(n, 0.25f);
    const auto e = extract_embedding(w, be);
    EXPECT_EQ(e.frames(), static_cast<Eigen::Index>((n + 319) / 320)) << n << " samples";
    EXPECT_EQ(e.dim(), 8);
  }
}

TEST(EncoderTest, WrongSampleRateIsAnArgumentError) {
  const StubBackend be(testing::stub_options(8));
  EXPECT_THROW(extract_embedding(testing::sine(100, 0.1, 1.0, 8000), be), ArgumentError);
}

TEST(EncoderTest, EmbeddingDoesNotChangeParameters) {
  const StubBackend be(testing::stub_options(8));
  const std::vector<float> before(be.parameters().begin(), be.parameters().end());
  for (int i = 0; i < 3; ++i) extract_embedding(testing::sine(300.0 * (i + 1), 0.5), be);
  EXPECT_TRUE(std::equal(before.begin(), before.end(), be.parameters().begin()));
}

void write_npy(const std::filesystem::path& path, const RowMatrix<float>& m) {
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + std::to_string(m.rows()) + ", " +
                       std::to_string(m.cols()) + "), }";
  while ((10 + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::string out("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.append(reinterpret_cast<const char*>(&len), 2);
  out += header;
  out.append(reinterpret_cast<const char*>(m.data()), sizeof(float) * m.size());
  write_file_atomic(path, out);
}

TEST(EncoderTest, PrecomputedBackendReadsNpy) {
  TempDir dir;
  RowMatrix<float> m(3, 4);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = 0.5f * static_cast<float>(i);
  std::filesystem::create_directories(dir / "emb");
  write_npy(dir / "emb" / "utt1.npy", m);
  write_wav(dir / "utt1.wav", std::vector<float>(1600, 0.0f), kPipelineSampleRate);
  write_wav(dir / "utt2.wav", std::vector<float>(1600, 0.0f), kPipelineSampleRate);

  EncoderSpec spec;
  spec.type = "precomputed";
  spec.encoder_id = "whisper";
  spec.weights_path = (dir / "emb").string();
  spec.dim = 4;
  const auto be = make_backend(spec);
  const auto e = extract_embedding(load_audio(dir / "utt1.wav"), *be);
  EXPECT_EQ(e.values, m);
  EXPECT_THROW(extract_embedding(load_audio(dir / "utt2.wav"), *be), BackendError);

  spec.dim = 5;
  EXPECT_THROW(extract_embedding(load_audio(dir / "utt1.wav"), *make_backend(spec)), BackendError);
  spec.weights_path = (dir / "absent").string();
  EXPECT_THROW(make_backend(spec), BackendError);
  spec.type = "whisper-live";
  EXPECT_THROW(make_backend(spec), ConfigError);
}

class CacheTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const Waveform w = testing::sine(500.0, 0.6, 0.4);
    write_wav(dir_ / "a.wav", w.samples, w.sample_rate);
    record_.utterance_id = "utt/a";
    record_.audio_path = dir_ / "a.wav";
    record_.quality = 3;
    record_.intelligibility = 0.5;
  }

  TempDir dir_;
  UtteranceRecord record_;
};

TEST_F(CacheTest, WarmCallIsAHitWithoutBackendCalls) {
  const StubBackend be(testing::stub_options(12));
  FeatureCache cache(dir_ / "cache", StftConfig{}, be);
  const FeatureBundle cold = cache.get(record_);
  EXPECT_EQ(be.invocation_count(), 1u);
  const FeatureBundle warm = cache.get(record_);
  EXPECT_EQ(be.invocation_count(), 1u);
  EXPECT_EQ(cold, warm);
  EXPECT_EQ(cache.stats().misses, 1u);
  EXPECT_EQ(cache.stats().hits, 1u);
  EXPECT_EQ(warm.ps.rows(), num_frames(9600, 512, 256));
  EXPECT_EQ(warm.ws.rows(), 30);
  EXPECT_EQ(warm.waveform.size(), 9600u);

  // A new cache object over the same directory also hits.
  FeatureCache other(dir_ / "cache", StftConfig{}, be);
  EXPECT_EQ(other.get(record_), cold);
  EXPECT_EQ(be.invocation_count(), 1u);
}

TEST_F(CacheTest, KeyDependsOnLayerStftAndEncoder) {
  const StubBackend be(testing::stub_options(12));
  FeatureCache cache(dir_ / "cache", StftConfig{}, be);
  cache.get(record_);

  StubBackendOptions o = testing::stub_options(12);
  o.layer_tag = "layer6";
  const StubBackend layer6(o);
  FeatureCache c2(dir_ / "cache", StftConfig{}, layer6);
  c2.get(record_);
  EXPECT_EQ(c2.stats().misses, 1u);
  EXPECT_EQ(layer6.invocation_count(), 1u);

  StftConfig stft;
  stft.hop_ms = 10;
  FeatureCache c3(dir_ / "cache", stft, be);
  EXPECT_NE(c3.entry_path(record_), cache.entry_path(record_));

  const StubBackend reseeded(testing::stub_options(12, 2));
  FeatureCache c4(dir_ / "cache", StftConfig{}, reseeded);
  EXPECT_NE(c4.entry_path(record_), cache.entry_path(record_));
}

TEST_F(CacheTest, DeletedEntryIsRecomputed) {
  const StubBackend be(testing::stub_options(12));
  FeatureCache cache(dir_ / "cache", StftConfig{}, be);
  const FeatureBundle first = cache.get(record_);
  std::filesystem::remove(cache.entry_path(record_));
  EXPECT_EQ(cache.get(record_), first);
  EXPECT_EQ(be.invocation_count(), 2u);
  EXPECT_TRUE(std::filesystem::exists(cache.entry_path(record_)));
}

TEST_F(CacheTest, CorruptEntryIsRecomputedAndOverwritten) {
  const StubBackend be(testing::stub_options(12));
  FeatureCache cache(dir_ / "cache", StftConfig{}, be);
  const FeatureBundle first = cache.get(record_);
  const auto path = cache.entry_path(record_);
  std::string bytes = read_file(path);
  bytes[bytes.size() - 5] ^= 0x5a;
  write_file_atomic(path, bytes);
  EXPECT_EQ(cache.get(record_), first);
  EXPECT_EQ(cache.stats().recomputed, 1u);
  EXPECT_EQ(cache.get(record_), first);
  EXPECT_EQ(cache.stats().hits, 1u);
}

TEST_F(CacheTest, UnwritableDirectoryIsAnError) {
  write_file_atomic(dir_ / "file", "x");
  const StubBackend be(testing::stub_options(12));
  EXPECT_THROW(FeatureCache(dir_ / "file" / "cache", StftConfig{}, be), IoError);
}

TEST_F(CacheTest, FreeFunctionMatchesComputeFeatures) {
  const StubBackend be(testing::stub_options(12));
  const FeatureBundle cached = cache_features(record_, StftConfig{}, be, dir_ / "cache");
  const FeatureBundle direct = compute_features(record_.utterance_id, load_audio(record_.audio_path), StftConfig{}, be);
  EXPECT_EQ(cached, direct);
}

}  // namespace
}  // namespace mosanet
