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

#include <set>

#include "test_support.hpp"

namespace mosanet {
namespace {

using testing::TempDir;

std::string header() { return std::string(kManifestHeader) + "\n"; }

Manifest records(int n) {
  Manifest m;
  for (int i = 0; i < n; ++i) {
    UtteranceRecord r;
    r.utterance_id = "u" + std::to_string(i);
    r.audio_path = "/data/u" + std::to_string(i) + ".wav";
    r.quality = 1.0 + (i % 5);
    r.intelligibility = (i % 11) / 10.0;
    r.system_id = i % 2 ? "FCN" : "clean";
    m.records.push_back(r);
  }
  return m;
}

TEST(ManifestTest, TwoRowsKeepOrder) {
  const auto m = parse_manifest(header() +
                                    "b,b.wav,3.5,0.7,FCN,,\n"
                                    "a,sub/a.wav,2,0.25,clean,L1,b\n",
                                "/base");
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m.records[0].utterance_id, "b");
  EXPECT_EQ(m.records[1].utterance_id, "a");
  EXPECT_EQ(m.records[1].audio_path, std::filesystem::path("/base/sub/a.wav"));
  EXPECT_DOUBLE_EQ(m.records[0].quality, 3.5);
  EXPECT_DOUBLE_EQ(m.records[1].intelligibility, 0.25);
  EXPECT_FALSE(m.records[0].listener_id.has_value());
  EXPECT_EQ(m.records[1].listener_id.value(), "L1");
  EXPECT_EQ(m.records[1].pair_id.value(), "b");
  EXPECT_EQ(m.sample_rate, kPipelineSampleRate);
}

TEST(ManifestTest, QualityAboveRangeIsRejected) {
  try {
    parse_manifest(header() + "a,a.wav,5.5,0.5,clean,,\n", "/");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("quality out of [1,5]"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}

TEST(ManifestTest, IntelligibilityOutOfRangeNamesField) {
  try {
    parse_manifest(header() + "a,a.wav,3,1.01,clean,,\n", "/");
    FAIL() << "expected ValidationError";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("intelligibility"), std::string::npos);
  }
}

TEST(ManifestTest, BoundsAreInclusive) {
  const auto m = parse_manifest(header() + "a,a.wav,1,0,clean,,\nb,b.wav,5,1,clean,,\n", "/");
  EXPECT_EQ(m.size(), 2u);
}

TEST(ManifestTest, MalformedRowNamesRowNumber) {
  try {
    parse_manifest(header() + "a,a.wav,3,0.5,clean,,\nb,b.wav,3\n", "/");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_manifest(header() + "a,a.wav,three,0.5,clean,,\n", "/"), ParseError);
  EXPECT_THROW(parse_manifest("id,path\n", "/"), ParseError);
  EXPECT_THROW(parse_manifest(header(), "/"), ValidationError);
}

TEST(ManifestTest, DuplicateIdsAreRejected) {
  EXPECT_THROW(parse_manifest(header() + "a,a.wav,3,0.5,x,,\na,b.wav,3,0.5,x,,\n", "/"), ValidationError);
}

TEST(ManifestTest, QuotedFields) {
  const auto m = parse_manifest(header() + "\"a,1\",\"x \"\"q\"\".wav\",3,0.5,\"sys,2\",,\n", "/");
  EXPECT_EQ(m.records[0].utterance_id, "a,1");
  EXPECT_EQ(m.records[0].audio_path, std::filesystem::path("/x \"q\".wav"));
  EXPECT_EQ(m.records[0].system_id, "sys,2");
}

TEST(ManifestTest, StrictModeChecksAudioExists) {
  TempDir dir;
  write_file_atomic(dir / "m.csv", header() + "a,missing.wav,3,0.5,clean,,\n");
  EXPECT_THROW(load_manifest(dir / "m.csv", LoadMode::kStrict), IoError);
  EXPECT_NO_THROW(load_manifest(dir / "m.csv", LoadMode::kLazy));
  write_wav(dir / "missing.wav", std::vector<float>(100, 0.0f), kPipelineSampleRate);
  EXPECT_NO_THROW(load_manifest(dir / "m.csv", LoadMode::kStrict));
  EXPECT_THROW(load_manifest(dir / "nope.csv"), IoError);
}

TEST(ManifestTest, RoundTrip) {
  TempDir dir;
  Manifest m = records(7);
  m.records[2].listener_id = "L,9";
  m.records[3].pair_id = "u0";
  m.records[4].quality = 4.123456789012345;
  m.records[5].audio_path = dir / "audio" / "x.wav";
  save_manifest(m, dir / "m.csv");
  const Manifest back = load_manifest(dir / "m.csv", LoadMode::kLazy);
  EXPECT_EQ(back, m);
}

TEST(SplitTest, Deterministic) {
  const Manifest m = records(10);
  const auto a = split_manifest(m, 0.8, 7);
  const auto b = split_manifest(m, 0.8, 7);
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
  EXPECT_EQ(a.first.size(), 8u);
  EXPECT_EQ(a.second.size(), 2u);
}

TEST(SplitTest, DegenerateSplitIsAccepted) {
  const auto s = split_manifest(records(1), 0.5, 3);
  EXPECT_EQ(s.first.size(), 0u);
  EXPECT_EQ(s.second.size(), 1u);
}

TEST(SplitTest, FractionOutsideOpenIntervalIsAnError) {
  for (double f : {0.0, 1.0, -0.1, 1.5}) EXPECT_THROW(split_manifest(records(4), f, 1), ArgumentError);
}

TEST(SplitTest, IsAPartition) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.below(40));
    const double f = rng.uniform(0.01, 0.99);
    const Manifest m = records(n);
    const auto s = split_manifest(m, f, rng.below(1000));
    ASSERT_EQ(s.first.size(), static_cast<std::size_t>(std::floor(n * f)));
    std::multiset<std::string> ids;
    for (const auto* part : {&s.first, &s.second}) {
      for (const auto& r : part->records) ids.insert(r.utterance_id);
    }
    ASSERT_EQ(ids.size(), m.size());
    for (const auto& r : m.records) ASSERT_EQ(ids.count(r.utterance_id), 1u);
  }
}

TEST(SplitTest, DifferentSeedsUsuallyDiffer) {
  const Manifest m = records(30);
  EXPECT_NE(split_manifest(m, 0.5, 1).first, split_manifest(m, 0.5, 2).first);
}

TEST(AudioTest, WavRoundTripWithinQuantization) {
  TempDir dir;
  const Waveform w = testing::sine(440.0, 0.1, 0.5);
  write_wav(dir / "a.wav", w.samples, w.sample_rate);
  const Waveform back = load_audio(dir / "a.wav");
  ASSERT_EQ(back.samples.size(), w.samples.size());
  EXPECT_EQ(back.sample_rate, kPipelineSampleRate);
  for (std::size_t i = 0; i < w.samples.size(); ++i) EXPECT_NEAR(back.samples[i], w.samples[i], 1.0 / 32767);
}

TEST(AudioTest, LoadResamplesToPipelineRate) {
  TempDir dir;
  const Waveform w = testing::sine(300.0, 0.5, 0.5, 8000);
  write_wav(dir / "a.wav", w.samples, 8000);
  const Waveform back = load_audio(dir / "a.wav");
  EXPECT_EQ(back.sample_rate, kPipelineSampleRate);
  EXPECT_EQ(back.samples.size(), 2 * w.samples.size());
  // Away from the edges the tone survives the conversion.
  const Waveform ref = testing::sine(300.0, 0.5, 0.5);
  for (std::size_t i = 800; i < back.samples.size() - 800; ++i) EXPECT_NEAR(back.samples[i], ref.samples[i], 2e-2);
}

TEST(AudioTest, RejectsGarbage) {
  EXPECT_THROW(decode_wav("not a wav file at all"), IoError);
}

}  // namespace
}  // namespace mosanet
