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

#include "test_support.hpp"

namespace mosanet {
namespace {

using testing::TempDir;

EncoderEmbedding embedding(Eigen::Index t, Eigen::Index d, Rng* rng, std::string id = "e") {
  EncoderEmbedding e;
  e.encoder_id = std::move(id);
  e.values.resize(t, d);
  for (Eigen::Index i = 0; i < e.values.size(); ++i) e.values.data()[i] = static_cast<float>(rng->normal());
  return e;
}

TEST(DistanceTest, IdenticalIsZeroAndOnesVersusZerosIsOne) {
  Rng rng(1);
  const auto a = embedding(5, 7, &rng);
  EXPECT_EQ(embedding_distance(a, a), 0.0);
  EncoderEmbedding z = a, o = a;
  z.values.setZero();
  o.values.setOnes();
  EXPECT_EQ(embedding_distance(z, o), 1.0);
}

TEST(DistanceTest, EqualsFlatMseAndScalesQuadratically) {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = static_cast<Eigen::Index>(1 + rng.below(40)), d = static_cast<Eigen::Index>(1 + rng.below(64));
    const auto a = embedding(t, d, &rng), b = embedding(t, d, &rng);
    std::vector<double> fa(a.values.data(), a.values.data() + a.values.size());
    std::vector<double> fb(b.values.data(), b.values.data() + b.values.size());
    const double dist = embedding_distance(a, b);
    ASSERT_NEAR(dist, testing::oracle::mse(fa, fb), 1e-12);
    ASSERT_NEAR(dist, mse(fa, fb), 1e-12);
    ASSERT_EQ(dist, embedding_distance(b, a));
    EncoderEmbedding a2 = a, b2 = b;
    a2.values *= 2.0f;
    b2.values *= 2.0f;
    ASSERT_NEAR(embedding_distance(a2, b2), 4.0 * dist, 1e-12 * std::max(1.0, dist));
  }
}

TEST(DistanceTest, ShapeMismatchNamesBothShapes) {
  Rng rng(3);
  try {
    embedding_distance(embedding(10, 4, &rng), embedding(12, 4, &rng));
    FAIL() << "expected AlignmentError";
  } catch (const AlignmentError& e) {
    EXPECT_NE(std::string(e.what()).find("10x4"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("12x4"), std::string::npos) << e.what();
  }
  EXPECT_THROW(embedding_distance(embedding(3, 4, &rng, "a"), embedding(3, 4, &rng, "b")), ArgumentError);
}

std::vector<DistanceRecord> records_for(const std::vector<std::string>& encoders,
                                        const std::vector<std::vector<double>>& values) {
  std::vector<DistanceRecord> out;
  for (std::size_t e = 0; e < encoders.size(); ++e) {
    for (std::size_t u = 0; u < values[e].size(); ++u) out.push_back({"u" + std::to_string(u), encoders[e], values[e][u]});
  }
  return out;
}

TEST(CorrelationTest, SymmetricWithUnitDiagonal) {
  Rng rng(4);
  std::vector<std::vector<double>> v(4, std::vector<double>(30));
  for (auto& row : v) {
    for (auto& x : row) x = rng.uniform(0, 1);
  }
  for (auto kind : {CorrelationKind::kPearson, CorrelationKind::kSpearman}) {
    const auto m = distance_correlations(records_for({"a", "b", "c", "d"}, v), kind);
    ASSERT_EQ(m.values.rows(), 4);
    for (int i = 0; i < 4; ++i) {
      EXPECT_EQ(m.values(i, i), 1.0);
      for (int j = 0; j < 4; ++j) EXPECT_EQ(m.values(i, j), m.values(j, i));
    }
    const double expected = kind == CorrelationKind::kPearson ? testing::oracle::pearson(v[0], v[2])
                                                              : testing::oracle::spearman(v[0], v[2]);
    EXPECT_NEAR(m.values(0, 2), expected, 1e-12);
  }
}

TEST(CorrelationTest, ScaledDistancesCorrelatePerfectly) {
  const std::vector<double> base = {0.1, 0.5, 0.2, 0.9, 0.35};
  std::vector<double> twice(base);
  for (auto& x : twice) x *= 2;
  for (auto kind : {CorrelationKind::kPearson, CorrelationKind::kSpearman}) {
    const auto m = distance_correlations(records_for({"a", "b"}, {base, twice}), kind);
    EXPECT_NEAR(m.values(0, 1), 1.0, 1e-12);
  }
}

TEST(CorrelationTest, GapsAreListed) {
  auto recs = records_for({"a", "b"}, {{0.1, 0.2, 0.3}, {0.3, 0.1, 0.2}});
  recs.erase(recs.begin() + 4);  // b/u1
  try {
    distance_correlations(recs, CorrelationKind::kPearson);
    FAIL() << "expected CompletenessError";
  } catch (const CompletenessError& e) {
    EXPECT_NE(std::string(e.what()).find("u1"), std::string::npos) << e.what();
  }
  recs.push_back(recs.front());
  EXPECT_THROW(distance_correlations(recs, CorrelationKind::kPearson), ValidationError);
}

TEST(CorrelationTest, ConstantDistancesAreRefused) {
  EXPECT_THROW(distance_correlations(records_for({"a", "b"}, {{0.1, 0.2, 0.3}, {0.5, 0.5, 0.5}}),
                                     CorrelationKind::kSpearman),
               UndefinedCorrelationError);
  EXPECT_THROW(parse_correlation_kind("kendall"), ConfigError);
}

class RunAnalysisTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() { spdlog::set_level(spdlog::level::err); }

  RunAnalysisTest() {
    SyntheticOptions so;
    so.count = 8;
    so.min_seconds = 0.3;
    so.max_seconds = 0.6;
    so.degraded_pairs = true;
    manifest_ = write_synthetic_corpus(corpus_.path(), so);
  }

  std::vector<std::string> files_in(const std::filesystem::path& dir) const {
    std::vector<std::string> out;
    if (!std::filesystem::exists(dir)) return out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) out.push_back(e.path().filename().string());
    return out;
  }

  TempDir corpus_;
  TempDir out_;
  Manifest manifest_;
};

TEST_F(RunAnalysisTest, ScaledCopiesCorrelatePerfectly) {
  StubBackendOptions a = testing::stub_options(16, 7, "base"), b = a;
  b.encoder_id = "scaled";
  b.scale = 2.0;
  const StubBackend sa(a), sb(b), sc(testing::stub_options(24, 9, "other"));
  const std::vector<const EncoderBackend*> backends = {&sa, &sb, &sc};
  const auto res = run_analysis(manifest_, backends, out_.path(), {CorrelationKind::kPearson});
  EXPECT_EQ(res.distances.size(), 3u * 8u);
  EXPECT_NEAR(res.correlations.values(0, 1), 1.0, 1e-12);
  EXPECT_LT(res.correlations.values(0, 2), 1.0 - 1e-9);
  for (Eigen::Index i = 0; i < 3; ++i) EXPECT_EQ(res.correlations.values(i, i), 1.0);

  for (const char* f : {kDistancesFile, kCorrelationsFile, kHeatmapFile, kSkippedFile}) {
    EXPECT_TRUE(std::filesystem::exists(out_ / f)) << f;
  }
  const std::string png = read_file(out_ / kHeatmapFile);
  EXPECT_EQ(png.substr(0, 8), std::string("\x89PNG\r\n\x1a\n", 8));
  const std::string dist = read_file(out_ / kDistancesFile);
  EXPECT_EQ(dist.substr(0, dist.find('\n')), "utterance_id,encoder_id,distance");
  EXPECT_EQ(std::count(dist.begin(), dist.end(), '\n'), 1 + 24);
}

TEST_F(RunAnalysisTest, UnresolvedPairsAreSkippedAndListed) {
  manifest_.records[1].pair_id = "nobody";
  const StubBackend sa(testing::stub_options(16, 1, "a")), sb(testing::stub_options(16, 2, "b"));
  const std::vector<const EncoderBackend*> backends = {&sa, &sb};
  const auto res = run_analysis(manifest_, backends, out_.path());
  ASSERT_EQ(res.skipped.size(), 1u);
  EXPECT_EQ(res.skipped[0].utterance_id, manifest_.records[1].utterance_id);
  EXPECT_EQ(res.distances.size(), 2u * 7u);
  const std::string skipped = read_file(out_ / kSkippedFile);
  EXPECT_NE(skipped.find("nobody"), std::string::npos);
}

TEST_F(RunAnalysisTest, NoPairsWritesNothing) {
  for (auto& r : manifest_.records) r.pair_id.reset();
  const StubBackend sa(testing::stub_options(16));
  const std::vector<const EncoderBackend*> backends = {&sa};
  EXPECT_THROW(run_analysis(manifest_, backends, out_ / "run"), ValidationError);
  EXPECT_TRUE(files_in(out_ / "run").empty());
}

TEST_F(RunAnalysisTest, IdenticalCopiesAreRefusedAndWriteNothing) {
  for (auto& r : manifest_.records) {
    if (r.pair_id) r.audio_path = manifest_.find(*r.pair_id)->audio_path;
  }
  const StubBackend sa(testing::stub_options(16, 1, "a")), sb(testing::stub_options(16, 2, "b"));
  const std::vector<const EncoderBackend*> backends = {&sa, &sb};
  EXPECT_THROW(run_analysis(manifest_, backends, out_ / "run"), UndefinedCorrelationError);
  EXPECT_TRUE(files_in(out_ / "run").empty());
}

TEST_F(RunAnalysisTest, DuplicateEncoderIdsAreAConfigError) {
  const StubBackend sa(testing::stub_options(16, 1, "same")), sb(testing::stub_options(16, 2, "same"));
  const std::vector<const EncoderBackend*> backends = {&sa, &sb};
  EXPECT_THROW(analyze_pairs(manifest_, backends), ConfigError);
}

TEST(HeatmapTest, PngDimensions) {
  TempDir dir;
  Eigen::MatrixXd m(3, 3);
  m << 1, 0.5, -0.2, 0.5, 1, 0.1, -0.2, 0.1, 1;
  const RgbImage img = render_heatmap(m, 10);
  EXPECT_EQ(img.width, 31);  // grid lines on both edges
  EXPECT_EQ(img.height, 31);
  write_png(dir / "h.png", img);
  const std::string bytes = read_file(dir / "h.png");
  ASSERT_GT(bytes.size(), 24u);
  auto be32 = [&](std::size_t off) {
    return (static_cast<unsigned char>(bytes[off]) << 24) | (static_cast<unsigned char>(bytes[off + 1]) << 16) |
           (static_cast<unsigned char>(bytes[off + 2]) << 8) | static_cast<unsigned char>(bytes[off + 3]);
  };
  EXPECT_EQ(be32(16), 31u);
  EXPECT_EQ(be32(20), 31u);
}

}  // namespace
}  // namespace mosanet
