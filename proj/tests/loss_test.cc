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

#include <numeric>

#include "test_support.hpp"

namespace mosanet {
namespace {

Prediction make_prediction(std::vector<double> q, std::vector<double> i) {
  Prediction p;
  p.frame_count = q.size();
  p.utterance_quality = std::accumulate(q.begin(), q.end(), 0.0) / static_cast<double>(q.size());
  p.utterance_intelligibility = std::accumulate(i.begin(), i.end(), 0.0) / static_cast<double>(i.size());
  p.frame_quality = std::move(q);
  p.frame_intelligibility = std::move(i);
  return p;
}

Prediction random_prediction(Rng& rng, std::size_t frames) {
  std::vector<double> q(frames), i(frames);
  for (auto& v : q) v = rng.uniform(0.0, 6.0);
  for (auto& v : i) v = rng.uniform(-0.5, 1.5);
  return make_prediction(q, i);
}

TEST(LossTest, WorkedExample) {
  // Frames 2 and 4 average to the label; only the frame term survives.
  const Prediction p = make_prediction({2.0, 4.0}, {0.5, 0.5});
  LossConfig cfg;
  cfg.alpha_quality = 1.0;
  const LossTerms t = compute_loss_terms(p, {3.0, 0.5}, cfg);
  EXPECT_DOUBLE_EQ(t.quality, 1.0);
  EXPECT_DOUBLE_EQ(t.intelligibility, 0.0);
  EXPECT_DOUBLE_EQ(t.total, 1.0);
}

TEST(LossTest, PerfectPredictionIsZero) {
  const Prediction p = make_prediction({3.5, 3.5, 3.5}, {0.25, 0.25, 0.25});
  EXPECT_EQ(compute_loss(p, {3.5, 0.25}, LossConfig{}), 0.0);
}

TEST(LossTest, ZeroIntelligibilityWeightIgnoresThatHead) {
  Rng rng(3);
  LossConfig cfg;
  cfg.gamma_intelligibility = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    Prediction a = random_prediction(rng, 7);
    Prediction b = a;
    for (auto& v : b.frame_intelligibility) v = rng.uniform(-3, 3);
    b.utterance_intelligibility = rng.uniform(-3, 3);
    EXPECT_EQ(compute_loss(a, {2.0, 0.5}, cfg), compute_loss(b, {2.0, 0.5}, cfg));
  }
}

TEST(LossTest, DecompositionAndWeightScaling) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const Prediction p = random_prediction(rng, 1 + rng.below(30));
    const Labels y{rng.uniform(1, 5), rng.uniform(0, 1)};
    LossConfig cfg;
    cfg.gamma_quality = rng.uniform(0, 3);
    cfg.gamma_intelligibility = rng.uniform(0, 3);
    cfg.alpha_quality = rng.uniform(0, 3);
    cfg.alpha_intelligibility = rng.uniform(0, 3);
    const LossTerms t = compute_loss_terms(p, y, cfg);
    ASSERT_NEAR(t.total, cfg.gamma_quality * t.quality + cfg.gamma_intelligibility * t.intelligibility, 1e-10);

    // Terms match a direct evaluation.
    double fq = 0.0;
    for (double v : p.frame_quality) fq += (y.quality - v) * (y.quality - v);
    const double q = std::pow(y.quality - p.utterance_quality, 2) +
                     cfg.alpha_quality * fq / static_cast<double>(p.frame_count);
    ASSERT_NEAR(t.quality, q, 1e-10);

    LossConfig doubled = cfg;
    doubled.gamma_quality *= 2;
    const LossTerms d = compute_loss_terms(p, y, doubled);
    ASSERT_NEAR(d.total - t.total, cfg.gamma_quality * t.quality, 1e-9);
  }
}

TEST(LossTest, BatchLossIsMean) {
  Rng rng(9);
  std::vector<Prediction> preds;
  std::vector<Labels> labels;
  double sum = 0.0;
  for (int n = 0; n < 5; ++n) {
    preds.push_back(random_prediction(rng, 4));
    labels.push_back({rng.uniform(1, 5), rng.uniform(0, 1)});
    sum += compute_loss(preds.back(), labels.back(), LossConfig{});
  }
  EXPECT_NEAR(batch_loss(preds, labels, LossConfig{}), sum / 5, 1e-12);
  EXPECT_THROW(batch_loss({}, {}, LossConfig{}), ArgumentError);
}

TEST(LossTest, InvalidInputs) {
  EXPECT_THROW(compute_loss(make_prediction({3}, {0.5}), {6.0, 0.5}, LossConfig{}), ValidationError);
  EXPECT_THROW(compute_loss(Prediction{}, {3.0, 0.5}, LossConfig{}), ArgumentError);
  LossConfig bad;
  bad.alpha_quality = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(LossTest, FrameGradientMatchesFiniteDifferences) {
  Rng rng(21);
  LossConfig cfg;
  cfg.alpha_quality = 0.6;
  cfg.gamma_quality = 1.4;
  cfg.alpha_intelligibility = 2.0;
  cfg.gamma_intelligibility = 0.3;
  const Labels y{2.5, 0.8};
  const Prediction p = random_prediction(rng, 6);
  const FrameGradients g = loss_gradient(p, y, cfg, 0.5);
  const double h = 1e-6;
  for (std::size_t task = 0; task < 2; ++task) {
    for (std::size_t l = 0; l < 6; ++l) {
      auto bumped = [&](double d) {
        std::vector<double> q = p.frame_quality, i = p.frame_intelligibility;
        (task == 0 ? q : i)[l] += d;
        return compute_loss(make_prediction(q, i), y, cfg);
      };
      const double fd = 0.5 * (bumped(h) - bumped(-h)) / (2 * h);
      EXPECT_NEAR((task == 0 ? g.quality : g.intelligibility)[l], fd, 1e-7);
    }
  }
}

class GradientCheckTest : public ::testing::TestWithParam<AttentionType> {};

TEST_P(GradientCheckTest, BackpropMatchesCentralDifferences) {
  const testing::GradientCheckResult r = testing::gradient_check(GetParam());
  EXPECT_GE(r.checked, 32);
  EXPECT_GE(r.sinc_checked, 2);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_parameter;
}

INSTANTIATE_TEST_SUITE_P(Attention, GradientCheckTest,
                         ::testing::Values(AttentionType::kDot, AttentionType::kAdditive),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(GradientTest, ScaleAccumulates) {
  const StubBackend be(testing::stub_options(8));
  const auto w = init_weights<double>(testing::tiny_topology(8), 1);
  const FeatureBundle b = compute_features("u", testing::sine(300, 0.4, 0.3), StftConfig{}, be);
  auto once = w.zeros_like(), twice = w.zeros_like(), half = w.zeros_like();
  const Labels y{2.0, 0.3};
  loss_and_gradient(b, y, w, LossConfig{}, &once);
  loss_and_gradient(b, y, w, LossConfig{}, &twice);
  loss_and_gradient(b, y, w, LossConfig{}, &twice);
  loss_and_gradient(b, y, w, LossConfig{}, &half, 0.5);
  EXPECT_TRUE(twice.shared.weight.isApprox(2 * once.shared.weight, 1e-12));
  EXPECT_TRUE(half.heads[1].out.weight.isApprox(0.5 * once.heads[1].out.weight, 1e-12));
}

}  // namespace
}  // namespace mosanet
