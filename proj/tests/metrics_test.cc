// Copyright 2026 The pe-audio Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pe_audio/metrics.hpp"

#include <cmath>
#include <random>

#include "gtest/gtest.h"
#include "test_support.hpp"

namespace pe_audio {
namespace {

F0Track Track(std::vector<double> f0) {
  F0Track t;
  for (double v : f0) t.voiced.push_back(v > 0.0);
  t.f0 = std::move(f0);
  return t;
}

TEST(McdTest, ClosedForms) {
  RealMatrix c = RealMatrix::Random(10, 25);
  EXPECT_EQ(Mcd(c, c), 0.0);
  RealMatrix d = c;
  d.col(5).array() += 1.0;
  EXPECT_NEAR(Mcd(c, d), 10.0 / std::log(10.0) * std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(Mcd(c, d), 6.1421, 1e-3);
  // c0 (energy) is excluded.
  RealMatrix e = c;
  e.col(0).array() += 5.0;
  EXPECT_EQ(Mcd(c, e), 0.0);
  EXPECT_THROW(Mcd(c, RealMatrix::Zero(10, 24)), Error);
}

TEST(F0MetricsTest, IdenticalAndShifted) {
  const F0Track a = Track({0, 200, 210, 220, 0, 230, 240});
  const F0Metrics same = ComputeF0Metrics(a, a);
  EXPECT_EQ(*same.f0_rmse_hz, 0.0);
  EXPECT_EQ(same.vuv_error_pct, 0.0);
  EXPECT_NEAR(*same.f0_corr, 1.0, 1e-12);
  EXPECT_EQ(same.co_voiced, 5u);

  F0Track b = a;
  for (auto& v : b.f0) v = v > 0 ? v + 1.0 : 0.0;
  const F0Metrics shifted = ComputeF0Metrics(a, b);
  EXPECT_NEAR(*shifted.f0_rmse_hz, 1.0, 1e-12);
  EXPECT_NEAR(*shifted.f0_corr, 1.0, 1e-12);
}

TEST(F0MetricsTest, VoicingDisagreementAndUndefinedCases) {
  const F0Track a = Track({100, 100, 0, 0});
  const F0Track b = Track({0, 100, 100, 0});
  const F0Metrics m = ComputeF0Metrics(a, b);
  EXPECT_DOUBLE_EQ(m.vuv_error_pct, 50.0);
  EXPECT_EQ(m.co_voiced, 1u);
  EXPECT_EQ(*m.f0_rmse_hz, 0.0);
  EXPECT_FALSE(m.f0_corr.has_value());

  const F0Metrics none = ComputeF0Metrics(Track({0, 0}), Track({0, 0}));
  EXPECT_FALSE(none.f0_rmse_hz.has_value());
  EXPECT_FALSE(none.f0_corr.has_value());
  EXPECT_EQ(none.vuv_error_pct, 0.0);

  EXPECT_THROW(ComputeF0Metrics(Track({1}), Track({1, 2})), Error);
}

TEST(ExtractF0Test, SinesAcrossRange) {
  for (double hz : {82.0, 110.0, 220.0, 440.0, 880.0}) {
    const F0Track t = ExtractF0(testing::Sine(hz, 0.5, 0.6), 0.01);
    std::size_t voiced = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (!t.voiced[i]) continue;
      ++voiced;
      EXPECT_NEAR(t.f0[i], hz, 0.01 * hz) << hz;
    }
    EXPECT_GT(voiced, t.size() * 9 / 10) << hz;
  }
}

TEST(ExtractF0Test, HarmonicSignalAvoidsOctaveErrors) {
  const F0Track t = ExtractF0(testing::VoicedSignal(150.0, 0.6, 2), 0.01);
  std::size_t voiced = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!t.voiced[i]) continue;
    ++voiced;
    EXPECT_NEAR(t.f0[i], 150.0, 6.0);
  }
  EXPECT_GT(voiced, t.size() / 2);
}

TEST(ExtractF0Test, NoiseAndSilenceAreUnvoiced) {
  const F0Track silence = ExtractF0(testing::Silence(0.3), 0.01);
  for (bool v : silence.voiced) EXPECT_FALSE(v);
  const F0Track noise = ExtractF0(testing::WhiteNoise(0.5, 0.5, 3), 0.01);
  std::size_t voiced = 0;
  for (bool v : noise.voiced) voiced += v;
  EXPECT_LT(voiced, noise.size() / 10 + 1);
  EXPECT_THROW(ExtractF0(testing::Sine(100, 0.5, 0.3, 4000), 0.01), Error);
}

TEST(CompareTest, SelfComparisonIsPerfect) {
  const AudioBuffer x = testing::VoicedSignal(200.0, 1.0, 4);
  const MetricReport r = CompareBuffers(x, x);
  EXPECT_EQ(r.mcd_db, 0.0);
  EXPECT_EQ(r.vuv_error_pct, 0.0);
  ASSERT_TRUE(r.f0_rmse_hz.has_value());
  EXPECT_EQ(*r.f0_rmse_hz, 0.0);
  EXPECT_EQ(r.frames_compared, FrameCount(x.size(), 1024, 661));
  EXPECT_TRUE(r.warnings.empty());
}

TEST(CompareTest, ResamplesAndWarnsOnLengthMismatch) {
  const AudioBuffer ref = testing::VoicedSignal(200.0, 1.0, 4);
  const AudioBuffer pred = testing::VoicedSignal(200.0, 0.5, 4, 44100);
  const MetricReport r = CompareBuffers(ref, pred);
  EXPECT_EQ(r.frames_compared, FrameCount(11025, 1024, 661));
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("MismatchWarning"), std::string::npos);
  EXPECT_GT(r.mcd_db, 0.0);
}

TEST(CompareTest, DetuningRaisesF0Error) {
  const AudioBuffer ref = testing::VoicedSignal(200.0, 1.0, 4);
  const AudioBuffer pred = testing::VoicedSignal(210.0, 1.0, 4);
  const MetricReport r = CompareBuffers(ref, pred);
  ASSERT_TRUE(r.f0_rmse_hz.has_value());
  EXPECT_NEAR(*r.f0_rmse_hz, 10.0, 3.0);
}

}  // namespace
}  // namespace pe_audio
