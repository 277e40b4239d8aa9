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

#include "pe_audio/pe.hpp"

#include <cmath>
#include <random>
#include <vector>

#include "gtest/gtest.h"
#include "oracle.hpp"
#include "test_support.hpp"

namespace pe_audio {
namespace {

Spectrogram OneFrame(const std::vector<std::complex<double>>& x) {
  Spectrogram spec;
  spec.frames.resize(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t w = 0; w < x.size(); ++w) spec.frames(0, static_cast<Eigen::Index>(w)) = x[w];
  return spec;
}

TEST(PeTest, UnitQuantizerStepGivesOneBit) {
  const std::vector<BinRange> bands = {{0, 0}};
  const std::vector<double> thr = {2.5};
  const double step = std::sqrt(6.0 * 2.5 / 1.0);
  const std::vector<std::complex<double>> x = {{step / 2.0, 0.0}};
  EXPECT_DOUBLE_EQ(PerceptualEntropyFrame(x, bands, thr), 1.0);
}

TEST(PeTest, HandFixedThresholdsMatchDoubleLoop) {
  std::mt19937_64 rng(21);
  const std::vector<BinRange> bands = {{0, 2}, {3, 7}};
  const std::vector<double> thr = {0.7, 12.0};
  for (int trial = 0; trial < 20; ++trial) {
    const auto x = testing::RandomSpectrum(rng, 8, -2.0, 2.0);
    double want = 0.0;
    for (int i = 0; i < 2; ++i) {
      const int k = static_cast<int>(bands[i].count());
      for (int w = static_cast<int>(bands[i].lo); w <= static_cast<int>(bands[i].hi); ++w) {
        const double s = std::sqrt(6.0 * thr[i] / k);
        want += std::log2(1.0 + 2.0 * std::fabs(x[w].real()) / s) +
                std::log2(1.0 + 2.0 * std::fabs(x[w].imag()) / s);
      }
    }
    EXPECT_NEAR(PerceptualEntropyFrame(x, bands, thr), want, 1e-12 * want);
  }
  EXPECT_THROW(PerceptualEntropyFrame(testing::RandomSpectrum(rng, 8), bands,
                                      std::vector<double>{0.0, 1.0}),
               Error);
}

TEST(PeTest, FullPipelineMatchesNaiveOracle) {
  std::mt19937_64 rng(4);
  const StftConfig cfg;
  for (int trial = 0; trial < 60; ++trial) {
    const int bins = 4 + trial % 13;
    const int split = 1 + trial % (bins - 1);
    const MaskingModel model(BarkBandLayout::FromBinRanges(
        {{0, static_cast<std::size_t>(split - 1)},
         {static_cast<std::size_t>(split), static_cast<std::size_t>(bins - 1)}},
        cfg));
    const auto x = testing::RandomSpectrum(rng, bins);
    const double want = testing::NaiveFramePe(x, {{0, split - 1}, {split, bins - 1}},
                                              cfg.bin_hz(), testing::NaiveHannFullScale(1024));
    const double got = PerceptualEntropy(OneFrame(x), model).mean_pe;
    EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, want));
  }
}

TEST(PeTest, SilenceHasZeroEntropy) {
  const Spectrogram spec = Stft(testing::Silence(0.3), StftConfig{});
  const PEResult r = PerceptualEntropy(spec, MaskingModel(MakeBarkLayout(spec.config)));
  ASSERT_EQ(r.per_frame.size(), spec.num_frames());
  for (double v : r.per_frame) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(r.loss_pe, 1.0);
}

TEST(PeTest, EntropyIsNonNegativeAndLossInUnitInterval) {
  const Spectrogram spec = Stft(testing::VoicedSignal(300.0, 0.5, 3), StftConfig{});
  const PEResult r = PerceptualEntropy(spec, MaskingModel(MakeBarkLayout(spec.config)));
  for (double v : r.per_frame) EXPECT_GE(v, 0.0);
  EXPECT_GT(r.mean_pe, 0.0);
  EXPECT_GT(r.loss_pe, 0.0);
  EXPECT_LE(r.loss_pe, 1.0);
  EXPECT_DOUBLE_EQ(r.loss_pe, 1.0 / (1.0 + r.mean_pe));
}

TEST(PeTest, ShapeMismatchIsRejected) {
  StftConfig small;
  small.fft_size = 512;
  small.hop = 256;
  const Spectrogram spec = Stft(testing::Silence(0.1), small);
  EXPECT_THROW(PerceptualEntropy(spec, MaskingModel(MakeBarkLayout(StftConfig{}))), Error);
}

TEST(LossTest, PeLossValues) {
  EXPECT_EQ(PeLoss(0.0), 1.0);
  EXPECT_EQ(PeLoss(1.0), 0.5);
  EXPECT_DOUBLE_EQ(PeLoss(99.0), 0.01);
}

TEST(LossTest, SingLoss) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  RealMatrix a(4, 6), b(4, 6), ma(4, 3), mb(4, 3);
  for (auto* m : {&a, &b, &ma, &mb}) {
    for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = n(rng);
  }
  EXPECT_EQ(SingLoss(a, a, {ma}, {ma}), 0.0);
  const RealMatrix a1 = a.array() + 1.0;
  const RealMatrix ma1 = ma.array() + 1.0;
  EXPECT_NEAR(SingLoss(a1, a, {ma1}, {ma}), 2.0, 1e-12);

  double want = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) want += std::fabs(a.data()[i] - b.data()[i]) / 24.0;
  for (Eigen::Index i = 0; i < ma.size(); ++i) want += std::fabs(ma.data()[i] - mb.data()[i]) / 12.0;
  EXPECT_NEAR(SingLoss(a, b, {ma}, {mb}), want, 1e-12);

  LossConfig mel_only;
  mel_only.include_linear_l1 = false;
  EXPECT_NEAR(SingLoss(a1, a, {ma1}, {ma}, mel_only), 1.0, 1e-12);
  EXPECT_THROW(SingLoss(a, RealMatrix(4, 5), {ma}, {mb}), Error);
}

TEST(LossTest, TotalLoss) {
  PEResult pe;
  pe.loss_pe = 1.0;
  LossConfig off;
  off.lambda = 0.0;
  EXPECT_EQ(TotalLoss(0.123456789, pe, off), 0.123456789);
  LossConfig on;
  EXPECT_EQ(on.lambda, 0.01);
  EXPECT_DOUBLE_EQ(TotalLoss(0.5, pe, on), 0.51);
  on.lambda = kLambdaConformer;
  pe.loss_pe = 0.25;
  EXPECT_DOUBLE_EQ(TotalLoss(0.5, pe, on), 0.5 + 0.02 * 0.25);
  on.lambda = -1.0;
  EXPECT_THROW(on.Validate(), Error);
}

class GradientTest : public ::testing::Test {
 protected:
  void SetUp() override {
    spec_ = Stft(testing::VoicedSignal(200.0, 0.4, 5), StftConfig{});
  }
  Spectrogram spec_;
  MaskingModel model_{MakeBarkLayout(StftConfig{})};
};

TEST_F(GradientTest, ReportAgreesWithForwardPass) {
  const GradientReport g = PeGradient(spec_, model_);
  const PEResult r = PerceptualEntropy(spec_, model_);
  ASSERT_EQ(g.per_frame_pe.size(), r.per_frame.size());
  for (std::size_t t = 0; t < r.per_frame.size(); ++t) {
    EXPECT_NEAR(g.per_frame_pe[t], r.per_frame[t], 1e-9 * r.per_frame[t]);
  }
  EXPECT_NEAR(g.loss_pe, r.loss_pe, 1e-12);
}

TEST_F(GradientTest, MatchesFiniteDifferences) {
  const GradientReport g = PeGradient(spec_, model_);
  const FdCheckResult check = CheckPeGradient(spec_, model_, g, 60, 11);
  EXPECT_EQ(check.coords.size(), 60u);
  EXPECT_LT(check.max_rel_err, 1e-4);
  EXPECT_FALSE(check.all_kink);
}

TEST_F(GradientTest, RadialDerivativeVanishesAboveThreshold) {
  const BarkAnalysis a = Analyze(spec_, model_);
  for (std::size_t t = 0; t < a.num_frames(); ++t) {
    for (std::size_t i = 0; i < model_.n(); ++i) ASSERT_FALSE(a.ClampActive(t, i));
  }
  const GradientReport g = PeGradient(spec_, model_);
  // d/dc L(c X) at c = 1 is <grad, X> over real and imaginary parts.
  const double radial = (g.grad.real().array() * spec_.frames.real().array() +
                         g.grad.imag().array() * spec_.frames.imag().array())
                            .sum();
  const double scale = g.grad.norm() * spec_.frames.norm();
  EXPECT_LT(std::abs(radial), 1e-9 * scale);
}

TEST(GradientEdgeTest, ZeroSpectrumHasZeroGradientAndVacuousCheck) {
  const Spectrogram spec = Stft(testing::Silence(0.2), StftConfig{});
  const MaskingModel model(MakeBarkLayout(spec.config));
  const GradientReport g = PeGradient(spec, model);
  EXPECT_EQ(g.grad.cwiseAbs().maxCoeff(), 0.0);
  const FdCheckResult check = CheckPeGradient(spec, model, g, 10, 1);
  EXPECT_TRUE(check.all_kink);
  EXPECT_TRUE(check.coords.empty());
}

TEST(GradientEdgeTest, StopGradientTreatsThresholdAsConstant) {
  std::mt19937_64 rng(30);
  const StftConfig cfg;
  const MaskingModel model(BarkBandLayout::FromBinRanges({{0, 4}, {5, 11}}, cfg));
  const auto x = testing::RandomSpectrum(rng, 12, 1.0, 3.0);
  const Spectrogram spec = OneFrame(x);
  const BarkAnalysis a = Analyze(spec, model);
  const std::vector<double> thr = {a.threshold(0, 0), a.threshold(0, 1)};

  const GradientReport g = PeGradient(spec, model, GradientOptions{false});
  const double l = g.loss_pe;
  for (std::size_t w = 0; w < 12; ++w) {
    // With T' frozen, dL/dRe = -L^2 * sign(Re) * 2 / (s ln2 (2|Re|/s + 1)).
    const std::size_t band = w < 5 ? 0 : 1;
    const double s = std::sqrt(6.0 * thr[band] / (band == 0 ? 5.0 : 7.0));
    const double re = x[w].real();
    const double want = -l * l * (re > 0 ? 1.0 : -1.0) * 2.0 / (s * std::log(2.0)) /
                        (2.0 * std::fabs(re) / s + 1.0);
    EXPECT_NEAR(g.grad(0, w).real(), want, 1e-10 * std::fabs(want));
  }
  const GradientReport full = PeGradient(spec, model);
  EXPECT_GT((full.grad - g.grad).norm(), 0.0);
}

TEST(GradientEdgeTest, MagnitudeGradientIsPhaseProjection) {
  const Spectrogram spec = Stft(testing::VoicedSignal(250.0, 0.2, 9), StftConfig{});
  const MaskingModel model(MakeBarkLayout(spec.config));
  RealMatrix dmag;
  const GradientReport g = PeGradientFromMagnitude(spec.Magnitude(), spec, model, {}, &dmag);
  const GradientReport direct = PeGradient(spec, model);
  EXPECT_NEAR(g.mean_pe, direct.mean_pe, 1e-9 * direct.mean_pe);
  const RealMatrix radial =
      (direct.grad.real().array() * spec.frames.real().array() +
       direct.grad.imag().array() * spec.frames.imag().array()) /
      spec.Magnitude().array().max(1e-300);
  EXPECT_LT((dmag - radial).cwiseAbs().maxCoeff(), 1e-9 * radial.cwiseAbs().maxCoeff());
}

}  // namespace
}  // namespace pe_audio
