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

#include "pe_audio/toy_fit.hpp"

#include <cmath>

#include "gtest/gtest.h"
#include "test_support.hpp"

namespace pe_audio {
namespace {

Spectrogram Target() { return Stft(testing::VoicedSignal(220.0, 0.3, 7), StftConfig{}); }

TEST(ToyFitTest, OneStepMovesByLearningRateTimesGradient) {
  const Spectrogram target = Target();
  FitOptions opt;
  opt.steps = 1;
  const FitRecord r = ToyFit(target, opt);
  ASSERT_EQ(r.curve.size(), 2u);
  const FitObjective objective(target, opt.loss, opt.n_mels, opt.normalize_l1);
  const auto ev = objective.Evaluate(r.initial);
  const RealMatrix expected = r.initial - opt.learning_rate * ev.grad;
  EXPECT_EQ(r.final_magnitude, expected);
  EXPECT_EQ(r.curve[0].total, ev.point.total);
}

TEST(ToyFitTest, ZeroLambdaNeverStepsOnEntropy) {
  const Spectrogram target = Target();
  FitOptions opt;
  opt.steps = 5;
  opt.loss.lambda = 0.0;
  const FitRecord r = ToyFit(target, opt);
  // The PE curve is still recorded.
  for (const auto& p : r.curve) {
    EXPECT_GT(p.mean_pe, 0.0);
    EXPECT_EQ(p.total, p.l_sing);
  }
  // Replaying with the L1 gradient alone gives the same iterate bit for bit.
  LossConfig l1 = opt.loss;
  const FitObjective objective(target, l1, opt.n_mels, opt.normalize_l1);
  RealMatrix m = r.initial;
  for (std::size_t s = 0; s < opt.steps; ++s) m -= opt.learning_rate * objective.Evaluate(m).grad;
  EXPECT_EQ(m, r.final_magnitude);
}

TEST(ToyFitTest, MelGradientMatchesFiniteDifference) {
  const Spectrogram target = Target();
  LossConfig loss;
  loss.lambda = 0.0;
  loss.include_linear_l1 = false;
  const FitObjective objective(target, loss, 80);
  const RealMatrix m = InitialMagnitude(target.Magnitude(), 0.5, 3);
  const auto ev = objective.Evaluate(m);
  for (auto [t, k] : {std::pair{1, 40}, std::pair{3, 200}, std::pair{5, 7}}) {
    RealMatrix p = m, q = m;
    const double h = 1e-6 * m(t, k);
    p(t, k) += h;
    q(t, k) -= h;
    const double fd =
        (objective.Evaluate(p).point.l_sing - objective.Evaluate(q).point.l_sing) / (2 * h);
    EXPECT_NEAR(ev.grad(t, k), fd, 1e-5 * std::abs(fd) + 1e-15);
  }
}

TEST(ToyFitTest, DeterministicForSeedAndReducesLoss) {
  const Spectrogram target = Target();
  FitOptions opt;
  opt.steps = 30;
  const FitRecord a = ToyFit(target, opt);
  const FitRecord b = ToyFit(target, opt);
  EXPECT_EQ(a.final_magnitude, b.final_magnitude);
  EXPECT_LT(a.final_point().l_sing, a.curve.front().l_sing);
  opt.seed = 43;
  EXPECT_NE(ToyFit(target, opt).initial, a.initial);
}

TEST(ToyFitTest, InvalidOptions) {
  const Spectrogram target = Target();
  FitOptions opt;
  opt.steps = 0;
  EXPECT_THROW(ToyFit(target, opt), Error);
  opt.steps = 1;
  opt.learning_rate = 0.0;
  EXPECT_THROW(ToyFit(target, opt), Error);
}

TEST(ToyFitTest, DivergenceIsReported) {
  const Spectrogram target = Target();
  FitOptions opt;
  opt.steps = 200;
  opt.learning_rate = 1e300;
  try {
    ToyFit(target, opt);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDivergence);
    EXPECT_GT(e.step(), 0u);
  }
}

}  // namespace
}  // namespace pe_audio
