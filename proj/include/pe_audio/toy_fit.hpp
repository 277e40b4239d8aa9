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

// Desk-scale demonstration of PE regularization: a free magnitude
// spectrogram is fitted to a target by plain gradient descent on
// L1(linear) + L1(mel) + lambda * L_pe, with the target's phase attached for
// the PE term.

#ifndef PE_AUDIO_TOY_FIT_HPP_
#define PE_AUDIO_TOY_FIT_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "pe_audio/error.hpp"
#include "pe_audio/pe.hpp"
#include "pe_audio/psychoacoustic.hpp"
#include "pe_audio/spectral.hpp"

namespace pe_audio {

struct FitOptions {
  LossConfig loss;
  std::size_t steps = 200;
  double learning_rate = 1e4;
  std::uint64_t seed = 42;
  std::size_t n_mels = kDefaultMelBins;
  // Initial magnitudes are uniform in [0, init_scale * max target magnitude).
  double init_scale = 1e-3;
  // Divide each L1 pair by the mean of its reference (global mean
  // normalization), so both terms are O(1) regardless of signal level.
  bool normalize_l1 = true;
};

struct FitPoint {
  double l_sing = 0.0;
  double l_pe = 1.0;
  double mean_pe = 0.0;
  double total = 0.0;
};

struct FitRecord {
  double lambda = 0.0;
  // curve[s] is the objective after s updates; curve.size() == steps + 1.
  std::vector<FitPoint> curve;
  RealMatrix initial;
  RealMatrix final_magnitude;

  const FitPoint& final_point() const { return curve.back(); }
};

// Loss and gradient of the fitting objective with respect to the free
// magnitude variable.
class FitObjective {
 public:
  FitObjective(const Spectrogram& target, const LossConfig& loss, std::size_t n_mels,
               bool normalize_l1 = true)
      : target_(target),
        loss_(loss),
        model_(MakeBarkLayout(target.config)),
        filterbank_(MelFilterbank(target.config, n_mels)),
        ref_mag_(target.Magnitude()),
        ref_mel_(MelFromPower(target.Power(), filterbank_)) {
    loss_.Validate();
    if (normalize_l1) {
      lin_scale_ = PositiveMean(ref_mag_);
      mel_scale_ = PositiveMean(ref_mel_.frames);
    }
  }

  struct Evaluation {
    FitPoint point;
    RealMatrix grad;
  };

  Evaluation Evaluate(const RealMatrix& magnitude) const {
    Evaluation ev;
    const double count_lin = static_cast<double>(magnitude.size());
    const RealMatrix power = magnitude.cwiseAbs2();
    const MelSpectrogram pred_mel = MelFromPower(power, filterbank_);
    const double count_mel = static_cast<double>(pred_mel.frames.size());
    ev.point.l_sing =
        SingLoss(magnitude / lin_scale_, ref_mag_ / lin_scale_,
                 MelSpectrogram{pred_mel.frames / mel_scale_},
                 MelSpectrogram{ref_mel_.frames / mel_scale_}, loss_);

    ev.grad = RealMatrix::Zero(magnitude.rows(), magnitude.cols());
    if (loss_.include_linear_l1) {
      ev.grad += (magnitude - ref_mag_).unaryExpr(&detail::SignOf) / (count_lin * lin_scale_);
    }
    if (loss_.include_mel_l1) {
      const RealMatrix d_mel = (pred_mel.frames - ref_mel_.frames).unaryExpr(&detail::SignOf) /
                               (count_mel * mel_scale_);
      // mel = (M .* M) F^T, so dM = 2 M .* (d_mel F).
      ev.grad += (2.0 * magnitude.array() * (d_mel * filterbank_).array()).matrix();
    }

    RealMatrix pe_grad;
    GradientOptions options{loss_.grad_through_threshold};
    const GradientReport pe =
        PeGradientFromMagnitude(magnitude, target_, model_, options, &pe_grad);
    ev.point.l_pe = pe.loss_pe;
    ev.point.mean_pe = pe.mean_pe;
    ev.point.total = ev.point.l_sing + loss_.lambda * pe.loss_pe;
    if (loss_.lambda != 0.0) ev.grad += loss_.lambda * pe_grad;
    return ev;
  }

  const RealMatrix& reference_magnitude() const { return ref_mag_; }

 private:
  static double PositiveMean(const RealMatrix& m) {
    const double mean = m.size() == 0 ? 0.0 : m.mean();
    return mean > 0.0 ? mean : 1.0;
  }

  Spectrogram target_;
  LossConfig loss_;
  MaskingModel model_;
  RealMatrix filterbank_;
  RealMatrix ref_mag_;
  MelSpectrogram ref_mel_;
  double lin_scale_ = 1.0;
  double mel_scale_ = 1.0;
};

inline RealMatrix InitialMagnitude(const RealMatrix& reference, double init_scale,
                                   std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double scale = init_scale * reference.maxCoeff();
  RealMatrix m(reference.rows(), reference.cols());
  for (Eigen::Index t = 0; t < m.rows(); ++t) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) m(t, k) = scale * unit(rng);
  }
  return m;
}

inline FitRecord ToyFit(const Spectrogram& target, const FitOptions& options) {
  if (options.steps < 1) throw Error(ErrorKind::kInvalidConfig, "steps must be >= 1");
  if (!(options.learning_rate > 0.0)) {
    throw Error(ErrorKind::kInvalidConfig, "learning_rate must be positive");
  }
  const FitObjective objective(target, options.loss, options.n_mels, options.normalize_l1);
  FitRecord record;
  record.lambda = options.loss.lambda;
  record.initial = InitialMagnitude(objective.reference_magnitude(),
                                    options.init_scale, options.seed);
  RealMatrix magnitude = record.initial;
  record.curve.reserve(options.steps + 1);
  for (std::size_t step = 0; step <= options.steps; ++step) {
    auto ev = objective.Evaluate(magnitude);
    if (!std::isfinite(ev.point.total) || !ev.grad.allFinite()) {
      throw DivergenceError(step, "objective is not finite");
    }
    record.curve.push_back(ev.point);
    if (step == options.steps) break;
    magnitude -= options.learning_rate * ev.grad;
  }
  record.final_magnitude = std::move(magnitude);
  return record;
}

inline FitRecord ToyFit(const AudioBuffer& target, const StftConfig& cfg,
                        const FitOptions& options) {
  StftConfig c = cfg;
  c.sample_rate = target.sample_rate;
  return ToyFit(Stft(target, c), options);
}

}  // namespace pe_audio

#endif  // PE_AUDIO_TOY_FIT_HPP_
