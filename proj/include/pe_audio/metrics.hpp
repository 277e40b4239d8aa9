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

// Objective singing-synthesis metrics: mel-cepstral distortion, F0 RMSE,
// voiced/unvoiced error rate and F0 correlation, plus an autocorrelation
// pitch tracker. Frames are compared index-aligned; there is no DTW.

#ifndef PE_AUDIO_METRICS_HPP_
#define PE_AUDIO_METRICS_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <future>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "pe_audio/error.hpp"
#include "pe_audio/signal_io.hpp"
#include "pe_audio/spectral.hpp"

namespace pe_audio {

struct F0Track {
  std::vector<double> f0;  // Hz, 0 where unvoiced
  std::vector<bool> voiced;
  double hop_seconds = 0.0;

  std::size_t size() const { return f0.size(); }
};

struct F0Options {
  double window_seconds = 0.040;
  double min_hz = 50.0;
  double max_hz = 1100.0;
  double voicing_threshold = 0.45;
  // Frames quieter than this fraction of the loudest frame's RMS are unvoiced.
  double rms_gate = 0.01;
  // Among autocorrelation peaks, the shortest lag within this fraction of the
  // best one wins; suppresses picking a sub-octave.
  double octave_tolerance = 0.9;
};

inline F0Track ExtractF0(const AudioBuffer& buf, double hop_seconds,
                         const F0Options& opt = {}) {
  if (buf.sample_rate < 8000) {
    throw Error(ErrorKind::kInvalidRate, "pitch tracking needs >= 8000 Hz");
  }
  if (!(hop_seconds > 0.0)) throw Error(ErrorKind::kInvalidConfig, "hop must be > 0");
  const double sr = buf.sample_rate;
  const auto window = static_cast<std::size_t>(std::lround(opt.window_seconds * sr));
  const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(hop_seconds * sr)));
  const auto lag_min = static_cast<std::size_t>(std::floor(sr / opt.max_hz));
  const auto lag_max =
      std::min(static_cast<std::size_t>(std::ceil(sr / opt.min_hz)), window - 2);
  const std::size_t frames = FrameCount(buf.samples.size(), window, hop);

  F0Track track;
  track.hop_seconds = hop_seconds;
  track.f0.assign(frames, 0.0);
  track.voiced.assign(frames, false);

  std::vector<double> rms(frames), peak_corr(frames, 0.0), lag_est(frames, 0.0);
  std::vector<double> r(lag_max + 2, 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    const double* x = buf.samples.data() + t * hop;
    double energy = 0.0;
    for (std::size_t n = 0; n < window; ++n) energy += x[n] * x[n];
    rms[t] = std::sqrt(energy / static_cast<double>(window));
    if (energy == 0.0) continue;

    // Normalized autocorrelation; the energies of the two overlapping
    // segments are updated incrementally as the lag grows.
    double head = energy, tail = energy;
    for (std::size_t lag = 1; lag <= lag_max + 1 && lag < window; ++lag) {
      head -= x[window - lag] * x[window - lag];
      tail -= x[lag - 1] * x[lag - 1];
      double acc = 0.0;
      for (std::size_t n = 0; n + lag < window; ++n) acc += x[n] * x[n + lag];
      const double denom = std::sqrt(std::max(head, 0.0) * std::max(tail, 0.0));
      r[lag] = denom > 0.0 ? acc / denom : 0.0;
    }
    std::size_t best = lag_min;
    for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
      if (r[lag] > r[best]) best = lag;
    }
    std::size_t chosen = best;
    for (std::size_t lag = std::max<std::size_t>(lag_min, 1); lag <= lag_max; ++lag) {
      if (lag > lag_min && r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1] &&
          r[lag] >= opt.octave_tolerance * r[best]) {
        chosen = lag;
        break;
      }
    }
    peak_corr[t] = r[chosen];
    double refined = static_cast<double>(chosen);
    if (chosen > 1) {
      const double a = r[chosen - 1], b = r[chosen], c = r[chosen + 1];
      const double curvature = a - 2.0 * b + c;
      if (curvature < 0.0) refined += 0.5 * (a - c) / curvature;
    }
    lag_est[t] = refined;
  }

  const double peak_rms = frames == 0 ? 0.0 : *std::max_element(rms.begin(), rms.end());
  for (std::size_t t = 0; t < frames; ++t) {
    const bool loud = rms[t] > 0.0 && rms[t] >= opt.rms_gate * peak_rms;
    if (loud && peak_corr[t] >= opt.voicing_threshold && lag_est[t] > 0.0) {
      track.voiced[t] = true;
      track.f0[t] = std::clamp(sr / lag_est[t], opt.min_hz, opt.max_hz);
    }
  }
  return track;
}

// (10 / ln 10) * sqrt(2) * mean_t sqrt(sum_{k>=1} (ref_k - pred_k)^2), in dB.
inline double Mcd(const RealMatrix& ref, const RealMatrix& pred) {
  if (ref.rows() != pred.rows() || ref.cols() != pred.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "cepstra differ in shape");
  }
  if (ref.cols() < 2) throw Error(ErrorKind::kInvalidConfig, "MCD needs >= 2 coefficients");
  if (ref.rows() == 0) return 0.0;
  const double constant = 10.0 / std::numbers::ln10 * std::numbers::sqrt2;
  const RealMatrix diff = (ref - pred).rightCols(ref.cols() - 1);
  return constant * diff.rowwise().norm().mean();
}

struct F0Metrics {
  std::optional<double> f0_rmse_hz;  // empty without co-voiced frames
  double vuv_error_pct = 0.0;
  std::optional<double> f0_corr;     // empty with < 2 co-voiced frames or no variance
  std::size_t co_voiced = 0;
};

inline F0Metrics ComputeF0Metrics(const F0Track& ref, const F0Track& pred) {
  if (ref.size() != pred.size()) {
    throw Error(ErrorKind::kLengthMismatch,
                std::to_string(ref.size()) + " vs " + std::to_string(pred.size()) +
                    " frames");
  }
  F0Metrics m;
  const std::size_t n = ref.size();
  if (n == 0) return m;
  std::size_t disagree = 0;
  std::vector<double> a, b;
  for (std::size_t t = 0; t < n; ++t) {
    if (ref.voiced[t] != pred.voiced[t]) ++disagree;
    if (ref.voiced[t] && pred.voiced[t]) {
      a.push_back(ref.f0[t]);
      b.push_back(pred.f0[t]);
    }
  }
  m.vuv_error_pct = 100.0 * static_cast<double>(disagree) / static_cast<double>(n);
  m.co_voiced = a.size();
  if (a.empty()) return m;

  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  m.f0_rmse_hz = std::sqrt(sq / static_cast<double>(a.size()));

  if (a.size() < 2) return m;
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += a[i];
    mean_b += b[i];
  }
  mean_a /= static_cast<double>(a.size());
  mean_b /= static_cast<double>(b.size());
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - mean_a) * (b[i] - mean_b);
    var_a += (a[i] - mean_a) * (a[i] - mean_a);
    var_b += (b[i] - mean_b) * (b[i] - mean_b);
  }
  if (var_a > 0.0 && var_b > 0.0) {
    m.f0_corr = std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
  }
  return m;
}

struct MetricReport {
  double mcd_db = 0.0;
  std::optional<double> f0_rmse_hz;
  double vuv_error_pct = 0.0;
  std::optional<double> f0_corr;
  std::size_t frames_compared = 0;
  std::vector<std::string> warnings;
};

struct CompareOptions {
  StftConfig stft;
  std::size_t n_mels = kDefaultMelBins;
  std::size_t n_coeffs = kDefaultCepstralCoeffs;
  F0Options f0;
  // Frame-count disagreement above this fraction raises a warning.
  double mismatch_tolerance = 0.05;
};

namespace detail {

struct UtteranceFeatures {
  RealMatrix cepstra;
  F0Track f0;
};

inline UtteranceFeatures ExtractFeatures(const AudioBuffer& raw,
                                         const CompareOptions& opt) {
  const AudioBuffer buf = Resample(raw, opt.stft.sample_rate);
  UtteranceFeatures f;
  const Spectrogram spec = Stft(buf, opt.stft);
  f.cepstra = MelCepstrum(ComputeMelSpectrogram(spec, opt.n_mels), opt.n_coeffs);
  f.f0 = ExtractF0(buf, static_cast<double>(opt.stft.hop) / opt.stft.sample_rate, opt.f0);
  return f;
}

inline F0Track Truncated(const F0Track& track, std::size_t frames) {
  F0Track out = track;
  out.f0.resize(frames);
  out.voiced.resize(frames);
  return out;
}

}  // namespace detail

inline MetricReport CompareBuffers(const AudioBuffer& ref, const AudioBuffer& pred,
                                   const CompareOptions& opt = {}) {
  auto pending = std::async(std::launch::async,
                            [&] { return detail::ExtractFeatures(pred, opt); });
  const auto ref_features = detail::ExtractFeatures(ref, opt);
  const auto pred_features = pending.get();

  MetricReport report;
  const auto t_ref = static_cast<std::size_t>(ref_features.cepstra.rows());
  const auto t_pred = static_cast<std::size_t>(pred_features.cepstra.rows());
  const std::size_t frames = std::min(t_ref, t_pred);
  const std::size_t longest = std::max(t_ref, t_pred);
  if (longest > 0 && static_cast<double>(longest - frames) >
                         opt.mismatch_tolerance * static_cast<double>(longest)) {
    report.warnings.push_back("MismatchWarning: frame counts " + std::to_string(t_ref) +
                              " vs " + std::to_string(t_pred));
  }
  const auto rows = static_cast<Eigen::Index>(frames);
  report.mcd_db = Mcd(ref_features.cepstra.topRows(rows), pred_features.cepstra.topRows(rows));
  report.frames_compared = frames;

  const std::size_t f0_frames = std::min(ref_features.f0.size(), pred_features.f0.size());
  const auto f0 = ComputeF0Metrics(detail::Truncated(ref_features.f0, f0_frames),
                                   detail::Truncated(pred_features.f0, f0_frames));
  report.f0_rmse_hz = f0.f0_rmse_hz;
  report.vuv_error_pct = f0.vuv_error_pct;
  report.f0_corr = f0.f0_corr;
  return report;
}

inline MetricReport Compare(const std::filesystem::path& ref_wav,
                            const std::filesystem::path& pred_wav,
                            const CompareOptions& opt = {}) {
  return CompareBuffers(LoadWav(ref_wav), LoadWav(pred_wav), opt);
}

}  // namespace pe_audio

#endif  // PE_AUDIO_METRICS_HPP_
