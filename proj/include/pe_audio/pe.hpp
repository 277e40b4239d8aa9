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

// Perceptual entropy of a complex spectrogram, the PE loss 1 / (1 + PE), the
// interpolated training objective L_sing + lambda * L_pe, and hand-derived
// reverse-mode gradients of L_pe through the whole masking model.
//
// Each frame contributes
//
//   PE(t) = sum_i sum_{w in band i} log2(2 |Re w| / s_i + 1)
//                                 + log2(2 |Im w| / s_i + 1),
//   s_i   = sqrt(6 T'_i / k_i),
//
// and the loss uses the mean over frames.
//
// Subgradient conventions: d|x|/dx = 0 at x = 0, the tonality clip
// min(u, 1) takes the u-branch at u = 1, and max(T / g, A) and the SFM
// power floor take whichever branch is active (the left one on ties).

#ifndef PE_AUDIO_PE_HPP_
#define PE_AUDIO_PE_HPP_

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pe_audio/error.hpp"
#include "pe_audio/psychoacoustic.hpp"
#include "pe_audio/spectral.hpp"

namespace pe_audio {

// Loss weights used for the recurrent and transformer models, and for the
// conformer model.
inline constexpr double kLambdaDefault = 0.01;
inline constexpr double kLambdaConformer = 0.02;

struct PEResult {
  std::vector<double> per_frame;  // bits
  double mean_pe = 0.0;
  double loss_pe = 1.0;
};

struct LossConfig {
  double lambda = kLambdaDefault;
  bool include_mel_l1 = true;
  bool include_linear_l1 = true;
  // When false the masking threshold is treated as a constant in the
  // backward pass (stop-gradient at T').
  bool grad_through_threshold = true;

  void Validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
      throw Error(ErrorKind::kInvalidConfig, "lambda must be finite and >= 0");
    }
  }
};

inline double PeLoss(double mean_pe) { return 1.0 / (1.0 + mean_pe); }

// PE of one frame given final thresholds T' per band.
inline double PerceptualEntropyFrame(std::span<const std::complex<double>> frame,
                                     std::span<const BinRange> bands,
                                     std::span<const double> thresholds) {
  double pe = 0.0;
  for (std::size_t i = 0; i < bands.size(); ++i) {
    const auto& r = bands[i];
    if (!(thresholds[i] > 0.0)) {
      throw Error(ErrorKind::kDegenerateThreshold,
                  "T' of band " + std::to_string(i + 1) + " is not positive");
    }
    const double step =
        std::sqrt(6.0 * thresholds[i] / static_cast<double>(r.count()));
    for (std::size_t w = r.lo; w <= r.hi; ++w) {
      pe += std::log2(2.0 * std::abs(frame[w].real() / step) + 1.0) +
            std::log2(2.0 * std::abs(frame[w].imag() / step) + 1.0);
    }
  }
  return pe;
}

inline PEResult PerceptualEntropy(const Spectrogram& spec,
                                  const BarkAnalysis& analysis) {
  const auto& layout = analysis.layout;
  if (spec.num_bins() != layout.num_bins() ||
      spec.num_frames() != analysis.num_frames()) {
    throw Error(ErrorKind::kShapeMismatch,
                "analysis does not match spectrogram shape");
  }
  PEResult result;
  result.per_frame.resize(spec.num_frames());
  std::vector<double> thr(layout.n());
  for (std::size_t t = 0; t < spec.num_frames(); ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    for (std::size_t i = 0; i < layout.n(); ++i) {
      thr[i] = analysis.threshold(r, static_cast<Eigen::Index>(i));
    }
    result.per_frame[t] = PerceptualEntropyFrame(
        {&spec.frames(r, 0), spec.num_bins()}, layout.bin_ranges, thr);
  }
  double sum = 0.0;
  for (double v : result.per_frame) sum += v;
  result.mean_pe =
      result.per_frame.empty() ? 0.0 : sum / static_cast<double>(result.per_frame.size());
  result.loss_pe = PeLoss(result.mean_pe);
  return result;
}

inline PEResult PerceptualEntropy(const Spectrogram& spec, const MaskingModel& model) {
  return PerceptualEntropy(spec, Analyze(spec, model));
}

// Mean absolute error of the linear pair plus that of the mel pair.
inline double SingLoss(const RealMatrix& pred_linear, const RealMatrix& ref_linear,
                       const MelSpectrogram& pred_mel, const MelSpectrogram& ref_mel,
                       const LossConfig& cfg = {}) {
  auto mae = [](const RealMatrix& a, const RealMatrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
      throw Error(ErrorKind::kShapeMismatch,
                  std::string(what) + " shapes differ: " +
                      std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                      " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
    }
    if (a.size() == 0) return 0.0;
    return (a - b).cwiseAbs().sum() / static_cast<double>(a.size());
  };
  double loss = 0.0;
  const double lin = mae(pred_linear, ref_linear, "linear");
  const double mel = mae(pred_mel.frames, ref_mel.frames, "mel");
  if (cfg.include_linear_l1) loss += lin;
  if (cfg.include_mel_l1) loss += mel;
  return loss;
}

inline double TotalLoss(double l_sing, const PEResult& pe, const LossConfig& cfg) {
  return l_sing + cfg.lambda * pe.loss_pe;
}

namespace detail {

inline double SignOf(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

// Forward pass over one frame in the requested precision. Used by the
// finite-difference checker; shares no code with the backward pass.
template <typename Real>
Real FramePeForward(std::span<const Real> re, std::span<const Real> im,
                    const MaskingModel& model) {
  const std::size_t n = model.n();
  const auto& bands = model.layout.bin_ranges;
  std::vector<Real> band_power(n, Real(0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t w = bands[i].lo; w <= bands[i].hi; ++w) {
      band_power[i] += re[w] * re[w] + im[w] * im[w];
    }
  }
  const Real ln10 = std::log(Real(10));
  Real pe(0);
  for (std::size_t i = 0; i < n; ++i) {
    Real spread(0);
    for (std::size_t j = 0; j < n; ++j) {
      spread += Real(model.kernel(static_cast<Eigen::Index>(i),
                                  static_cast<Eigen::Index>(j))) *
                band_power[j];
    }
    const Real k = Real(bands[i].count());
    Real log_sum(0), sum(0);
    for (std::size_t w = bands[i].lo; w <= bands[i].hi; ++w) {
      const Real p = re[w] * re[w] + im[w] * im[w];
      const Real q = p >= Real(kSfmFloor) ? p : Real(kSfmFloor);
      log_sum += std::log(q);
      sum += q;
    }
    Real sfm = Real(10) / ln10 * (log_sum / k - std::log(sum / k));
    if (sfm > Real(0)) sfm = Real(0);
    Real alpha = sfm / Real(kSfmDbMax);
    if (alpha > Real(1)) alpha = Real(1);
    if (alpha < Real(0)) alpha = Real(0);
    const Real offset = alpha * (Real(14.5) + Real(i + 1)) + Real(5.5) * (Real(1) - alpha);
    const Real thr = spread * std::pow(Real(10), -offset / Real(10));
    const Real renorm = thr / Real(model.gain[i]);
    const Real abs_thr = Real(model.abs_threshold[i]);
    const Real final_thr = renorm >= abs_thr ? renorm : abs_thr;
    const Real step = std::sqrt(Real(6) * final_thr / k);
    for (std::size_t w = bands[i].lo; w <= bands[i].hi; ++w) {
      pe += std::log2(Real(2) * std::abs(re[w]) / step + Real(1)) +
            std::log2(Real(2) * std::abs(im[w]) / step + Real(1));
    }
  }
  return pe;
}

// Which side of every kink the frame sits on. Two points with equal
// signatures are joined by a path on which the loss is smooth.
template <typename Real>
std::vector<std::int8_t> FrameBranches(std::span<const Real> re,
                                       std::span<const Real> im,
                                       const MaskingModel& model) {
  const std::size_t n = model.n();
  const auto& bands = model.layout.bin_ranges;
  std::vector<std::int8_t> sig;
  std::vector<Real> band_power(n, Real(0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t w = bands[i].lo; w <= bands[i].hi; ++w) {
      const Real p = re[w] * re[w] + im[w] * im[w];
      band_power[i] += p;
      sig.push_back(static_cast<std::int8_t>(re[w] > 0 ? 1 : (re[w] < 0 ? -1 : 0)));
      sig.push_back(static_cast<std::int8_t>(im[w] > 0 ? 1 : (im[w] < 0 ? -1 : 0)));
      sig.push_back(static_cast<std::int8_t>(p >= Real(kSfmFloor)));
    }
  }
  const Real ln10 = std::log(Real(10));
  for (std::size_t i = 0; i < n; ++i) {
    Real spread(0);
    for (std::size_t j = 0; j < n; ++j) {
      spread += Real(model.kernel(static_cast<Eigen::Index>(i),
                                  static_cast<Eigen::Index>(j))) *
                band_power[j];
    }
    const Real k = Real(bands[i].count());
    Real log_sum(0), sum(0);
    for (std::size_t w = bands[i].lo; w <= bands[i].hi; ++w) {
      const Real p = re[w] * re[w] + im[w] * im[w];
      const Real q = p >= Real(kSfmFloor) ? p : Real(kSfmFloor);
      log_sum += std::log(q);
      sum += q;
    }
    const Real sfm = Real(10) / ln10 * (log_sum / k - std::log(sum / k));
    const Real u = sfm / Real(kSfmDbMax);
    sig.push_back(static_cast<std::int8_t>(sfm <= Real(0)));
    sig.push_back(static_cast<std::int8_t>(u <= Real(1)));
    Real alpha = u > Real(1) ? Real(1) : (u < Real(0) ? Real(0) : u);
    const Real offset = alpha * (Real(14.5) + Real(i + 1)) + Real(5.5) * (Real(1) - alpha);
    const Real renorm = spread * std::pow(Real(10), -offset / Real(10)) /
                        Real(model.gain[i]);
    sig.push_back(static_cast<std::int8_t>(renorm >= Real(model.abs_threshold[i])));
  }
  return sig;
}

// PE of one frame and its gradient with respect to (Re, Im) of every bin,
// written to grad as dPE/dRe + i dPE/dIm.
inline double FramePeBackward(std::span<const std::complex<double>> frame,
                              const MaskingModel& model, bool through_threshold,
                              std::span<std::complex<double>> grad) {
  const std::size_t n = model.n();
  const auto& bands = model.layout.bin_ranges;
  const double ln2 = std::numbers::ln2;
  const double ln10 = std::numbers::ln10;

  // Forward, keeping what the backward pass needs.
  std::vector<double> band_power(n, 0.0), spread(n, 0.0), mean_q(n, 0.0),
      du_dsfm_gate(n, 0.0), alpha(n), attenuation(n), thr(n), final_thr(n),
      step(n);
  std::vector<bool> renorm_active(n), sfm_active(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t w = bands[i].lo; w <= bands[i].hi; ++w) {
      band_power[i] += std::norm(frame[w]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      spread[i] += model.kernel(static_cast<Eigen::Index>(i),
                                static_cast<Eigen::Index>(j)) *
                   band_power[j];
    }
    const double k = static_cast<double>(bands[i].count());
    double log_sum = 0.0, sum = 0.0;
    for (std::size_t w = bands[i].lo; w <= bands[i].hi; ++w) {
      const double q = std::max(std::norm(frame[w]), kSfmFloor);
      log_sum += std::log(q);
      sum += q;
    }
    mean_q[i] = sum / k;
    const double raw_sfm = 10.0 / ln10 * (log_sum / k - std::log(mean_q[i]));
    sfm_active[i] = raw_sfm <= 0.0;
    const double sfm = std::min(raw_sfm, 0.0);
    const double u = sfm / kSfmDbMax;
    du_dsfm_gate[i] = u <= 1.0 ? 1.0 : 0.0;
    alpha[i] = std::clamp(u, 0.0, 1.0);
    const double offset = Offset(alpha[i], i + 1);
    attenuation[i] = std::pow(10.0, -offset / 10.0);
    thr[i] = spread[i] * attenuation[i];
    const double renorm = thr[i] / model.gain[i];
    renorm_active[i] = renorm >= model.abs_threshold[i];
    final_thr[i] = renorm_active[i] ? renorm : model.abs_threshold[i];
    step[i] = std::sqrt(6.0 * final_thr[i] / k);
  }

  double pe = 0.0;
  std::vector<double> d_step(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = step[i];
    for (std::size_t w = bands[i].lo; w <= bands[i].hi; ++w) {
      double d_parts[2];
      const double parts[2] = {frame[w].real(), frame[w].imag()};
      for (int c = 0; c < 2; ++c) {
        const double mag = std::abs(parts[c]);
        const double arg = 2.0 * mag / s + 1.0;
        pe += std::log2(arg);
        // d/dx log2(2|x|/s + 1) and d/ds of the same term.
        d_parts[c] = SignOf(parts[c]) * 2.0 / (s * arg * ln2);
        d_step[i] -= 2.0 * mag / (s * s * arg * ln2);
      }
      grad[w] = {d_parts[0], d_parts[1]};
    }
  }
  if (!through_threshold) return pe;

  std::vector<double> d_spread(n), d_sfm(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d_final = d_step[i] * step[i] / (2.0 * final_thr[i]);
    const double d_renorm = renorm_active[i] ? d_final : 0.0;
    const double d_thr = d_renorm / model.gain[i];
    d_spread[i] = d_thr * attenuation[i];
    const double d_offset = -d_thr * thr[i] * ln10 / 10.0;
    const double d_alpha = d_offset * (14.5 + static_cast<double>(i + 1) - 5.5);
    const double d_u = d_alpha * du_dsfm_gate[i];
    d_sfm[i] = sfm_active[i] ? d_u / kSfmDbMax : 0.0;
  }
  std::vector<double> d_band(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      d_band[j] += model.kernel(static_cast<Eigen::Index>(i),
                                static_cast<Eigen::Index>(j)) *
                   d_spread[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double k = static_cast<double>(bands[i].count());
    for (std::size_t w = bands[i].lo; w <= bands[i].hi; ++w) {
      const double p = std::norm(frame[w]);
      double d_power = d_band[i];
      if (p >= kSfmFloor) {
        d_power += d_sfm[i] * 10.0 / (k * ln10) * (1.0 / p - 1.0 / mean_q[i]);
      }
      grad[w] += 2.0 * d_power * frame[w];
    }
  }
  return pe;
}

}  // namespace detail

struct GradientOptions {
  bool through_threshold = true;
};

struct GradientReport {
  ComplexMatrix grad;  // dL_pe/dRe + i dL_pe/dIm, T x bins
  std::vector<double> per_frame_pe;
  double mean_pe = 0.0;
  double loss_pe = 1.0;
  // Filled in by CheckPeGradient.
  std::optional<double> max_rel_err_vs_fd;
};

inline GradientReport PeGradient(const Spectrogram& spec, const MaskingModel& model,
                                 const GradientOptions& options = {}) {
  if (spec.num_bins() != model.layout.num_bins()) {
    throw Error(ErrorKind::kShapeMismatch, "spectrogram does not match layout");
  }
  const std::size_t frames = spec.num_frames();
  const std::size_t bins = spec.num_bins();
  GradientReport report;
  report.grad = ComplexMatrix::Zero(spec.frames.rows(), spec.frames.cols());
  report.per_frame_pe.resize(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    report.per_frame_pe[t] = detail::FramePeBackward(
        {&spec.frames(r, 0), bins}, model, options.through_threshold,
        {&report.grad(r, 0), bins});
  }
  double sum = 0.0;
  for (double v : report.per_frame_pe) sum += v;
  report.mean_pe = frames == 0 ? 0.0 : sum / static_cast<double>(frames);
  report.loss_pe = PeLoss(report.mean_pe);
  if (frames > 0) {
    // dL/dPE(t) = -1 / (1 + mean)^2 / T
    const double scale = -report.loss_pe * report.loss_pe / static_cast<double>(frames);
    report.grad *= scale;
  }
  return report;
}

// Magnitude-only prediction: the complex spectrum is rebuilt with the phase
// of `phase_source` (ground truth) before the pipeline runs. On return,
// `magnitude_grad` (if given) holds dL_pe/d|X|.
inline GradientReport PeGradientFromMagnitude(const RealMatrix& magnitude,
                                              const Spectrogram& phase_source,
                                              const MaskingModel& model,
                                              const GradientOptions& options = {},
                                              RealMatrix* magnitude_grad = nullptr) {
  if (magnitude.rows() != phase_source.frames.rows() ||
      magnitude.cols() != phase_source.frames.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "magnitude and phase source differ in shape");
  }
  Spectrogram spec;
  spec.config = phase_source.config;
  spec.frames.resize(magnitude.rows(), magnitude.cols());
  ComplexMatrix unit(magnitude.rows(), magnitude.cols());
  for (Eigen::Index t = 0; t < magnitude.rows(); ++t) {
    for (Eigen::Index k = 0; k < magnitude.cols(); ++k) {
      unit(t, k) = std::polar(1.0, std::arg(phase_source.frames(t, k)));
      spec.frames(t, k) = magnitude(t, k) * unit(t, k);
    }
  }
  GradientReport report = PeGradient(spec, model, options);
  if (magnitude_grad != nullptr) {
    // d/dM of (M cos p, M sin p) is (cos p, sin p).
    *magnitude_grad = (report.grad.array() * unit.conjugate().array()).real().matrix();
  }
  return report;
}

// ---------------------------------------------------------------------------
// Finite-difference check.

struct FdCoordinate {
  std::size_t frame = 0;
  std::size_t bin = 0;
  bool imag = false;
  double value = 0.0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_err = 0.0;
};

struct FdCheckResult {
  std::vector<FdCoordinate> coords;
  double max_rel_err = 0.0;
  std::optional<FdCoordinate> worst;
  // No coordinate away from a kink was found (e.g. silence).
  bool all_kink = false;
};

inline double RelativeError(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

// Compares report.grad against central differences of L_pe at `n_coords`
// randomly drawn coordinates. A coordinate is used only if the frame's kink
// signature is identical at x - 2h, x and x + 2h, with h = rel_step * |x|.
// Perturbed frames are re-evaluated in long double.
inline FdCheckResult CheckPeGradient(const Spectrogram& spec, const MaskingModel& model,
                                     const GradientReport& report, std::size_t n_coords,
                                     std::uint64_t seed, double rel_step = 1e-5) {
  using Wide = long double;
  FdCheckResult result;
  const std::size_t frames = spec.num_frames();
  const std::size_t bins = spec.num_bins();
  if (frames == 0 || bins == 0 || n_coords == 0) {
    result.all_kink = true;
    return result;
  }
  const double total_pe = report.mean_pe * static_cast<double>(frames);

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_frame(0, frames - 1);
  std::uniform_int_distribution<std::size_t> pick_bin(0, bins - 1);
  std::bernoulli_distribution pick_imag(0.5);

  std::vector<Wide> re(bins), im(bins);
  const std::size_t max_attempts = 200 * n_coords + 1000;
  for (std::size_t attempt = 0;
       attempt < max_attempts && result.coords.size() < n_coords; ++attempt) {
    const std::size_t t = pick_frame(rng);
    const std::size_t k = pick_bin(rng);
    const bool imag = pick_imag(rng);
    const auto r = static_cast<Eigen::Index>(t);
    for (std::size_t w = 0; w < bins; ++w) {
      re[w] = spec.frames(r, static_cast<Eigen::Index>(w)).real();
      im[w] = spec.frames(r, static_cast<Eigen::Index>(w)).imag();
    }
    Wide& x = imag ? im[k] : re[k];
    const Wide x0 = x;
    if (x0 == 0) continue;
    const Wide h = static_cast<Wide>(rel_step) * std::abs(x0);

    auto signature_at = [&](Wide v) {
      x = v;
      auto sig = detail::FrameBranches<Wide>(re, im, model);
      x = x0;
      return sig;
    };
    const auto sig0 = signature_at(x0);
    if (signature_at(x0 + 2 * h) != sig0 || signature_at(x0 - 2 * h) != sig0) continue;

    const Wide xp = x0 + h, xm = x0 - h;
    x = xp;
    const Wide pe_plus = detail::FramePeForward<Wide>(re, im, model);
    x = xm;
    const Wide pe_minus = detail::FramePeForward<Wide>(re, im, model);
    x = x0;
    const Wide pe_here = detail::FramePeForward<Wide>(re, im, model);

    // L = 1 / (1 + (rest + PE_t) / T); the difference of two such values is
    // -(dPE / T) L+ L-, which avoids cancelling two nearly equal losses.
    const Wide count = static_cast<Wide>(frames);
    const Wide rest = static_cast<Wide>(total_pe) - pe_here;
    const Wide l_plus = 1 / (1 + (rest + pe_plus) / count);
    const Wide l_minus = 1 / (1 + (rest + pe_minus) / count);
    const Wide d_loss = -((pe_plus - pe_minus) / count) * l_plus * l_minus;

    FdCoordinate c;
    c.frame = t;
    c.bin = k;
    c.imag = imag;
    c.value = static_cast<double>(x0);
    c.numeric = static_cast<double>(d_loss / (xp - xm));
    const auto g = report.grad(r, static_cast<Eigen::Index>(k));
    c.analytic = imag ? g.imag() : g.real();
    c.rel_err = RelativeError(c.analytic, c.numeric);
    if (!result.worst || c.rel_err > result.worst->rel_err) result.worst = c;
    result.max_rel_err = std::max(result.max_rel_err, c.rel_err);
    result.coords.push_back(c);
  }
  result.all_kink = result.coords.empty();
  return result;
}

}  // namespace pe_audio

#endif  // PE_AUDIO_PE_HPP_
