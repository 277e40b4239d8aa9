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

// Simultaneous masking model over critical bands (Johnston-style):
//
//   B_i   band energy, sum of |X(w)|^2 over the band's bins
//   C_i   B convolved across bands with the Schroeder spreading function
//   SFM_i spectral flatness of the band's per-bin powers, in dB
//   a_i   tonality, min(SFM_i / -60, 1)
//   O_i   offset, a_i (14.5 + i) + 5.5 (1 - a_i), i counted from 1
//   T_i   C_i 10^(-O_i / 10)
//   T'_i  max(T_i / g_i, A_i), g_i the spreading gain of a flat spectrum
//         and A_i the absolute threshold of hearing for the band
//
// Absolute levels assume a full-scale sinusoid plays at 96 dB SPL.

#ifndef PE_AUDIO_PSYCHOACOUSTIC_HPP_
#define PE_AUDIO_PSYCHOACOUSTIC_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pe_audio/error.hpp"
#include "pe_audio/spectral.hpp"

namespace pe_audio {

inline constexpr double kSfmFloor = 1e-12;
inline constexpr double kSfmDbMax = -60.0;
inline constexpr double kFullScaleSplDb = 96.0;
// Tq is evaluated no lower than this; it diverges at 0 Hz.
inline constexpr double kLowestAudibleHz = 20.0;

// Zwicker critical band upper edges in Hz.
inline constexpr std::array<double, 24> kCriticalBandUpperEdgesHz = {
    100,  200,  300,  400,  510,  630,  770,  920,  1080,  1270,  1480,  1720,
    2000, 2320, 2700, 3150, 3700, 4400, 5300, 6400, 7700, 9500, 12000, 15500};

struct BinRange {
  std::size_t lo = 0;  // inclusive
  std::size_t hi = 0;  // inclusive
  std::size_t count() const { return hi - lo + 1; }
};

struct BarkBandLayout {
  std::vector<double> band_edges;  // n + 1 ascending frequencies in Hz
  std::vector<BinRange> bin_ranges;
  std::vector<std::size_t> k;      // bins per band
  StftConfig config;

  std::size_t n() const { return bin_ranges.size(); }
  std::size_t num_bins() const {
    return bin_ranges.empty() ? 0 : bin_ranges.back().hi + 1;
  }

  std::vector<double> CenterFrequencies() const {
    std::vector<double> centers(n());
    for (std::size_t i = 0; i < n(); ++i) {
      centers[i] = 0.5 * (band_edges[i] + band_edges[i + 1]);
    }
    return centers;
  }

  // Builds a layout from explicit contiguous bin ranges starting at bin 0.
  // Edges are set to bin frequencies; used for synthetic test layouts.
  static BarkBandLayout FromBinRanges(std::vector<BinRange> ranges,
                                      const StftConfig& cfg) {
    BarkBandLayout layout;
    layout.config = cfg;
    std::size_t next = 0;
    layout.band_edges.push_back(0.0);
    for (const auto& r : ranges) {
      if (r.lo != next || r.hi < r.lo) {
        throw Error(ErrorKind::kInvalidConfig,
                    "bin ranges must be contiguous from bin 0");
      }
      next = r.hi + 1;
      layout.k.push_back(r.count());
      layout.band_edges.push_back(static_cast<double>(next) * cfg.bin_hz());
    }
    layout.bin_ranges = std::move(ranges);
    return layout;
  }
};

inline BarkBandLayout MakeBarkLayout(const StftConfig& cfg) {
  cfg.Validate();
  const double nyquist = cfg.nyquist();
  BarkBandLayout layout;
  layout.config = cfg;
  layout.band_edges.push_back(0.0);
  for (double edge : kCriticalBandUpperEdgesHz) {
    if (edge >= nyquist) break;
    layout.band_edges.push_back(edge);
  }
  layout.band_edges.push_back(nyquist);

  const std::size_t bands = layout.band_edges.size() - 1;
  const std::size_t bins = cfg.bins();
  std::vector<std::size_t> band_of_bin(bins);
  std::size_t band = 0;
  for (std::size_t b = 0; b < bins; ++b) {
    const double f = static_cast<double>(b) * cfg.bin_hz();
    while (band + 1 < bands && f >= layout.band_edges[band + 1]) ++band;
    band_of_bin[b] = band;
  }
  layout.bin_ranges.assign(bands, BinRange{});
  std::vector<bool> seen(bands, false);
  for (std::size_t b = 0; b < bins; ++b) {
    auto& r = layout.bin_ranges[band_of_bin[b]];
    if (!seen[band_of_bin[b]]) {
      r.lo = b;
      seen[band_of_bin[b]] = true;
    }
    r.hi = b;
  }
  for (std::size_t i = 0; i < bands; ++i) {
    if (!seen[i]) {
      throw Error(ErrorKind::kInvalidConfig,
                  "fft_size " + std::to_string(cfg.fft_size) +
                      " leaves critical band " + std::to_string(i + 1) +
                      " without bins at " + std::to_string(cfg.sample_rate) +
                      " Hz");
    }
    layout.k.push_back(layout.bin_ranges[i].count());
  }
  return layout;
}

// Schroeder spreading function in dB for a masker-to-maskee distance in bark.
inline double SpreadingDb(double dz) {
  const double x = dz + 0.474;
  return 15.81 + 7.5 * x - 17.5 * std::sqrt(1.0 + x * x);
}

inline double SpreadingLinear(double dz) {
  return std::pow(10.0, SpreadingDb(dz) / 10.0);
}

// S(i, j) = sf(i - j): contribution of band j's energy to band i.
inline RealMatrix SpreadingKernel(std::size_t n) {
  RealMatrix s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          SpreadingLinear(static_cast<double>(i) - static_cast<double>(j));
    }
  }
  return s;
}

// Terhardt's approximation of the threshold in quiet, dB SPL.
inline double AbsoluteThresholdDbSpl(double hz) {
  const double khz = std::max(hz, kLowestAudibleHz) / 1000.0;
  return 3.64 * std::pow(khz, -0.8) -
         6.5 * std::exp(-0.6 * (khz - 3.3) * (khz - 3.3)) +
         1e-3 * std::pow(khz, 4.0);
}

// One-sided spectral energy of a unit-amplitude sinusoid for this window,
// N * sum(w^2) / 4 by Parseval. This is the 96 dB SPL reference.
inline double FullScaleSinePower(const StftConfig& cfg) {
  const auto w = MakeWindow(cfg.window, cfg.fft_size);
  double sum_sq = 0.0;
  for (double v : w) sum_sq += v * v;
  return static_cast<double>(cfg.fft_size) * sum_sq / 4.0;
}

inline double SplToPower(double spl_db, const StftConfig& cfg) {
  return FullScaleSinePower(cfg) * std::pow(10.0, (spl_db - kFullScaleSplDb) / 10.0);
}

// Band energy sums.
inline std::vector<double> BarkSpectrum(
    std::span<const std::complex<double>> frame, const BarkBandLayout& layout) {
  if (frame.size() != layout.num_bins()) {
    throw Error(ErrorKind::kShapeMismatch,
                "frame has " + std::to_string(frame.size()) +
                    " bins, layout expects " + std::to_string(layout.num_bins()));
  }
  std::vector<double> b(layout.n(), 0.0);
  for (std::size_t i = 0; i < layout.n(); ++i) {
    const auto& r = layout.bin_ranges[i];
    for (std::size_t w = r.lo; w <= r.hi; ++w) b[i] += std::norm(frame[w]);
  }
  return b;
}

inline std::vector<double> Spread(std::span<const double> band_power,
                                  const RealMatrix& kernel) {
  const auto n = static_cast<std::size_t>(kernel.rows());
  if (band_power.size() != n) {
    throw Error(ErrorKind::kShapeMismatch, "band count does not match kernel");
  }
  std::vector<double> c(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      c[i] += kernel(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
              band_power[j];
    }
  }
  return c;
}

inline std::vector<double> Spread(std::span<const double> band_power,
                                  const BarkBandLayout& layout) {
  return Spread(band_power, SpreadingKernel(layout.n()));
}

// 10 log10(geometric mean / arithmetic mean) with components floored at
// 1e-12. Both means use the floored values, so the result never exceeds 0.
inline double SfmDb(std::span<const double> power) {
  if (power.empty()) {
    throw Error(ErrorKind::kInvalidConfig, "SFM needs at least one component");
  }
  double log_sum = 0.0, sum = 0.0;
  for (double p : power) {
    const double q = std::max(p, kSfmFloor);
    log_sum += std::log(q);
    sum += q;
  }
  const double k = static_cast<double>(power.size());
  const double sfm = 10.0 / std::numbers::ln10 * (log_sum / k - std::log(sum / k));
  return std::min(sfm, 0.0);
}

inline double Tonality(double sfm_db) {
  return std::clamp(sfm_db / kSfmDbMax, 0.0, 1.0) + 0.0;  // no -0
}

// band_index counts from 1.
inline double Offset(double alpha, std::size_t band_index) {
  return alpha * (14.5 + static_cast<double>(band_index)) + 5.5 * (1.0 - alpha);
}

inline double SpreadThreshold(double spread_power, double offset_db) {
  if (spread_power <= 0.0) return 0.0;
  return spread_power * std::pow(10.0, -offset_db / 10.0);
}

// Precomputed per-layout quantities shared by every frame.
struct MaskingModel {
  BarkBandLayout layout;
  RealMatrix kernel;                 // n x n spreading matrix
  std::vector<double> gain;          // row sums of kernel
  std::vector<double> abs_threshold; // A_i in spectral power units

  explicit MaskingModel(BarkBandLayout l) : layout(std::move(l)) {
    const std::size_t n = layout.n();
    kernel = SpreadingKernel(n);
    gain.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      gain[i] = kernel.row(static_cast<Eigen::Index>(i)).sum();
    }
    const double bin_hz = layout.config.bin_hz();
    abs_threshold.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      const auto& r = layout.bin_ranges[i];
      for (std::size_t w = r.lo; w <= r.hi; ++w) {
        best = std::min(best, AbsoluteThresholdDbSpl(static_cast<double>(w) * bin_hz));
      }
      abs_threshold[i] = SplToPower(best, layout.config);
    }
  }

  std::size_t n() const { return layout.n(); }
};

inline std::vector<double> RenormalizeAndClamp(std::span<const double> spread_thr,
                                               const MaskingModel& model) {
  std::vector<double> out(model.n());
  for (std::size_t i = 0; i < model.n(); ++i) {
    out[i] = std::max(spread_thr[i] / model.gain[i], model.abs_threshold[i]);
  }
  return out;
}

inline std::vector<double> RenormalizeAndClamp(std::span<const double> spread_thr,
                                               const BarkBandLayout& layout) {
  return RenormalizeAndClamp(spread_thr, MaskingModel(layout));
}

// Per-frame, per-band intermediates. Every matrix is T x n.
struct BarkAnalysis {
  BarkBandLayout layout;
  RealMatrix band_power;       // B
  RealMatrix spread_power;     // C
  RealMatrix sfm_db;
  RealMatrix alpha;
  RealMatrix offset_db;        // O
  RealMatrix spread_threshold; // T
  RealMatrix renormalized;     // T / g, before the absolute-threshold clamp
  RealMatrix threshold;        // T'

  std::size_t num_frames() const { return static_cast<std::size_t>(band_power.rows()); }

  // True where the absolute threshold, not masking, sets T'.
  bool ClampActive(std::size_t t, std::size_t i) const {
    const auto r = static_cast<Eigen::Index>(t);
    const auto c = static_cast<Eigen::Index>(i);
    return renormalized(r, c) < threshold(r, c);
  }
};

inline BarkAnalysis Analyze(const Spectrogram& spec, const MaskingModel& model) {
  const std::size_t n = model.n();
  const std::size_t frames = spec.num_frames();
  if (spec.num_bins() != model.layout.num_bins()) {
    throw Error(ErrorKind::kShapeMismatch,
                "spectrogram has " + std::to_string(spec.num_bins()) +
                    " bins, layout expects " +
                    std::to_string(model.layout.num_bins()));
  }
  const auto rows = static_cast<Eigen::Index>(frames);
  const auto cols = static_cast<Eigen::Index>(n);
  BarkAnalysis a;
  a.layout = model.layout;
  for (RealMatrix* m : {&a.band_power, &a.spread_power, &a.sfm_db, &a.alpha,
                        &a.offset_db, &a.spread_threshold, &a.renormalized,
                        &a.threshold}) {
    m->resize(rows, cols);
  }

  std::vector<double> power;
  for (std::size_t t = 0; t < frames; ++t) {
    const auto r = static_cast<Eigen::Index>(t);
    std::span<const std::complex<double>> frame(&spec.frames(r, 0), spec.num_bins());
    const auto b = BarkSpectrum(frame, model.layout);
    const auto c = Spread(b, model.kernel);
    for (std::size_t i = 0; i < n; ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      const auto& range = model.layout.bin_ranges[i];
      power.clear();
      for (std::size_t w = range.lo; w <= range.hi; ++w) power.push_back(std::norm(frame[w]));
      const double sfm = SfmDb(power);
      const double alpha = Tonality(sfm);
      const double offset = Offset(alpha, i + 1);
      const double thr = SpreadThreshold(c[i], offset);
      const double renorm = thr / model.gain[i];
      a.band_power(r, col) = b[i];
      a.spread_power(r, col) = c[i];
      a.sfm_db(r, col) = sfm;
      a.alpha(r, col) = alpha;
      a.offset_db(r, col) = offset;
      a.spread_threshold(r, col) = thr;
      a.renormalized(r, col) = renorm;
      a.threshold(r, col) = std::max(renorm, model.abs_threshold[i]);
    }
  }
  return a;
}

inline BarkAnalysis Analyze(const Spectrogram& spec, const BarkBandLayout& layout) {
  return Analyze(spec, MaskingModel(layout));
}

}  // namespace pe_audio

#endif  // PE_AUDIO_PSYCHOACOUSTIC_HPP_
