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

// Short-time Fourier analysis, mel filterbank, mel-cepstrum and Griffin-Lim
// reconstruction. All spectra are one-sided: fft_size / 2 + 1 bins per frame.

#ifndef PE_AUDIO_SPECTRAL_HPP_
#define PE_AUDIO_SPECTRAL_HPP_

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "pe_audio/error.hpp"
#include "pe_audio/signal_io.hpp"

namespace pe_audio {

using RealMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexMatrix = Eigen::Matrix<std::complex<double>, Eigen::Dynamic,
                                    Eigen::Dynamic, Eigen::RowMajor>;

enum class WindowKind { kHann, kHamming, kRectangular };

inline constexpr std::size_t kDefaultFftSize = 1024;
// 661 samples at 22050 Hz is 29.98 ms, the closest integer hop to 30 ms.
inline constexpr std::size_t kDefaultHop = 661;
inline constexpr std::size_t kDefaultMelBins = 80;
inline constexpr std::size_t kDefaultCepstralCoeffs = 25;
inline constexpr double kLogMelFloor = 1e-10;

struct StftConfig {
  std::size_t fft_size = kDefaultFftSize;
  std::size_t hop = kDefaultHop;
  WindowKind window = WindowKind::kHann;
  int sample_rate = kDefaultSampleRate;

  std::size_t bins() const { return fft_size / 2 + 1; }
  double bin_hz() const {
    return static_cast<double>(sample_rate) / static_cast<double>(fft_size);
  }
  double nyquist() const { return sample_rate / 2.0; }

  void Validate() const {
    if (fft_size < 2 || (fft_size & (fft_size - 1)) != 0) {
      throw Error(ErrorKind::kInvalidConfig,
                  "fft_size must be a power of two >= 2, got " +
                      std::to_string(fft_size));
    }
    if (hop < 1 || hop > fft_size) {
      throw Error(ErrorKind::kInvalidConfig,
                  "hop must be in [1, fft_size], got " + std::to_string(hop));
    }
    if (sample_rate <= 0) {
      throw Error(ErrorKind::kInvalidConfig,
                  "sample_rate must be positive, got " +
                      std::to_string(sample_rate));
    }
  }
};

inline std::vector<double> MakeWindow(WindowKind kind, std::size_t n) {
  std::vector<double> w(n, 1.0);
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t i = 0; i < n; ++i) {
    double phase = two_pi * static_cast<double>(i) / static_cast<double>(n);
    switch (kind) {
      case WindowKind::kHann: w[i] = 0.5 - 0.5 * std::cos(phase); break;
      case WindowKind::kHamming: w[i] = 0.54 - 0.46 * std::cos(phase); break;
      case WindowKind::kRectangular: break;
    }
  }
  return w;
}

inline WindowKind ParseWindow(const std::string& name) {
  if (name == "hann") return WindowKind::kHann;
  if (name == "hamming") return WindowKind::kHamming;
  if (name == "rect" || name == "rectangular") return WindowKind::kRectangular;
  throw Error(ErrorKind::kInvalidConfig, "unknown window '" + name + "'");
}

struct Spectrogram {
  ComplexMatrix frames;  // T x bins
  StftConfig config;

  std::size_t num_frames() const { return static_cast<std::size_t>(frames.rows()); }
  std::size_t num_bins() const { return static_cast<std::size_t>(frames.cols()); }

  RealMatrix Magnitude() const { return frames.cwiseAbs(); }
  RealMatrix Power() const { return frames.cwiseAbs2(); }
  RealMatrix Phase() const {
    return frames.unaryExpr([](const std::complex<double>& z) {
      return std::arg(z);
    });
  }
};

struct MelSpectrogram {
  RealMatrix frames;  // T x n_mels
  std::size_t n_mels() const { return static_cast<std::size_t>(frames.cols()); }
};

inline Spectrogram Stft(const AudioBuffer& buf, const StftConfig& cfg) {
  cfg.Validate();
  const std::size_t n = cfg.fft_size;
  if (buf.samples.size() < n) {
    throw Error(ErrorKind::kBufferTooShort,
                std::to_string(buf.samples.size()) + " samples < fft_size " +
                    std::to_string(n));
  }
  const std::size_t frames = FrameCount(buf.samples.size(), n, cfg.hop);
  const std::size_t bins = cfg.bins();
  const auto window = MakeWindow(cfg.window, n);

  Spectrogram spec;
  spec.config = cfg;
  spec.config.sample_rate = buf.sample_rate;
  spec.frames.resize(static_cast<Eigen::Index>(frames),
                     static_cast<Eigen::Index>(bins));

  Eigen::FFT<double> fft;
  std::vector<double> segment(n);
  std::vector<std::complex<double>> full;
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = buf.samples.data() + t * cfg.hop;
    for (std::size_t i = 0; i < n; ++i) segment[i] = src[i] * window[i];
    fft.fwd(full, segment);
    for (std::size_t k = 0; k < bins; ++k) {
      spec.frames(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) =
          full[k];
    }
  }
  return spec;
}

// Least-squares inverse: windowed overlap-add divided by the summed squared
// window. Samples no window covers come out as zero.
inline AudioBuffer Istft(const ComplexMatrix& frames, const StftConfig& cfg) {
  cfg.Validate();
  const std::size_t n = cfg.fft_size;
  const std::size_t bins = cfg.bins();
  if (static_cast<std::size_t>(frames.cols()) != bins) {
    throw Error(ErrorKind::kShapeMismatch,
                "expected " + std::to_string(bins) + " bins");
  }
  const auto num_frames = static_cast<std::size_t>(frames.rows());
  AudioBuffer out;
  out.sample_rate = cfg.sample_rate;
  if (num_frames == 0) return out;

  const std::size_t length = (num_frames - 1) * cfg.hop + n;
  const auto window = MakeWindow(cfg.window, n);
  std::vector<double> acc(length, 0.0);
  std::vector<double> norm(length, 0.0);

  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> full(n);
  std::vector<std::complex<double>> time;
  for (std::size_t t = 0; t < num_frames; ++t) {
    const auto row = static_cast<Eigen::Index>(t);
    for (std::size_t k = 0; k < bins; ++k) {
      full[k] = frames(row, static_cast<Eigen::Index>(k));
    }
    for (std::size_t k = bins; k < n; ++k) full[k] = std::conj(full[n - k]);
    fft.inv(time, full);
    const std::size_t offset = t * cfg.hop;
    for (std::size_t i = 0; i < n; ++i) {
      acc[offset + i] += window[i] * time[i].real();
      norm[offset + i] += window[i] * window[i];
    }
  }
  out.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i) {
    out.samples[i] = norm[i] > 1e-12 ? acc[i] / norm[i] : 0.0;
  }
  return out;
}

inline double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double MelToHz(double mel) {
  return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

// Triangular filters with unit peak, centers evenly spaced on the mel scale
// between 0 Hz and Nyquist. Rows are filters, columns one-sided FFT bins.
inline RealMatrix MelFilterbank(const StftConfig& cfg, std::size_t n_mels) {
  if (n_mels < 1) throw Error(ErrorKind::kInvalidConfig, "n_mels must be >= 1");
  const std::size_t bins = cfg.bins();
  const double mel_max = HzToMel(cfg.nyquist());
  std::vector<double> edges(n_mels + 2);
  for (std::size_t m = 0; m < edges.size(); ++m) {
    edges[m] = MelToHz(mel_max * static_cast<double>(m) /
                       static_cast<double>(n_mels + 1));
  }
  RealMatrix fb = RealMatrix::Zero(static_cast<Eigen::Index>(n_mels),
                                   static_cast<Eigen::Index>(bins));
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.bin_hz();
      double w = 0.0;
      if (f > lo && f <= mid) {
        w = (f - lo) / (mid - lo);
      } else if (f > mid && f < hi) {
        w = (hi - f) / (hi - mid);
      }
      fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = w;
    }
  }
  return fb;
}

// Applies the filterbank to a T x bins power matrix.
inline MelSpectrogram MelFromPower(const RealMatrix& power,
                                   const RealMatrix& filterbank) {
  if (power.cols() != filterbank.cols()) {
    throw Error(ErrorKind::kShapeMismatch, "power bins do not match filterbank");
  }
  return MelSpectrogram{power * filterbank.transpose()};
}

inline MelSpectrogram ComputeMelSpectrogram(const Spectrogram& spec,
                                            std::size_t n_mels) {
  return MelFromPower(spec.Power(), MelFilterbank(spec.config, n_mels));
}

// Orthonormal DCT-II matrix, rows are basis vectors.
inline RealMatrix DctMatrix(std::size_t size) {
  RealMatrix d(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(size));
  const double m = static_cast<double>(size);
  for (std::size_t k = 0; k < size; ++k) {
    const double scale = k == 0 ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m);
    for (std::size_t i = 0; i < size; ++i) {
      d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          scale * std::cos(std::numbers::pi * static_cast<double>(k) *
                           (static_cast<double>(i) + 0.5) / m);
    }
  }
  return d;
}

// T x n_coeffs cepstra: orthonormal DCT-II of log(mel + 1e-10), truncated.
inline RealMatrix MelCepstrum(const MelSpectrogram& mel,
                              std::size_t n_coeffs = kDefaultCepstralCoeffs) {
  const std::size_t n_mels = mel.n_mels();
  if (n_coeffs < 1 || n_coeffs > n_mels) {
    throw Error(ErrorKind::kInvalidConfig,
                "n_coeffs must be in [1, n_mels], got " +
                    std::to_string(n_coeffs));
  }
  RealMatrix log_mel = (mel.frames.array() + kLogMelFloor).log().matrix();
  RealMatrix dct = DctMatrix(n_mels).topRows(static_cast<Eigen::Index>(n_coeffs));
  return log_mel * dct.transpose();
}

// Iterative phase retrieval from magnitudes. Starts from uniform random phase
// drawn from `seed`; `iters` rounds of istft -> stft -> keep phase.
inline AudioBuffer GriffinLim(const RealMatrix& magnitude, const StftConfig& cfg,
                              std::size_t iters, std::uint64_t seed = 42) {
  cfg.Validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, 2.0 * std::numbers::pi);
  ComplexMatrix estimate(magnitude.rows(), magnitude.cols());
  for (Eigen::Index t = 0; t < magnitude.rows(); ++t) {
    for (Eigen::Index k = 0; k < magnitude.cols(); ++k) {
      estimate(t, k) = std::polar(magnitude(t, k), phase_dist(rng));
    }
  }
  for (std::size_t it = 0; it < iters; ++it) {
    AudioBuffer y = Istft(estimate, cfg);
    Spectrogram s = Stft(y, cfg);
    for (Eigen::Index t = 0; t < magnitude.rows(); ++t) {
      for (Eigen::Index k = 0; k < magnitude.cols(); ++k) {
        const std::complex<double> z = s.frames(t, k);
        const double mag = std::abs(z);
        if (mag > 0.0) {
          estimate(t, k) = magnitude(t, k) * (z / mag);
        } else {
          estimate(t, k) = std::polar(magnitude(t, k), std::arg(estimate(t, k)));
        }
      }
    }
  }
  return Istft(estimate, cfg);
}

// ---------------------------------------------------------------------------
// Spectrogram serialization.
//
// CSV: one frame per line, bins written as "re,im" pairs.
// Binary: "PESP" magic, u32 frames, u32 bins, then frames*bins (re, im) pairs
// of little-endian f64.

inline void WriteSpectrogramCsv(std::ostream& out, const ComplexMatrix& frames) {
  out << std::setprecision(17);
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    for (Eigen::Index k = 0; k < frames.cols(); ++k) {
      if (k > 0) out << ',';
      out << frames(t, k).real() << ',' << frames(t, k).imag();
    }
    out << '\n';
  }
}

inline ComplexMatrix ReadSpectrogramCsv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> values;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw Error(ErrorKind::kCorruptHeader, "bad CSV cell '" + cell + "'");
      }
    }
    if (values.size() % 2 != 0) {
      throw Error(ErrorKind::kShapeMismatch, "odd value count in CSV row");
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      throw Error(ErrorKind::kShapeMismatch, "ragged CSV rows");
    }
    rows.push_back(std::move(values));
  }
  const Eigen::Index bins =
      rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size() / 2);
  ComplexMatrix frames(static_cast<Eigen::Index>(rows.size()), bins);
  for (std::size_t t = 0; t < rows.size(); ++t) {
    for (Eigen::Index k = 0; k < bins; ++k) {
      frames(static_cast<Eigen::Index>(t), k) = {rows[t][2 * k], rows[t][2 * k + 1]};
    }
  }
  return frames;
}

inline std::vector<unsigned char> EncodeSpectrogramBinary(
    const ComplexMatrix& frames) {
  std::vector<unsigned char> out;
  out.reserve(12 + static_cast<std::size_t>(frames.size()) * 16);
  detail::WriteTag(out, "PESP");
  detail::WriteU32(out, static_cast<std::uint32_t>(frames.rows()));
  detail::WriteU32(out, static_cast<std::uint32_t>(frames.cols()));
  auto put = [&out](double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, sizeof(u));
    for (int i = 0; i < 8; ++i) {
      out.push_back(static_cast<unsigned char>((u >> (8 * i)) & 0xff));
    }
  };
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    for (Eigen::Index k = 0; k < frames.cols(); ++k) {
      put(frames(t, k).real());
      put(frames(t, k).imag());
    }
  }
  return out;
}

inline ComplexMatrix DecodeSpectrogramBinary(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "PESP", 4) != 0) {
    throw Error(ErrorKind::kCorruptHeader, "missing PESP magic");
  }
  const std::uint32_t rows = detail::ReadU32(bytes.data() + 4);
  const std::uint32_t cols = detail::ReadU32(bytes.data() + 8);
  const std::size_t expected =
      12 + static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols) * 16;
  if (bytes.size() != expected) {
    throw Error(ErrorKind::kCorruptHeader,
                "PESP payload is " + std::to_string(bytes.size()) +
                    " bytes, expected " + std::to_string(expected));
  }
  auto get = [&bytes](std::size_t offset) {
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) {
      u |= static_cast<std::uint64_t>(bytes[offset + i]) << (8 * i);
    }
    double v;
    std::memcpy(&v, &u, sizeof(v));
    return v;
  };
  ComplexMatrix frames(static_cast<Eigen::Index>(rows),
                       static_cast<Eigen::Index>(cols));
  std::size_t offset = 12;
  for (Eigen::Index t = 0; t < frames.rows(); ++t) {
    for (Eigen::Index k = 0; k < frames.cols(); ++k) {
      frames(t, k) = {get(offset), get(offset + 8)};
      offset += 16;
    }
  }
  return frames;
}

}  // namespace pe_audio

#endif  // PE_AUDIO_SPECTRAL_HPP_
