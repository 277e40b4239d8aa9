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

// Synthetic signals and scratch-directory helpers shared by the test suites.

#ifndef PE_AUDIO_TESTS_TEST_SUPPORT_HPP_
#define PE_AUDIO_TESTS_TEST_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>

#include "pe_audio/signal_io.hpp"

namespace pe_audio::testing {

inline AudioBuffer Sine(double hz, double amplitude, double seconds,
                        int sample_rate = 22050, double phase = 0.0) {
  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  buf.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    buf.samples[i] = amplitude * std::sin(2.0 * std::numbers::pi * hz *
                                              static_cast<double>(i) / sample_rate +
                                          phase);
  }
  return buf;
}

inline AudioBuffer WhiteNoise(double amplitude, double seconds, std::uint64_t seed,
                              int sample_rate = 22050) {
  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-amplitude, amplitude);
  buf.samples.resize(n);
  for (double& s : buf.samples) s = dist(rng);
  return buf;
}

inline AudioBuffer Silence(double seconds, int sample_rate = 22050) {
  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  buf.samples.assign(static_cast<std::size_t>(seconds * sample_rate), 0.0);
  return buf;
}

// Sung-vowel stand-in: harmonics of a slowly gliding f0 with 1/h rolloff and
// a -40 dB noise floor, normalized to `peak`.
inline AudioBuffer VoicedSignal(double f0, double seconds, std::uint64_t seed,
                                int sample_rate = 22050, double peak = 0.9) {
  AudioBuffer buf;
  buf.sample_rate = sample_rate;
  const auto n = static_cast<std::size_t>(seconds * sample_rate);
  buf.samples.assign(n, 0.0);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.01);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double f = f0 * (1.0 + 0.02 * std::sin(2.0 * std::numbers::pi * 5.0 * t));
    phase += 2.0 * std::numbers::pi * f / sample_rate;
    double v = 0.0;
    for (int h = 1; h * f0 < 0.45 * sample_rate && h <= 30; ++h) {
      v += std::sin(h * phase) / h;
    }
    buf.samples[i] = v + noise(rng);
  }
  double max_abs = 0.0;
  for (double s : buf.samples) max_abs = std::max(max_abs, std::abs(s));
  for (double& s : buf.samples) s *= peak / max_abs;
  return buf;
}

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("pe_audio_test_" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace pe_audio::testing

#endif  // PE_AUDIO_TESTS_TEST_SUPPORT_HPP_
