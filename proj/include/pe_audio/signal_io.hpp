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

// Mono sample buffers, RIFF/WAVE PCM reading and writing, and a linear
// interpolation resampler.
//
// The resampler does no anti-alias filtering. Downsampling content above the
// new Nyquist frequency folds it back into the passband; callers that care
// about alias-free output should low-pass first.

#ifndef PE_AUDIO_SIGNAL_IO_HPP_
#define PE_AUDIO_SIGNAL_IO_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "pe_audio/error.hpp"

namespace pe_audio {

inline constexpr int kDefaultSampleRate = 22050;

struct AudioBuffer {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;
  int channels = 1;

  std::size_t size() const { return samples.size(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

enum class WavEncoding { kPcm16, kFloat32 };

namespace detail {

inline std::uint16_t ReadU16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline std::uint32_t ReadU32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void WriteU16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>(v >> 8));
}

inline void WriteU32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
  }
}

inline void WriteTag(std::vector<unsigned char>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

// Decodes one interleaved sample to [-1, 1] by the format's full-scale value.
inline double DecodeSample(const unsigned char* p, int format_tag, int bits) {
  if (format_tag == 3) {
    float f;
    std::memcpy(&f, p, sizeof(f));
    return static_cast<double>(f);
  }
  switch (bits) {
    case 8:
      return (static_cast<int>(p[0]) - 128) / 128.0;
    case 16:
      return static_cast<std::int16_t>(ReadU16(p)) / 32768.0;
    case 24: {
      std::int32_t v = static_cast<std::int32_t>(
          (static_cast<std::uint32_t>(p[0]) << 8) |
          (static_cast<std::uint32_t>(p[1]) << 16) |
          (static_cast<std::uint32_t>(p[2]) << 24));
      return (v >> 8) / 8388608.0;
    }
    default:
      return 0.0;
  }
}

}  // namespace detail

// Parses an in-memory RIFF/WAVE image. Multi-channel frames are averaged.
inline AudioBuffer DecodeWav(std::span<const unsigned char> bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw Error(ErrorKind::kCorruptHeader, "missing RIFF/WAVE signature");
  }
  int format_tag = -1;
  int channels = 0;
  int sample_rate = 0;
  int bits = 0;
  int block_align = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    std::uint32_t chunk_size = detail::ReadU32(chunk + 4);
    std::size_t body = pos + 8;
    std::size_t available = bytes.size() - body;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (chunk_size < 16 || available < 16) {
        throw Error(ErrorKind::kCorruptHeader, "fmt chunk too small");
      }
      const unsigned char* f = bytes.data() + body;
      format_tag = detail::ReadU16(f);
      channels = detail::ReadU16(f + 2);
      sample_rate = static_cast<int>(detail::ReadU32(f + 4));
      block_align = detail::ReadU16(f + 12);
      bits = detail::ReadU16(f + 14);
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      // Truncated files keep whatever complete frames are present.
      data_size = std::min<std::size_t>(chunk_size, available);
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }

  if (format_tag < 0) throw Error(ErrorKind::kCorruptHeader, "no fmt chunk");
  if (data == nullptr) throw Error(ErrorKind::kCorruptHeader, "no data chunk");
  if (format_tag == 0xFFFE) {
    throw Error(ErrorKind::kUnsupportedFormat, "WAVE_FORMAT_EXTENSIBLE");
  }
  bool pcm_ok = format_tag == 1 && (bits == 8 || bits == 16 || bits == 24);
  bool float_ok = format_tag == 3 && bits == 32;
  if (!pcm_ok && !float_ok) {
    throw Error(ErrorKind::kUnsupportedFormat,
                "format tag " + std::to_string(format_tag) + " with " +
                    std::to_string(bits) + " bits");
  }
  if (channels < 1 || channels > 2) {
    throw Error(ErrorKind::kUnsupportedFormat,
                std::to_string(channels) + " channels");
  }
  if (sample_rate <= 0) {
    throw Error(ErrorKind::kCorruptHeader, "non-positive sample rate");
  }
  int bytes_per_sample = bits / 8;
  if (block_align != bytes_per_sample * channels) {
    throw Error(ErrorKind::kCorruptHeader, "block align mismatch");
  }

  std::size_t frames = data_size / static_cast<std::size_t>(block_align);
  AudioBuffer out;
  out.sample_rate = sample_rate;
  out.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    const unsigned char* frame = data + i * block_align;
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      acc += detail::DecodeSample(frame + c * bytes_per_sample, format_tag,
                                  bits);
    }
    double v = acc / channels;
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::kCorruptHeader, "non-finite float sample");
    }
    out.samples[i] = std::clamp(v, -1.0, 1.0);
  }
  return out;
}

inline AudioBuffer LoadWav(const std::filesystem::path& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Error(ErrorKind::kFileNotFound, path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return DecodeWav(bytes);
}

inline std::vector<unsigned char> EncodeWav(const AudioBuffer& buf,
                                            WavEncoding encoding) {
  const int bits = encoding == WavEncoding::kPcm16 ? 16 : 32;
  const int bytes_per_sample = bits / 8;
  const auto data_size =
      static_cast<std::uint32_t>(buf.samples.size() * bytes_per_sample);
  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  detail::WriteTag(out, "RIFF");
  detail::WriteU32(out, 36 + data_size);
  detail::WriteTag(out, "WAVE");
  detail::WriteTag(out, "fmt ");
  detail::WriteU32(out, 16);
  detail::WriteU16(out, encoding == WavEncoding::kPcm16 ? 1 : 3);
  detail::WriteU16(out, 1);
  detail::WriteU32(out, static_cast<std::uint32_t>(buf.sample_rate));
  detail::WriteU32(out,
                   static_cast<std::uint32_t>(buf.sample_rate * bytes_per_sample));
  detail::WriteU16(out, static_cast<std::uint16_t>(bytes_per_sample));
  detail::WriteU16(out, static_cast<std::uint16_t>(bits));
  detail::WriteTag(out, "data");
  detail::WriteU32(out, data_size);
  for (double s : buf.samples) {
    if (encoding == WavEncoding::kPcm16) {
      double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
      auto v = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
      detail::WriteU16(out, static_cast<std::uint16_t>(v));
    } else {
      float f = static_cast<float>(s);
      std::uint32_t u;
      std::memcpy(&u, &f, sizeof(u));
      detail::WriteU32(out, u);
    }
  }
  return out;
}

inline void SaveWav(const std::filesystem::path& path, const AudioBuffer& buf,
                    WavEncoding encoding = WavEncoding::kPcm16) {
  auto bytes = EncodeWav(buf, encoding);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::kIo, "short write to " + path.string());
}

// Output sample j sits at input position j * source / target; the position is
// kept as an exact rational so integer ratios land on input samples exactly.
inline AudioBuffer Resample(const AudioBuffer& buf, int target_rate) {
  if (target_rate <= 0) {
    throw Error(ErrorKind::kInvalidRate, std::to_string(target_rate));
  }
  if (buf.sample_rate <= 0) {
    throw Error(ErrorKind::kInvalidRate,
                "source rate " + std::to_string(buf.sample_rate));
  }
  if (target_rate == buf.sample_rate) return buf;

  const auto src = static_cast<std::uint64_t>(buf.sample_rate);
  const auto dst = static_cast<std::uint64_t>(target_rate);
  const std::size_t n_in = buf.samples.size();
  const auto n_out = static_cast<std::size_t>(n_in * dst / src);

  AudioBuffer out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  for (std::size_t j = 0; j < n_out; ++j) {
    std::uint64_t num = j * src;
    std::size_t i0 = static_cast<std::size_t>(num / dst);
    double frac = static_cast<double>(num % dst) / static_cast<double>(dst);
    double a = buf.samples[i0];
    double b = i0 + 1 < n_in ? buf.samples[i0 + 1] : a;
    out.samples[j] = frac == 0.0 ? a : a + frac * (b - a);
  }
  return out;
}

// Frames of `frame_length` samples advanced by `hop`; zero if the buffer is
// shorter than one frame.
inline std::size_t FrameCount(std::size_t length, std::size_t frame_length,
                              std::size_t hop) {
  if (length < frame_length || hop == 0) return 0;
  return 1 + (length - frame_length) / hop;
}

}  // namespace pe_audio

#endif  // PE_AUDIO_SIGNAL_IO_HPP_
