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

#ifndef PE_AUDIO_ERROR_HPP_
#define PE_AUDIO_ERROR_HPP_

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pe_audio {

enum class ErrorKind {
  kFileNotFound,
  kUnsupportedFormat,
  kCorruptHeader,
  kIo,
  kInvalidRate,
  kInvalidConfig,
  kBufferTooShort,
  kShapeMismatch,
  kLengthMismatch,
  kDegenerateThreshold,
  kDivergence,
};

inline const char* ToString(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFileNotFound: return "FileNotFound";
    case ErrorKind::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorKind::kCorruptHeader: return "CorruptHeader";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kInvalidRate: return "InvalidRate";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kBufferTooShort: return "BufferTooShort";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kDegenerateThreshold: return "DegenerateThreshold";
    case ErrorKind::kDivergence: return "Divergence";
  }
  return "Unknown";
}

// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(ToString(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

  // True for the file-system / container-format failures.
  bool is_io() const noexcept {
    return kind_ == ErrorKind::kFileNotFound ||
           kind_ == ErrorKind::kUnsupportedFormat ||
           kind_ == ErrorKind::kCorruptHeader || kind_ == ErrorKind::kIo;
  }

 private:
  ErrorKind kind_;
};

// Raised by toy_fit when the objective stops being finite.
class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, const std::string& message)
      : Error(ErrorKind::kDivergence,
              "step " + std::to_string(step) + ": " + message),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace pe_audio

#endif  // PE_AUDIO_ERROR_HPP_
