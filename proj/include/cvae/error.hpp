// Copyright 2026 The cvae Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>

namespace cvae {

/// Error categories surfaced through the C API as distinct status codes.
enum class ErrorKind {
  kInvalidArgument,  // bad shapes, out-of-range settings, usage mistakes
  kFormat,           // malformed files (magic, truncation, parse errors)
  kIo,               // unreadable or unwritable paths
  kNumeric,          // non-finite losses or parameters
  kUnsupported,      // operation refused for this model configuration
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace cvae
