// Copyright 2026 The BlindPnP Authors.
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

namespace bpnp {

enum class ErrorKind {
  kInvalidInput,
  kDegenerateGeometry,
  kBehindCamera,
  kNumericFailure,
  kContractViolation,
  kConfiguration,
  kNoSolution,
  kGenerationFailure,
  kIo,
};

const char* ErrorKindName(ErrorKind kind);

// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(ErrorKindName(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Numeric failure raised inside a network; carries the layer that produced
// the first non-finite activation.
class NumericError : public Error {
 public:
  NumericError(int layer, const std::string& what)
      : Error(ErrorKind::kNumericFailure,
              what + " (layer " + std::to_string(layer) + ")"),
        layer_(layer) {}

  int layer() const noexcept { return layer_; }

 private:
  int layer_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void Require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) Fail(kind, what);
}

}  // namespace bpnp
